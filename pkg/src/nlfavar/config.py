"""Run configuration: nested sections read from and written to YAML."""
from dataclasses import asdict, dataclass, field, fields, is_dataclass

import yaml

from .errors import ParameterError

MODELS = ("linear", "lle", "ae")
SCHEMES = ("policy", "uncertainty")
DEFAULT_TARGETS = ("GDPC1", "UNRATE", "GDPCTPI", "HOUST", "S&P 500", "GS1")


@dataclass
class DataConfig:
    path: str = None
    metadata: str = None  # sidecar CSV; None uses the bundled FRED-QD table
    start_date: str = "1965-01-01"
    end_date: str = "2019-10-01"
    factor_source: str = "slow"  # factors for the policy scheme come from slow series


@dataclass
class ReducerConfig:
    q: int = 5
    lle_k: int = None
    lle_candidates: list = field(default_factory=lambda: [5, 8, 10, 15, 20, 30])
    hidden_sizes: object = field(default_factory=lambda: [126, 86, 46])
    activation: str = "relu"
    epochs: int = 100
    minibatch: int = 24
    learning_rate: float = 1e-3


@dataclass
class VarConfig:
    p: int = 4
    S: int = 3000
    burn: int = 2000
    xi1: float = 0.04
    xi2: float = 0.0016


@dataclass
class IrfConfig:
    horizons: int = 16
    policy_shock: float = -1.0
    uncertainty_shock: float = 0.25
    targets: list = field(default_factory=lambda: list(DEFAULT_TARGETS))
    original_units: bool = True
    max_radius: float = 1.15


@dataclass
class SimulationConfig:
    replications: int = 20
    T: int = 350
    N: int = 20
    Q: int = 3
    loading_std: float = 0.1
    coef_std: float = 0.1
    clamp_eps: float = 0.1
    burn_in: int = 50


@dataclass
class EvaluationConfig:
    holdout: int = 200
    refit_every: int = 5
    draws: int = 500
    S: int = 500
    burn: int = 500
    p: int = 4
    q: int = 3
    models: list = field(default_factory=lambda: list(MODELS))
    baseline: str = "linear"
    hidden_sizes: object = "auto"
    sim_dir: str = None  # defaults to <out>/simulate


@dataclass
class ImportanceConfig:
    shapley_mode: str = "sampled"
    shapley_budget: int = 100
    snapshot: bool = False  # score from the last period only instead of the sample average
    top: int = 15


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "results"
    model: str = "linear"
    scheme: str = "policy"
    data: DataConfig = field(default_factory=DataConfig)
    reducer: ReducerConfig = field(default_factory=ReducerConfig)
    var: VarConfig = field(default_factory=VarConfig)
    irf: IrfConfig = field(default_factory=IrfConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    importance: ImportanceConfig = field(default_factory=ImportanceConfig)

    def validate(self):
        if self.model not in MODELS:
            raise ParameterError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        bad = [m for m in self.evaluation.models if m not in MODELS]
        if bad:
            raise ParameterError(f"unknown evaluation models {bad}")
        if self.evaluation.baseline not in self.evaluation.models:
            raise ParameterError("the baseline must be one of the evaluated models")
        if self.data.factor_source not in ("slow", "all"):
            raise ParameterError("data.factor_source must be 'slow' or 'all'")
        if self.importance.shapley_mode not in ("exact", "sampled"):
            raise ParameterError("importance.shapley_mode must be 'exact' or 'sampled'")
        return self

    def to_dict(self):
        return asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_yaml())


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ParameterError(f"{where or 'config'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ParameterError(f"unknown keys in {where or 'config'}: {unknown}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        sub = getattr(defaults, name)
        kwargs[name] = _build(type(sub), value, f"{where}.{name}".strip(".")) if is_dataclass(sub) else value
    return cls(**kwargs)


def from_dict(data):
    return _build(RunConfig, data or {}, "").validate()


def from_yaml(text):
    return from_dict(yaml.safe_load(text))


def load_config(path=None):
    if path is None:
        return RunConfig().validate()
    with open(path, encoding="utf-8") as fh:
        return from_yaml(fh.read())
