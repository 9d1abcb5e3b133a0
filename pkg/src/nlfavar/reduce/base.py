from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import ParameterError

REDUCER_KINDS = ("pca", "lle", "autoencoder")
ACTIVATIONS = ("relu", "tanh", "linear")


@dataclass(frozen=True)
class AutoencoderSpec:
    """Architecture and training settings for the autoencoder reducer.

    ``hidden_sizes="auto"`` downsizes evenly from the input width to ``q``
    over three hidden layers, which is what the defaults (126, 86, 46) amount
    to for a panel of about 160 series.
    """

    hidden_sizes: tuple = (126, 86, 46)
    activation: str = "relu"
    epochs: int = 100
    minibatch: int = 24
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if self.epochs < 1 or self.minibatch < 1:
            raise ParameterError("epochs and minibatch must be positive")
        if self.hidden_sizes != "auto":
            object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
            h = self.hidden_sizes
            if any(x < 1 for x in h) or any(a <= b for a, b in zip(h, h[1:])):
                raise ParameterError(f"hidden sizes must be positive and strictly decreasing, got {h}")

    def resolve_hidden(self, n_inputs, q, n_layers=3):
        if self.hidden_sizes == "auto":
            sizes = np.linspace(n_inputs, q, n_layers + 2)[1:-1]
            return tuple(int(round(s)) for s in sizes)
        if self.hidden_sizes and self.hidden_sizes[-1] <= q:
            raise ParameterError(f"last hidden layer ({self.hidden_sizes[-1]}) must exceed q={q}")
        return self.hidden_sizes


@dataclass(frozen=True)
class ReducerSpec:
    kind: str = "pca"
    q: int = 5
    lle_k: int = None
    lle_candidates: tuple = (5, 8, 10, 15, 20, 30)
    ae: AutoencoderSpec = field(default_factory=AutoencoderSpec)

    def __post_init__(self):
        if self.kind not in REDUCER_KINDS:
            raise ParameterError(f"unknown reducer {self.kind!r}; expected one of {REDUCER_KINDS}")
        if self.q < 1:
            raise ParameterError("q must be a positive integer")
        if self.lle_k is not None and self.lle_k <= self.q:
            raise ParameterError(f"lle_k={self.lle_k} must exceed q={self.q}")

    def to_dict(self):
        return asdict(self)


@dataclass
class FactorSet:
    """T x Q factor matrix plus provenance.

    ``model`` is the fitted reducer; ``model.transform(rows)`` maps new
    standardized panel rows into factor space with the same normalization.
    """

    factors: np.ndarray
    spec: ReducerSpec
    explained_variance: np.ndarray = None
    loadings: np.ndarray = None
    training_loss_curve: np.ndarray = None
    model: object = field(default=None, repr=False)
    info: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.factors.shape[0]

    @property
    def Q(self):
        return self.factors.shape[1]

    def provenance(self):
        out = {"reducer": self.spec.to_dict(), "T": self.T, "Q": self.Q}
        if self.explained_variance is not None:
            out["explained_variance"] = [float(v) for v in self.explained_variance]
        out.update(self.info)
        return out


def as_matrix(data):
    """Accept a Panel or an array-like and return a float 2-D array."""
    values = getattr(data, "values", data)
    X = np.asarray(values, dtype=float)
    if X.ndim != 2:
        raise ParameterError("expected a 2-D T x N matrix")
    return X


def unit_scale(F):
    """Center columns and scale to unit sample variance; returns (F, mean, std)."""
    mean = F.mean(axis=0)
    G = F - mean
    std = G.std(axis=0, ddof=1)
    std = np.where(std > 0, std, 1.0)
    return G / std, mean, std
