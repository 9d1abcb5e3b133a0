"""Synthetic panels from a non-linear factor process.

The three latent factors follow

    y_t = A1 (y_{t-1} / clamp(y_{2,t-2})) + A2 (y_{t-1} * y_{3,t-1}) + C u_t,

and the 20 observed series are ``D_t = lam (y_{t-1} * y_{2,t-2}) + v_t``,
where the products and the division scale the whole vector ``y_{t-1}`` by
one scalar, ``u_t ~ N(0, I)`` and ``v_t ~ N(0, I)``.  The scalar divisor is
clamped away from zero, preserving its sign, so the recursion stays finite.
"""
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ParameterError
from .panel import Panel, SeriesMeta, quarterly_dates
from .rng import substream

CRISIS_MULT = 7.0
AFFECTED_MULT = 2.0
CLASSES = ("heavily_affected", "affected", "not_affected")


@dataclass(frozen=True)
class DgpSpec:
    T: int = 350
    N: int = 20
    Q: int = 3
    loading_std: float = 0.1
    coef_std: float = 0.1
    holdout: int = 200
    seed: int = 0
    clamp_eps: float = 0.1
    burn_in: int = 50
    quantiles: tuple = (0.25, 0.75)

    def __post_init__(self):
        if min(self.T, self.N, self.Q) < 1 or self.loading_std < 0 or self.coef_std < 0:
            raise ParameterError("DGP dimensions must be positive and scales non-negative")
        if self.Q < 3:
            raise ParameterError("the factor recursion uses the second and third factors, Q >= 3")
        if not 0 < self.holdout < self.T:
            raise ParameterError("holdout must lie in (0, T)")
        if self.clamp_eps <= 0 or self.burn_in < 0:
            raise ParameterError("clamp_eps must be positive and burn_in non-negative")

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


@dataclass
class DgpSample:
    panel: np.ndarray
    factors: np.ndarray
    spec: DgpSpec
    lam: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    C: np.ndarray
    replication: int = 0

    def to_panel(self, start="1950-01-01"):
        meta = [SeriesMeta(f"D{i + 1}", 1, "slow", "simulated") for i in range(self.panel.shape[1])]
        return Panel(quarterly_dates(start, self.panel.shape[0]), self.panel, meta)

    def factor_panel(self, start="1950-01-01"):
        meta = [SeriesMeta(f"F{i + 1}", 1, "slow", "latent") for i in range(self.factors.shape[1])]
        return Panel(quarterly_dates(start, self.factors.shape[0]), self.factors, meta)


def clamp(x, eps):
    """Sign-preserving clamp of a scalar away from zero; 0 maps to +eps."""
    if abs(x) >= eps:
        return x
    return eps if x >= 0 else -eps


def draw_coefficients(spec, rng):
    N, Q = spec.N, spec.Q
    lam = rng.normal(0.0, spec.loading_std, (N, Q))
    A1 = rng.normal(0.0, spec.coef_std, (Q, Q))
    A2 = rng.normal(0.0, spec.coef_std, (Q, Q))
    np.fill_diagonal(A1, 0.0)
    np.fill_diagonal(A2, 0.0)
    C = np.tril(rng.normal(0.0, spec.coef_std, (Q, Q)), -1) + np.eye(Q)
    return lam, A1, A2, C


def simulate(lam, A1, A2, C, T, burn_in, clamp_eps, rng):
    """Run the recursion; returns (panel, factors) aligned so row t of both refer to period t."""
    Q = C.shape[0]
    N = lam.shape[0]
    total = T + burn_in
    y = np.empty((total + 2, Q))
    y[0] = rng.standard_normal(Q)  # y_{-1}
    y[1] = rng.standard_normal(Q)  # y_0
    u = rng.standard_normal((total, Q))
    v = rng.standard_normal((total, N))
    D = np.empty((total, N))
    for t in range(total):
        prev, prev2 = y[t + 1], y[t]
        y[t + 2] = A1 @ (prev / clamp(prev2[1], clamp_eps)) + A2 @ (prev * prev[2]) + C @ u[t]
        D[t] = lam @ (prev * prev2[1]) + v[t]
    return D[burn_in:], y[2 + burn_in :]


def draw_dgp(spec, replication=0, lam=None, A1=None, A2=None, C=None):
    """One replication of the synthetic panel.

    Coefficients are drawn from the "dgp" substream unless given explicitly.
    A non-finite path is re-simulated once with a fresh noise stream before
    giving up.
    """
    rng = substream(spec.seed, "dgp", replication)
    drawn = draw_coefficients(spec, rng)
    lam, A1, A2, C = [d if given is None else np.asarray(given, float)
                      for d, given in zip(drawn, (lam, A1, A2, C))]
    for attempt in range(2):
        noise = rng if attempt == 0 else substream(spec.seed, "dgp", replication, 1)
        with np.errstate(over="ignore", invalid="ignore"):
            D, F = simulate(lam, A1, A2, C, spec.T, spec.burn_in, spec.clamp_eps, noise)
        if np.all(np.isfinite(D)) and np.all(np.isfinite(F)):
            return DgpSample(D, F, spec, lam, A1, A2, C, replication)
    raise ParameterError(f"replication {replication}: DGP path is non-finite after resampling")


def _deviation_ratio(X, quantiles):
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    lo, med, hi = np.quantile(X, [quantiles[0], 0.5, quantiles[1]], axis=0)
    iqr = hi - lo
    dev = np.abs(X - med)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(iqr > 0, dev / np.where(iqr > 0, iqr, 1.0), np.where(dev > 0, np.inf, 0.0))
    return r


def label_periods(factors, mult=CRISIS_MULT, quantiles=(0.25, 0.75)):
    """Boolean crisis indicator per period: any factor farther than ``mult`` IQRs from its median."""
    return np.any(_deviation_ratio(factors, quantiles) > mult, axis=1)


def period_labels(factors, **kw):
    return np.where(label_periods(factors, **kw), "crisis", "tranquil")


def classify_variables(panel, heavy=CRISIS_MULT, affected=AFFECTED_MULT, quantiles=(0.25, 0.75)):
    """Per-column affectedness class from the largest median deviation in IQR units."""
    r = _deviation_ratio(getattr(panel, "values", panel), quantiles).max(axis=0)
    return np.where(r > heavy, CLASSES[0], np.where(r > affected, CLASSES[1], CLASSES[2]))
