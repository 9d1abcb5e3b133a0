"""Shock identification, impulse responses and the factor-to-observable mapping."""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSeriesError, DimensionError, IdentificationError, ParameterError
from .bvar import lag_matrix

QUANTILES = (0.16, 0.50, 0.84)
MAX_RADIUS = 1.15


@dataclass
class LinearizedLoadings:
    """``theta`` maps VAR variables (rows) to panel series (columns)."""

    theta: np.ndarray
    fitted_residual_variance: np.ndarray
    rank: int = None
    names: tuple = None

    def fitted(self, F):
        return np.asarray(F, float) @ self.theta


def pinv(F):
    """Moore-Penrose pseudoinverse with tolerance ``max(T, Q) * s_max * 1e-12``."""
    F = np.asarray(F, float)
    U, s, Vt = np.linalg.svd(F, full_matrices=False)
    if s.size == 0:
        return np.zeros(F.T.shape), 0
    tol = max(F.shape) * s[0] * 1e-12
    keep = s > tol
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T, int(keep.sum())


def linearize(factors, panel, names=None):
    """Least-squares loadings ``theta = F^+ D`` of the panel on the factors.

    Returns
    -------
    LinearizedLoadings
        Residual variances use the ``T - rank(F)`` degrees-of-freedom convention.
    """
    F = np.asarray(factors, float)
    D = np.asarray(panel, float)
    if F.ndim == 1:
        F = F[:, None]
    if D.ndim == 1:
        D = D[:, None]
    if F.shape[0] != D.shape[0]:
        raise DimensionError("factors and panel must have the same number of rows")
    if F.shape[0] < F.shape[1]:
        raise DimensionError("linearize needs T >= Q")
    P, rank = pinv(F)
    theta = P @ D
    resid = D - F @ theta
    dof = max(F.shape[0] - rank, 1)
    return LinearizedLoadings(theta, (resid**2).sum(axis=0) / dof, rank, names)


def linearize_blocks(Y, D, regressors, names=None):
    """Loadings where each panel column uses only some of the VAR variables.

    Parameters
    ----------
    Y : (T, K) VAR data.
    D : (T, N) panel.
    regressors : sequence of length N
        For every panel column, the VAR-variable indices it loads on.  Rows of
        ``theta`` outside that set are exactly zero.
    """
    Y = np.asarray(Y, float)
    D = np.asarray(D, float)
    K, N = Y.shape[1], D.shape[1]
    if len(regressors) != N:
        raise DimensionError("one regressor set per panel column is required")
    theta = np.zeros((K, N))
    resid_var = np.empty(N)
    groups = {}
    for j, idx in enumerate(regressors):
        groups.setdefault(tuple(sorted(int(i) for i in idx)), []).append(j)
    rank = 0
    for idx, cols in groups.items():
        sub = linearize(Y[:, list(idx)], D[:, cols])
        theta[np.ix_(list(idx), cols)] = sub.theta
        resid_var[cols] = sub.fitted_residual_variance
        rank = max(rank, sub.rank)
    return LinearizedLoadings(theta, resid_var, rank, names)


@dataclass(frozen=True)
class IdentificationScheme:
    kind: str
    shock_index: int
    shock_size: float

    def __post_init__(self):
        if self.kind not in ("recursive_policy", "proxy_first"):
            raise ParameterError(f"unknown identification scheme {self.kind!r}")
        if self.kind == "proxy_first" and self.shock_index != 0:
            raise ParameterError("the proxy scheme shocks the first variable")

    def check(self, K):
        if not 0 <= self.shock_index < K:
            raise ParameterError(f"shock index {self.shock_index} outside 0..{K - 1}")
        if self.kind == "recursive_policy" and self.shock_index != K - 1:
            raise ParameterError("the policy rate must be ordered last")


def policy_scheme(K, shock_size=-1.0):
    return IdentificationScheme("recursive_policy", K - 1, shock_size)


def proxy_scheme(shock_size=0.25):
    return IdentificationScheme("proxy_first", 0, shock_size)


@dataclass
class Identified:
    B: np.ndarray
    impact: np.ndarray


def identify(cov, scheme):
    """Cholesky factor ``B`` of the error covariance and the normalized impact column."""
    cov = np.asarray(cov, float)
    K = cov.shape[0]
    scheme.check(K)
    try:
        B = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise IdentificationError("error covariance is not positive definite") from exc
    j = scheme.shock_index
    impact = B[:, j] * (scheme.shock_size / B[j, j])
    impact[:j] = 0.0
    impact[j] = scheme.shock_size
    return Identified(B, impact)


def propagate(lags, impact, H):
    """Responses ``Phi_h s`` for h = 0..H; ``lags`` is (p, K, K)."""
    lags = np.asarray(lags, float)
    p, K, _ = lags.shape
    out = np.zeros((H + 1, K))
    out[0] = impact
    for h in range(1, H + 1):
        for l in range(1, min(p, h) + 1):
            out[h] += lags[l - 1] @ out[h - l]
    return out


def spectral_radius(companion):
    return float(np.max(np.abs(np.linalg.eigvals(companion)))) if companion.size else 0.0


@dataclass
class IrfResult:
    """Pointwise posterior quantiles, arrays of shape (n_targets, H+1)."""

    variables: tuple
    horizons: np.ndarray
    q16: np.ndarray
    q50: np.ndarray
    q84: np.ndarray
    units: tuple
    n_draws: int
    n_excluded: int
    paths: np.ndarray = field(default=None, repr=False)

    @property
    def excluded_fraction(self):
        total = self.n_draws + self.n_excluded
        return self.n_excluded / total if total else 0.0

    def curve(self, name, which="q50"):
        return getattr(self, which)[self.variables.index(name)]

    def rows(self):
        for i, v in enumerate(self.variables):
            for h in self.horizons:
                yield v, int(h), self.q16[i, h], self.q50[i, h], self.q84[i, h], self.units[i]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variable", "horizon", "q16", "q50", "q84", "units"])
            for v, h, a, b, c, u in self.rows():
                w.writerow([v, h, f"{a:.12g}", f"{b:.12g}", f"{c:.12g}", u])


def irf(posterior, scheme, H=16, loadings=None, targets=None, var_names=None, scales=None,
        max_radius=MAX_RADIUS, keep_paths=False):
    """Impulse responses of VAR variables and panel series to one identified shock.

    Parameters
    ----------
    posterior : BvarPosterior
    scheme : IdentificationScheme
    loadings : LinearizedLoadings, optional
        Maps the K VAR responses to panel series; ``loadings.names`` labels its columns.
    targets : list of str, optional
        VAR variable names or panel mnemonics.  Defaults to all VAR variables.
    scales : dict, optional
        Per-target multipliers (the stored standard deviations) that report
        responses in the units of the transformed series instead of z-scores.
    """
    if H < 0:
        raise ParameterError("H must be non-negative")
    var_names = tuple(var_names or posterior.names)
    panel_names = tuple(loadings.names) if loadings is not None and loadings.names is not None else ()
    targets = list(targets) if targets is not None else list(var_names)
    sel = []
    for t in targets:
        if t in var_names:
            sel.append(("var", var_names.index(t)))
        elif t in panel_names:
            sel.append(("panel", panel_names.index(t)))
        else:
            raise ParameterError(f"unknown target variable {t!r}")
    scheme.check(posterior.K)

    kept, excluded = [], 0
    for s in range(posterior.S):
        if max_radius is not None and spectral_radius(posterior.companion(s)) > max_radius:
            excluded += 1
            continue
        resp = propagate(posterior.lag_matrices(s), identify(posterior.covariance(s), scheme).impact, H)
        cols = np.empty((len(sel), H + 1))
        if any(kind == "panel" for kind, _ in sel):
            mapped = resp @ loadings.theta
        for i, (kind, j) in enumerate(sel):
            cols[i] = resp[:, j] if kind == "var" else mapped[:, j]
        kept.append(cols)
    if not kept:
        raise IdentificationError("every posterior draw was explosive")
    paths = np.stack(kept)
    units = []
    if scales:
        mult = np.array([float(scales.get(t, 1.0)) for t in targets])
        paths = paths * mult[None, :, None]
        units = ["transformed" if t in scales else "standardized" for t in targets]
    else:
        units = ["standardized"] * len(targets)
    q = np.quantile(paths, QUANTILES, axis=0)
    return IrfResult(tuple(targets), np.arange(H + 1), q[0], q[1], q[2], tuple(units),
                     paths.shape[0], excluded, paths if keep_paths else None)


def ewma_log_variance(resid, decay=0.94, init=None):
    """log of ``h_t = decay h_{t-1} + (1 - decay) e_t^2`` started at the sample variance."""
    h = float(np.var(resid, ddof=1)) if init is None else init
    out = np.empty(resid.shape[0])
    for t, e in enumerate(resid):
        h = decay * h + (1.0 - decay) * e * e
        out[t] = h
    return np.log(np.maximum(out, 1e-300)), h


def volatility_panel(data, p=4, decay=0.94):
    """Per-series log-variance paths of one-step AR(p) forecast errors, T x N.

    The first ``p`` periods, which have no forecast error, hold the starting
    variance.
    """
    X = np.asarray(getattr(data, "values", data), float)
    if X.ndim == 1:
        X = X[:, None]
    T, N = X.shape
    if T <= 2 * p + 2:
        raise DimensionError("series too short for the AR forecast errors")
    out = np.empty((T, N))
    for j in range(N):
        Z = lag_matrix(X[:, [j]], p)
        beta, *_ = np.linalg.lstsq(Z, X[p:, j], rcond=None)
        e = X[p:, j] - Z @ beta
        v0 = float(np.var(e, ddof=1))
        if v0 <= 0:
            raise DegenerateSeriesError(f"series {j} has zero forecast-error variance")
        path, _ = ewma_log_variance(e, decay, v0)
        out[:p, j] = np.log(v0)
        out[p:, j] = path
    return out


def uncertainty_index(data, p=4, decay=0.94):
    """First principal component of the volatility panel, standardized.

    Signed so that it correlates positively with the cross-sectional mean
    log variance.
    """
    V = volatility_panel(data, p, decay)
    Vc = V - V.mean(axis=0)
    if not np.any(Vc.std(axis=0) > 0):
        raise DegenerateSeriesError("volatility panel is constant")
    _, vecs = np.linalg.eigh(np.cov(Vc, rowvar=False).reshape(V.shape[1], V.shape[1]))
    idx = Vc @ vecs[:, -1]
    sd = idx.std(ddof=1)
    if not sd > 0:
        raise DegenerateSeriesError("uncertainty index has zero variance")
    idx = (idx - idx.mean()) / sd
    mean_vol = V.mean(axis=1)
    if np.corrcoef(idx, mean_vol)[0, 1] < 0:
        idx = -idx
    return idx
