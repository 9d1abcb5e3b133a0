"""Bayesian VAR with a Minnesota prior, estimated equation by equation.

The reduced-form VAR ``y_t = A x_t + e_t``, ``x_t = (y_{t-1}', ..., y_{t-p}', 1)'``
with ``Cov(e_t) = A0^{-1} diag(s) A0^{-1}'`` and ``A0`` unit lower triangular is
estimated in its recursive form

    y_{k,t} = x_t' b_k + sum_{j<k} c_{kj} y_{j,t} + u_{k,t},   u_{k,t} ~ N(0, s_k),

where ``A0[k, j] = -c_{kj}`` and ``B = A0 A``.  Conditional on the shrinkage
scalars the K equations are independent regressions, so each Gibbs sweep
draws ``(b_k, c_k)`` and ``s_k`` one equation at a time.  The Minnesota
variances apply to the lag coefficients ``b_k``; the contemporaneous
coefficients ``c_k`` get independent N(0, 10^2) priors.
"""
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionError, ParameterError, SamplerError
from .rng import substream

logger = logging.getLogger(__name__)

XI3 = 1000.0
A0_PRIOR_VAR = 100.0
IG_SHAPE0 = 0.005
IG_SCALE0 = 0.005


def lag_matrix(y, p):
    """Regressors ``x_t = (y_{t-1}', ..., y_{t-p}', 1)`` for t = p..T-1."""
    y = np.asarray(y, float)
    T, K = y.shape
    if T <= p:
        raise DimensionError(f"need more than p={p} observations, got {T}")
    cols = [y[p - r : T - r] for r in range(1, p + 1)]
    return np.column_stack(cols + [np.ones(T - p)])


@dataclass
class VarData:
    y: np.ndarray
    p: int = 4
    names: tuple = None

    def __post_init__(self):
        self.y = np.asarray(self.y, float)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.p < 1:
            raise ParameterError("lag order must be at least 1")
        if not np.all(np.isfinite(self.y)):
            raise DimensionError("VAR data contain non-finite values")
        if self.names is None:
            self.names = tuple(f"y{i + 1}" for i in range(self.K))
        self.names = tuple(self.names)

    @property
    def K(self):
        return self.y.shape[1]

    @property
    def x(self):
        return lag_matrix(self.y, self.p)

    @property
    def Y(self):
        return self.y[self.p :]


def _ar_residual_variance(series, p=4):
    T = series.shape[0]
    X = lag_matrix(series[:, None], p)
    Y = series[p:]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        return None
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ beta
    dof = max(T - p - X.shape[1], 1)
    return float(resid @ resid / dof)


@dataclass
class MinnesotaPrior:
    """Prior means and hyperparameters; variances depend on (xi1, xi2).

    ``mean`` is K x (Kp+1) in regressor order (lag 1 block, ..., lag p block,
    intercept).
    """

    mean: np.ndarray
    sigma_hat: np.ndarray
    p: int
    xi1: float = 0.04
    xi2: float = 0.0016
    xi3: float = XI3
    a0_var: float = A0_PRIOR_VAR
    hyper_shape: float = 2.0
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.xi1 <= 0 or self.xi2 <= 0:
            raise ParameterError("xi1 and xi2 must be positive")

    @property
    def K(self):
        return self.mean.shape[0]

    def lag_structure(self):
        """(lag r, own mask, cross ratio sigma_i^2/sigma_j^2) for every coefficient, K x Kp."""
        K, p = self.K, self.p
        r = np.repeat(np.arange(1, p + 1), K)[None, :].repeat(K, axis=0).astype(float)
        j = np.tile(np.arange(K), p)[None, :].repeat(K, axis=0)
        i = np.arange(K)[:, None].repeat(K * p, axis=1)
        own = i == j
        ratio = self.sigma_hat[i] / self.sigma_hat[j]
        return r, own, ratio

    def variances(self, xi1=None, xi2=None):
        """Prior variances, K x (Kp+1)."""
        xi1 = self.xi1 if xi1 is None else xi1
        xi2 = self.xi2 if xi2 is None else xi2
        r, own, ratio = self.lag_structure()
        v = np.where(own, xi1 / r**2, xi2 * ratio / r**2)
        return np.column_stack([v, np.full(self.K, self.xi3)])


def build_prior(vardata, stationary=None, xi1=0.04, xi2=0.0016):
    """Minnesota prior for ``vardata``.

    Parameters
    ----------
    stationary : sequence of bool, optional
        Per-variable flags; nonstationary variables get prior mean 1 on their
        own first lag.  Defaults to all stationary.

    The scale ``sigma_hat_i^2`` is the residual variance of an OLS AR(4) fit,
    on first differences for nonstationary variables and on levels otherwise.
    """
    y = vardata.y
    T, K = y.shape
    p = vardata.p
    if T - p < 20:
        raise DimensionError(f"need T - p >= 20 observations for the AR(4) scale estimates, got {T - p}")
    stationary = np.ones(K, bool) if stationary is None else np.asarray(stationary, bool)
    if stationary.shape != (K,):
        raise DimensionError("one stationarity flag per variable is required")
    sig = np.empty(K)
    warnings = []
    for k in range(K):
        s = y[:, k] if stationary[k] else np.diff(y[:, k])
        v = _ar_residual_variance(s, 4) if s.shape[0] > 9 else None
        if v is None or not np.isfinite(v) or v <= 0:
            v = float(np.var(s, ddof=1))
            warnings.append(f"{vardata.names[k]}: AR(4) design singular, using the sample variance")
            logger.warning(warnings[-1])
        if v <= 0:
            v = 1.0
            warnings.append(f"{vardata.names[k]}: zero variance, scale set to 1")
        sig[k] = v
    mean = np.zeros((K, K * p + 1))
    for k in range(K):
        if not stationary[k]:
            mean[k, k] = 1.0
    return MinnesotaPrior(mean, sig, p, xi1=xi1, xi2=xi2, warnings=warnings)


def posterior_moments(ZtZ, Zty, sigma, prior_mean, prior_var):
    """Conditional Normal posterior of a regression with known error variance.

    Returns ``(mean, covariance)`` of ``N(V (Z'y/s + V0^{-1} m0), V)`` with
    ``V = (Z'Z/s + V0^{-1})^{-1}``.
    """
    prec = ZtZ / sigma + np.diag(1.0 / prior_var)
    rhs = Zty / sigma + prior_mean / prior_var
    c = linalg.cho_factor(prec, lower=True)
    return linalg.cho_solve(c, rhs), linalg.cho_solve(c, np.eye(len(rhs)))


def implied_covariance(A0, sigma):
    """Reduced-form error covariance ``A0^{-1} diag(sigma) A0^{-1}'``."""
    A0 = np.asarray(A0, float)
    L = linalg.solve_triangular(A0, np.eye(A0.shape[0]), lower=True, unit_diagonal=True)
    S = (L * np.asarray(sigma, float)) @ L.T
    return 0.5 * (S + S.T)


@dataclass
class BvarPosterior:
    """Retained draws.

    A : (S, K, Kp+1) reduced-form coefficients in regressor order.
    B : (S, K, Kp+1) recursive-form lag coefficients ``A0 A``.
    A0 : (S, K, K) unit lower triangular.
    sigma : (S, K) structural variances.
    xi : (S, 2) shrinkage scalars.
    """

    A: np.ndarray
    B: np.ndarray
    A0: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray
    p: int
    names: tuple
    acceptance: np.ndarray
    burn: int
    seed: int
    proposal_scale: np.ndarray = None

    @property
    def S(self):
        return self.A.shape[0]

    @property
    def K(self):
        return self.A.shape[1]

    def lag_matrices(self, s):
        """Lag coefficient matrices of draw ``s`` as a (p, K, K) array."""
        K = self.K
        return self.A[s, :, : K * self.p].reshape(K, self.p, K).transpose(1, 0, 2)

    def intercept(self, s):
        return self.A[s, :, -1]

    def covariance(self, s):
        return implied_covariance(self.A0[s], self.sigma[s])

    def companion(self, s):
        K, p = self.K, self.p
        C = np.zeros((K * p, K * p))
        C[:K] = self.A[s, :, : K * p]
        C[K:, : K * (p - 1)] = np.eye(K * (p - 1))
        return C

    def manifest(self):
        return {
            "S": int(self.S),
            "burn": int(self.burn),
            "seed": int(self.seed),
            "p": int(self.p),
            "K": int(self.K),
            "names": list(self.names),
            "acceptance_rates": [float(a) for a in self.acceptance],
        }

    def save(self, stem):
        """Write ``stem.npz`` with the draws and ``stem.json`` with the manifest."""
        np.savez_compressed(f"{stem}.npz", A=self.A, B=self.B, A0=self.A0, sigma=self.sigma, xi=self.xi)
        with open(f"{stem}.json", "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, stem):
        with open(f"{stem}.json", encoding="utf-8") as fh:
            man = json.load(fh)
        with np.load(f"{stem}.npz") as z:
            return cls(
                z["A"], z["B"], z["A0"], z["sigma"], z["xi"], man["p"], tuple(man["names"]),
                np.asarray(man["acceptance_rates"]), man["burn"], man["seed"],
            )

    def predictive(self, history, rng, draws=None):
        """One-step posterior-predictive draws given the last ``p`` rows of data.

        ``history`` is (p, K) with the most recent row last; returns (len(draws), K).
        """
        idx = np.arange(self.S) if draws is None else np.asarray(draws)
        x = np.concatenate([history[::-1].ravel(), [1.0]])
        mean = self.A[idx] @ x
        z = rng.standard_normal((idx.size, self.K)) * np.sqrt(self.sigma[idx])
        eps = np.linalg.solve(self.A0[idx], z[..., None])[..., 0]
        return mean + eps


def _draw_normal(ZtZ, Zty, sigma, m, v, rng, it):
    prec = ZtZ / sigma
    prec.flat[:: prec.shape[0] + 1] += 1.0 / v
    rhs = Zty / sigma + m / v
    jitter = 0.0
    for _ in range(4):
        try:
            L = np.linalg.cholesky(prec if jitter == 0 else prec + jitter * np.eye(len(rhs)))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0 else jitter * 10
    else:
        raise SamplerError("posterior precision is not positive definite", it)
    mean = linalg.cho_solve((L, True), rhs)
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(len(rhs)), lower=False)


def _log_gaussian_scale(ss, n, xi, shape, scale):
    """log N-density of n coefficients with variances xi / w, plus a Gamma(shape, scale) hyperprior."""
    return -0.5 * (n * np.log(xi) + ss / xi) + (shape - 1.0) * np.log(xi) - xi / scale


def gibbs_sample(vardata, prior, S=3000, burn=2000, seed=0, sample_xi=True, adapt_every=25, rng=None):
    """Run the sampler and return the retained draws.

    Parameters
    ----------
    vardata : VarData
    prior : MinnesotaPrior
        ``prior.xi1``/``prior.xi2`` are the starting values (fixed values when
        ``sample_xi`` is False).
    S, burn : int
        Retained draws and burn-in iterations.  Proposal scales of the two
        Metropolis steps adapt during burn-in only.
    """
    if S < 1 or burn < 0:
        raise ParameterError("S must be positive and burn non-negative")
    rng = rng if rng is not None else substream(seed, "sampler")
    x, Y = vardata.x, vardata.Y
    n, m = x.shape
    K, p = vardata.K, vardata.p
    if prior.mean.shape != (K, m):
        raise DimensionError("prior does not match the VAR dimensions")

    # per-equation sufficient statistics of the recursive regressions
    Zs = [np.column_stack([x, Y[:, :k]]) for k in range(K)]
    ZtZ = [Z.T @ Z for Z in Zs]
    Zty = [Z.T @ Y[:, k] for k, Z in enumerate(Zs)]
    yty = [float(Y[:, k] @ Y[:, k]) for k in range(K)]

    r, own, ratio = prior.lag_structure()
    w_own = (r**2)[own]
    w_cross = (r**2 / ratio)[~own]
    ln_w = 0.5 * (np.log(w_own).sum() + np.log(w_cross).sum())  # constant, kept for clarity
    del ln_w
    m_lag = prior.mean[:, : K * p]

    xi = np.array([prior.xi1, prior.xi2], float)
    hyper_scale = np.array([prior.xi1, prior.xi2], float)
    scale = 0.3 * xi
    accepted = np.zeros(2)
    window = np.zeros(2)

    sigma = np.empty(K)
    for k in range(K):
        coef, *_ = np.linalg.lstsq(Zs[k], Y[:, k], rcond=None)
        res = Y[:, k] - Zs[k] @ coef
        sigma[k] = max(float(res @ res) / max(n - m - k, 1), 1e-8)

    total = burn + S
    out_B = np.empty((S, K, m))
    out_A0 = np.empty((S, K, K))
    out_sig = np.empty((S, K))
    out_xi = np.empty((S, 2))
    coefs = [None] * K
    e_shape = n / 2.0 + IG_SHAPE0

    for it in range(total):
        v_all = prior.variances(xi[0], xi[1])
        for k in range(K):
            mk = np.concatenate([prior.mean[k], np.zeros(k)])
            vk = np.concatenate([v_all[k], np.full(k, prior.a0_var)])
            a = _draw_normal(ZtZ[k], Zty[k], sigma[k], mk, vk, rng, it)
            coefs[k] = a
            ssr = yty[k] - 2.0 * a @ Zty[k] + a @ ZtZ[k] @ a
            if ssr <= 1e-12 * max(yty[k], 1.0):
                res = Y[:, k] - Zs[k] @ a
                ssr = float(res @ res)
            d = ssr / 2.0 + IG_SCALE0
            sigma[k] = d / rng.gamma(e_shape)
            if not np.isfinite(sigma[k]) or sigma[k] <= 0:
                raise SamplerError(f"structural variance of equation {k + 1} diverged", it)

        if sample_xi:
            lag = np.array([c[: K * p] for c in coefs]) - m_lag
            ss = ((lag**2)[own] * w_own).sum(), ((lag**2)[~own] * w_cross).sum()
            counts = own.sum(), (~own).sum()
            for h in range(2):
                if counts[h] == 0:
                    # no coefficients inform this scalar; sample from its hyperprior
                    xi[h] = rng.gamma(prior.hyper_shape, hyper_scale[h])
                    continue
                prop = xi[h] + scale[h] * rng.standard_normal()
                ok = False
                if prop > 0:
                    cur = _log_gaussian_scale(ss[h], counts[h], xi[h], prior.hyper_shape, hyper_scale[h])
                    new = _log_gaussian_scale(ss[h], counts[h], prop, prior.hyper_shape, hyper_scale[h])
                    ok = np.log(rng.uniform()) < new - cur
                if ok:
                    xi[h] = prop
                if it < burn:
                    window[h] += ok
                else:
                    accepted[h] += ok
            if it < burn and (it + 1) % adapt_every == 0:
                rate = window / adapt_every
                scale = np.where(rate < 0.15, scale * 0.7, np.where(rate > 0.30, scale * 1.4, scale))
                window[:] = 0

        if it >= burn:
            j = it - burn
            A0 = np.eye(K)
            Bm = np.empty((K, m))
            for k in range(K):
                Bm[k] = coefs[k][:m]
                A0[k, :k] = -coefs[k][m:]
            out_B[j], out_A0[j], out_sig[j], out_xi[j] = Bm, A0, sigma, xi

    A = np.linalg.solve(out_A0, out_B)
    acc = accepted / S if sample_xi else np.full(2, np.nan)
    return BvarPosterior(A, out_B, out_A0, out_sig, out_xi, p, vardata.names, acc, burn, seed, scale)
