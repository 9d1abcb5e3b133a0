"""Variable importance for factors: loadings, NPE loadings and Shapley values.

Shapley payoffs use mean replacement: a coalition ``S`` is evaluated by
feeding the predictor the row with every feature outside ``S`` set to its
background mean, so ``phi_0 = f(background mean)``.
"""
import csv
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import linalg

from .errors import AlignmentError, DimensionError, ParameterError
from .reduce.base import as_matrix
from .reduce.lle import RIDGE, embedding_matrix, lle_weights
from .rng import substream

MAX_EXACT = 20
MIN_BUDGET = 100


@dataclass
class ImportanceTable:
    """Nonnegative scores, ``scores[i, q]`` for variable i and factor q."""

    scores: np.ndarray
    names: tuple
    method: str
    paths: np.ndarray = field(default=None, repr=False)  # (T, N, Q) Shapley paths
    phi0: np.ndarray = None
    info: dict = field(default_factory=dict)

    @property
    def Q(self):
        return self.scores.shape[1]

    def permuted(self, alignment):
        """Reorder factors to match a reference model; scores are sign-free."""
        perm = list(alignment.permutation)
        paths = None if self.paths is None else self.paths[:, :, perm] * alignment.signs
        phi0 = None if self.phi0 is None else self.phi0[perm] * alignment.signs
        return ImportanceTable(self.scores[:, perm], self.names, self.method, paths, phi0, dict(self.info))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["factor", "variable", "score"])
            for q in range(self.Q):
                for i, name in enumerate(self.names):
                    w.writerow([q + 1, name, f"{self.scores[i, q]:.12g}"])


def _names(names, n):
    return tuple(names) if names is not None else tuple(f"x{i + 1}" for i in range(n))


def pca_importance(loadings, names=None):
    L = np.asarray(loadings, float)
    return ImportanceTable(np.abs(L), _names(names, L.shape[0]), "pca")


def npe_projection(data, q, k, reg=RIDGE):
    """Linear map ``P`` (N x q) whose embedding ``X P`` best preserves the LLE weights.

    Solves ``X' M X p = lam X' X p`` for the q smallest ``lam`` on the
    centered panel.  Writing ``X = U S V'`` (rank r) and ``p = V S^{-1} g``
    turns it into the symmetric problem ``U' M U g = lam g``, which stays
    well posed when ``X'X`` is singular.
    """
    X = as_matrix(data)
    T, N = X.shape
    Xc = X - X.mean(axis=0)
    Omega, _ = lle_weights(X, k, reg)
    M = embedding_matrix(Omega)
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    r = int(np.sum(s > max(T, N) * s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    if r < q:
        raise DimensionError(f"panel rank {r} is smaller than q={q}")
    Ur = U[:, :r]
    G = Ur.T @ M @ Ur
    evals, g = linalg.eigh(0.5 * (G + G.T), subset_by_index=[0, q - 1])
    P = (Vt[:r].T / s[:r]) @ g
    F = Xc @ P
    if F.shape != (T, q):
        raise DimensionError("NPE embedding has the wrong shape")
    return P, F, evals


def npe_importance(data, q, k, names=None, reg=RIDGE):
    P, F, evals = npe_projection(data, q, k, reg)
    return ImportanceTable(np.abs(P), _names(names, P.shape[0]), "npe",
                           info={"eigenvalues": [float(e) for e in evals], "embedding": F})


def _payoffs(f, row, base, masks, chunk=65536):
    out = []
    for start in range(0, masks.shape[0], chunk):
        m = masks[start : start + chunk]
        out.append(np.asarray(f(np.where(m, row, base)), float))
    v = np.concatenate(out, axis=0)
    return v.reshape(masks.shape[0], -1)


def shapley_exact(f, row, background):
    """Exact Shapley values by enumerating all 2^K coalitions.

    Returns ``(phi, phi0)``; ``phi`` is (K,) for scalar predictors and (K, d)
    for vector-valued ones.
    """
    row = np.asarray(row, float)
    K = row.shape[0]
    if K > MAX_EXACT:
        raise ParameterError(f"exact Shapley values need K <= {MAX_EXACT}, got {K}")
    base = _background_mean(background, K)
    codes = np.arange(2**K)
    masks = ((codes[:, None] >> np.arange(K)) & 1).astype(bool)
    v = _payoffs(f, row, base, masks)
    size = masks.sum(axis=1)
    wsize = np.array([factorial(s) * factorial(K - s - 1) / factorial(K) for s in range(K)])
    phi = np.empty((K, v.shape[1]))
    for k in range(K):
        without = codes[~masks[:, k]]
        phi[k] = (wsize[size[without]][:, None] * (v[without | (1 << k)] - v[without])).sum(axis=0)
    phi0 = v[0]
    scalar = phi.shape[1] == 1 and np.ndim(f(base[None, :])) == 1
    return (phi[:, 0], float(phi0[0])) if scalar else (phi, phi0)


def _background_mean(background, K):
    b = np.asarray(background, float)
    b = b.mean(axis=0) if b.ndim == 2 else b
    if b.shape != (K,):
        raise DimensionError("background must have one column per feature")
    return b


@dataclass
class ShapleyEstimate:
    phi: np.ndarray
    phi0: np.ndarray
    se: np.ndarray
    n_permutations: int


def shapley_sampled(f, row, background, budget=MIN_BUDGET, rng=None, seed=0):
    """Antithetic permutation estimate of the Shapley values.

    ``budget`` is the number of marginal contributions sampled per feature,
    i.e. the number of permutations; each permutation is paired with its
    reverse.  Contributions along a permutation telescope to
    ``f(row) - phi_0``, so efficiency holds exactly for the estimate.
    """
    if budget < MIN_BUDGET:
        raise ParameterError(f"budget must be at least {MIN_BUDGET} evaluations per feature")
    row = np.asarray(row, float)
    K = row.shape[0]
    base = _background_mean(background, K)
    rng = rng if rng is not None else substream(seed, "shapley")
    half = (int(budget) + 1) // 2
    perms = np.array([rng.permutation(K) for _ in range(half)])
    perms = np.concatenate([perms, perms[:, ::-1]])
    n = perms.shape[0]
    # coalition j of permutation s holds the first j features of that permutation
    rank = np.empty_like(perms)
    np.put_along_axis(rank, perms, np.arange(K)[None, :].repeat(n, 0), axis=1)
    masks = rank[:, None, :] < np.arange(K + 1)[None, :, None]
    v = _payoffs(f, row, base, masks.reshape(-1, K)).reshape(n, K + 1, -1)
    steps = v[:, 1:] - v[:, :-1]  # contribution of feature perms[s, j]
    contrib = np.empty_like(steps)
    np.put_along_axis(contrib, perms[:, :, None], steps, axis=1)
    pair = 0.5 * (contrib[:half] + contrib[half:])
    phi = pair.mean(axis=0)
    se = pair.std(axis=0, ddof=1) / np.sqrt(half) if half > 1 else np.full_like(phi, np.nan)
    phi0 = v[0, 0]
    scalar = np.ndim(f(base[None, :])) == 1
    if scalar:
        return ShapleyEstimate(phi[:, 0], float(phi0[0]), se[:, 0], n)
    return ShapleyEstimate(phi, phi0, se, n)


def shapley(f, row, background, mode="exact", budget=MIN_BUDGET, rng=None, seed=0):
    """Shapley decomposition ``f(row) = phi_0 + sum_k phi_k``.

    Returns ``(phi, phi0)`` in exact mode and a :class:`ShapleyEstimate` in
    sampled mode.
    """
    if mode == "exact":
        return shapley_exact(f, row, background)
    if mode == "sampled":
        return shapley_sampled(f, row, background, budget, rng, seed)
    raise ParameterError(f"unknown Shapley mode {mode!r}")


def shapley_importance(f, data, names=None, background=None, mode="sampled", budget=MIN_BUDGET,
                       rows=None, seed=0):
    """Per-period Shapley paths of a vector-valued encoder and their mean absolute value.

    ``rows`` restricts the evaluation to some time indices (e.g. ``[-1]`` for
    an end-of-sample snapshot).
    """
    X = as_matrix(data)
    background = X if background is None else background
    idx = np.arange(X.shape[0]) if rows is None else np.arange(X.shape[0])[rows]
    idx = np.atleast_1d(idx)
    paths, phi0 = [], None
    for t in idx:
        if mode == "exact":
            phi, phi0 = shapley_exact(f, X[t], background)
        else:
            est = shapley_sampled(f, X[t], background, budget, rng=substream(seed, "shapley", int(t)))
            phi, phi0 = est.phi, est.phi0
        paths.append(np.atleast_2d(phi.T).T)
    paths = np.stack(paths)
    return ImportanceTable(np.abs(paths).mean(axis=0), _names(names, X.shape[1]), "shapley", paths,
                           np.atleast_1d(phi0), {"rows": [int(t) for t in idx], "mode": mode})


@dataclass
class FactorAlignment:
    """``permutation[i]`` is the column of the other set matched to reference factor i."""

    permutation: tuple
    signs: np.ndarray
    correlation: np.ndarray

    def apply(self, F):
        return np.asarray(F, float)[:, list(self.permutation)] * self.signs

    @property
    def is_identity(self):
        return self.permutation == tuple(range(len(self.permutation))) and bool(np.all(self.signs > 0))


def align_factors(reference, other):
    """Greedy matching by absolute correlation, reference factors taken in order."""
    R = np.asarray(getattr(reference, "factors", reference), float)
    O = np.asarray(getattr(other, "factors", other), float)
    if R.shape != O.shape:
        raise AlignmentError(f"factor sets differ in shape: {R.shape} vs {O.shape}")
    sr, so = R.std(axis=0), O.std(axis=0)
    if np.any(sr == 0) or np.any(so == 0):
        raise AlignmentError("cannot align a zero-variance factor")
    Rc = (R - R.mean(0)) / sr
    Oc = (O - O.mean(0)) / so
    C = Rc.T @ Oc / R.shape[0]
    Q = R.shape[1]
    free = np.ones(Q, bool)
    perm, signs = [], np.empty(Q)
    for i in range(Q):
        a = np.where(free, np.abs(C[i]), -np.inf)
        j = int(np.argmax(a))
        free[j] = False
        perm.append(j)
        signs[i] = -1.0 if C[i, j] < 0 else 1.0
    return FactorAlignment(tuple(perm), signs, C)


@dataclass
class GroupImportance:
    groups: tuple
    means: np.ndarray  # (groups, Q), NaN for an empty group
    top: list  # per factor, list of (variable, score)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group"] + [f"factor{q + 1}" for q in range(self.means.shape[1])])
            for g, row in zip(self.groups, self.means):
                w.writerow([g] + ["" if np.isnan(v) else f"{v:.12g}" for v in row])

    def top_to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["factor", "rank", "variable", "score"])
            for q, entries in enumerate(self.top):
                for r, (name, score) in enumerate(entries):
                    w.writerow([q + 1, r + 1, name, f"{score:.12g}"])


def group_importance(table, groups, order=None, top=15):
    """Mean score per (group, factor) and the ``top`` variables of each factor.

    Parameters
    ----------
    groups : sequence of str, one per variable
    order : sequence of str, optional
        Groups to report; a listed group with no variables yields NaN.
    """
    groups = list(groups)
    if len(groups) != len(table.names):
        raise DimensionError("one group label per variable is required")
    if any(g is None or g == "" for g in groups):
        raise ParameterError("every variable needs a group label")
    order = tuple(order) if order is not None else tuple(dict.fromkeys(groups))
    labels = np.array(groups)
    means = np.full((len(order), table.Q), np.nan)
    for gi, g in enumerate(order):
        sel = labels == g
        if sel.any():
            means[gi] = table.scores[sel].mean(axis=0)
    ranked = []
    for q in range(table.Q):
        idx = np.argsort(-table.scores[:, q], kind="stable")[:top]
        ranked.append([(table.names[i], float(table.scores[i, q])) for i in idx])
    return GroupImportance(order, means, ranked)
