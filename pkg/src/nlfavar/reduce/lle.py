"""Locally linear embedding of the T time observations.

Each row of the panel (one quarter, an N-vector) is a data point.  Points are
reconstructed from their k nearest neighbours with row-stochastic weights, and
the embedding is read off the bottom eigenvectors of (I - W)'(I - W).
"""
import numpy as np
from scipy import linalg

from ..errors import ParameterError
from .base import FactorSet, ReducerSpec, as_matrix

RIDGE = 1e-3


def knn(X, k, reference=None):
    """Indices of the k nearest rows of ``reference`` (default ``X``) for every row of ``X``.

    When ``reference`` is omitted a point is never its own neighbour.  Ties are
    broken towards the lower index.
    """
    R = X if reference is None else reference
    d2 = (X**2).sum(1)[:, None] + (R**2).sum(1)[None, :] - 2.0 * X @ R.T
    np.maximum(d2, 0.0, out=d2)
    if reference is None:
        np.fill_diagonal(d2, np.inf)
    if k > R.shape[0] - (reference is None):
        raise ParameterError(f"k={k} exceeds the number of available neighbours")
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def reconstruction_weights(X, points, neighbors, reg=RIDGE):
    """Row-stochastic weights reconstructing each of ``points`` from ``X[neighbors]``."""
    n, k = neighbors.shape
    W = np.empty((n, k))
    ones = np.ones(k)
    for i in range(n):
        Z = X[neighbors[i]] - points[i]
        G = Z @ Z.T
        tr = np.trace(G)
        G.flat[:: k + 1] += reg * tr / k if tr > 0 else reg
        w = linalg.solve(G, ones, assume_a="pos")
        W[i] = w / w.sum()
    return W


def lle_weights(X, k, reg=RIDGE):
    """Dense T x T weight matrix and the neighbour index array."""
    X = np.asarray(X, float)
    nbrs = knn(X, k)
    w = reconstruction_weights(X, X, nbrs, reg)
    T = X.shape[0]
    Omega = np.zeros((T, T))
    np.put_along_axis(Omega, nbrs, w, axis=1)
    return Omega, nbrs


def embedding_matrix(Omega):
    """M = (I - W)'(I - W)."""
    A = np.eye(Omega.shape[0]) - Omega
    return A.T @ A


def _orient(F):
    pivot = np.argmax(np.abs(F), axis=0)
    s = np.sign(F[pivot, np.arange(F.shape[1])])
    return F * np.where(s == 0, 1.0, s)


class LLEModel:
    def __init__(self, X, factors, k, reg):
        self.X = X
        self.factors = factors
        self.k = k
        self.reg = reg

    def transform(self, rows):
        """Out-of-sample embedding: reconstruct each row from its training neighbours."""
        rows = np.atleast_2d(np.asarray(rows, float))
        nbrs = knn(rows, self.k, reference=self.X)
        W = reconstruction_weights(self.X, rows, nbrs, self.reg)
        return np.einsum("ik,ikq->iq", W, self.factors[nbrs])


def lle_reduce(data, q, k=None, spec=None, candidates=None, reg=RIDGE):
    """LLE factors, standardized to zero mean and unit variance per column.

    Parameters
    ----------
    data : Panel or array, T x N
    q : int
        Embedding dimension.
    k : int, optional
        Neighbour count.  When omitted it is chosen by :func:`select_lle_k`
        over ``candidates``.
    """
    X = as_matrix(data)
    T = X.shape[0]
    if k is None:
        cand = candidates or (spec.lle_candidates if spec else ReducerSpec().lle_candidates)
        cand = [c for c in cand if q < c < T] or [min(max(q + 1, 2), T - 1)]
        k = select_lle_k(X, cand, q, reg=reg)
    if k <= q:
        raise ParameterError(f"k={k} must exceed q={q}")
    if k >= T:
        raise ParameterError(f"k={k} must be smaller than the number of points T={T}")
    Omega, nbrs = lle_weights(X, k, reg)
    M = embedding_matrix(Omega)
    evals, evecs = linalg.eigh(M, subset_by_index=[0, q])
    F = evecs[:, 1:]
    F = F - F.mean(axis=0)
    F = _orient(F / F.std(axis=0, ddof=1))
    spec = spec or ReducerSpec(kind="lle", q=q, lle_k=k)
    return FactorSet(
        F,
        spec,
        model=LLEModel(X, F, k, reg),
        info={"lle_k": int(k), "bottom_eigenvalues": [float(e) for e in evals]},
    )


def embedding_residual(X, F):
    """Mean squared residual of regressing the centered panel on the embedding."""
    Xc = X - X.mean(axis=0)
    Fc = np.column_stack([F - F.mean(axis=0)])
    fitted = Fc @ (np.linalg.pinv(Fc) @ Xc)
    return float(np.mean((Xc - fitted) ** 2))


def select_lle_k(data, candidates, q=None, reg=RIDGE):
    """Pick the neighbour count whose embedding best linearly reconstructs the panel.

    Every candidate runs the full LLE pipeline; the score is
    :func:`embedding_residual`.  Ties go to the smallest ``k``.
    """
    X = as_matrix(data)
    cands = sorted(set(int(c) for c in candidates))
    if not cands:
        raise ParameterError("candidate list is empty")
    if q is None:
        q = 1
    if len(cands) == 1:
        return cands[0]
    best_k, best = None, np.inf
    for k in cands:
        if not q < k < X.shape[0]:
            raise ParameterError(f"candidate k={k} is not in ({q}, {X.shape[0]})")
        score = embedding_residual(X, lle_reduce(X, q, k=k, reg=reg).factors)
        if score < best - 1e-12 * max(abs(best), 1.0) or best_k is None:
            best_k, best = k, score
    return best_k
