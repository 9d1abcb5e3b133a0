import numpy as np

from ..errors import DimensionError
from .base import FactorSet, ReducerSpec, as_matrix


class PCAModel:
    def __init__(self, loadings, center):
        self.loadings = loadings
        self.center = center

    def transform(self, X):
        return (np.asarray(X, float) - self.center) @ self.loadings


def pca_reduce(data, q, spec=None):
    """Principal-component factors ``F = D @ L``.

    ``L`` holds the top-``q`` eigenvectors of ``D'D`` (obtained from the SVD of
    the column-centered panel).  Each loading column is signed so that its
    largest-magnitude entry is positive.  ``explained_variance`` is the share
    of total variance carried by each factor.
    """
    X = as_matrix(data)
    T, N = X.shape
    if not 1 <= q <= min(T, N):
        raise DimensionError(f"q={q} must lie in [1, min(T, N)={min(T, N)}]")
    center = X.mean(axis=0)
    Xc = X - center
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    L = Vt[:q].T.copy()
    pivot = np.argmax(np.abs(L), axis=0)
    signs = np.sign(L[pivot, np.arange(q)])
    L *= np.where(signs == 0, 1.0, signs)
    total = float(np.sum(s**2))
    share = s[:q] ** 2 / total if total > 0 else np.zeros(q)
    F = Xc @ L
    spec = spec or ReducerSpec(kind="pca", q=q)
    return FactorSet(F, spec, explained_variance=share, loadings=L, model=PCAModel(L, center))
