"""Dimension reduction: PCA, locally linear embedding, autoencoder."""
from .autoencoder import MLP, Adam, autoencoder_reduce, nn_gradient
from .base import AutoencoderSpec, FactorSet, ReducerSpec, as_matrix
from .lle import lle_reduce, lle_weights, select_lle_k
from .pca import pca_reduce


def reduce(data, spec):
    """Dispatch on ``spec.kind``."""
    if spec.kind == "pca":
        return pca_reduce(data, spec.q, spec=spec)
    if spec.kind == "lle":
        return lle_reduce(data, spec.q, k=spec.lle_k, spec=spec)
    return autoencoder_reduce(data, spec.ae, q=spec.q, reducer_spec=spec)


__all__ = [
    "AutoencoderSpec", "FactorSet", "ReducerSpec", "MLP", "Adam", "as_matrix", "reduce",
    "pca_reduce", "lle_reduce", "lle_weights", "select_lle_k", "autoencoder_reduce", "nn_gradient",
]
