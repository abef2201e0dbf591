"""Manifold embedded distribution alignment for unsupervised domain adaptation."""

__version__ = "0.1.0"

from .features import Domain, FeatureMatrix  # noqa: E402
from .manifold import (  # noqa: E402
    GeodesicKernel,
    Subspace,
    fit_geodesic_kernel,
    geodesic_flow_kernel,
    manifold_transform,
    pca_subspace,
)
from .learner import Hyper, KernelSpec, MedaModel, fit, predict  # noqa: E402

__all__ = [
    "Domain",
    "FeatureMatrix",
    "GeodesicKernel",
    "Subspace",
    "fit_geodesic_kernel",
    "geodesic_flow_kernel",
    "manifold_transform",
    "pca_subspace",
    "Hyper",
    "KernelSpec",
    "MedaModel",
    "fit",
    "predict",
]
