"""p-nearest-neighbour cosine graph and its Laplacian."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DimensionError
from .features import as_features

DEFAULT_NEIGHBORS = 10


@dataclass(frozen=True)
class GraphLaplacian:
    w: np.ndarray
    degree: np.ndarray
    l: np.ndarray
    p: int = 0


def cosine_similarity(z) -> np.ndarray:
    z = as_features(z).data
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise DegenerateError(f"row {bad} is the zero vector; cosine similarity undefined")
    u = z / norms[:, None]
    sim = u @ u.T
    return np.clip(sim, -1.0, 1.0)


def neighbor_mask(sim: np.ndarray, p: int) -> np.ndarray:
    """Boolean matrix with ``mask[i, j]`` true iff j is among i's p most similar.

    Self-matches are excluded; ties go to the lower index.
    """
    n = sim.shape[0]
    ranked = sim.copy()
    np.fill_diagonal(ranked, -np.inf)
    order = np.argsort(-ranked, axis=1, kind="stable")[:, :p]
    mask = np.zeros((n, n), dtype=bool)
    mask[np.arange(n)[:, None], order] = True
    return mask


def build_affinity(z, p: int = DEFAULT_NEIGHBORS) -> np.ndarray:
    """Symmetric p-NN affinity with cosine weights, negatives clipped to zero."""
    z = as_features(z).data
    n = len(z)
    if p < 1 or p >= n:
        raise DimensionError(f"need 1 <= p < {n}, got p={p}")
    sim = cosine_similarity(z)
    mask = neighbor_mask(sim, p)
    w = np.where(mask | mask.T, np.maximum(sim, 0.0), 0.0)
    np.fill_diagonal(w, 0.0)
    return w


def build_laplacian(w, p: int = 0) -> GraphLaplacian:
    """Unnormalised Laplacian ``L = D - W``."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionError(f"affinity must be square, got {w.shape}")
    degree = w.sum(axis=1)
    return GraphLaplacian(w, degree, np.diag(degree) - w, p)


def laplacian_graph(z, p: int = DEFAULT_NEIGHBORS) -> GraphLaplacian:
    return build_laplacian(build_affinity(z, p), p)
