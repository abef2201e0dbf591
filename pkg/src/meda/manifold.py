"""Grassmann-manifold feature learning.

PCA subspaces of each domain are joined by the geodesic flow on the
Grassmannian; integrating the projections along that flow gives a PSD kernel
``G`` and features are mapped with ``z = sqrt(G) x``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateError, DimensionError
from .features import FeatureMatrix, as_features

DB_TOL = 1e-10
DB_MAX_ITER = 100
# Below this sine the flow direction into the complement is numerically undefined.
_ANGLE_EPS = 1e-10


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray
    explained_variance: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class GeodesicKernel:
    """Geodesic flow kernel between two subspaces and its square root.

    ``g`` and ``sqrt_g`` are D x D. ``db_iterations`` records how many
    Denman-Beavers steps the square root took.
    """

    g: np.ndarray
    sqrt_g: np.ndarray
    principal_angles: np.ndarray
    dim: int
    db_iterations: int = 0

    @property
    def ambient_dim(self) -> int:
        return self.g.shape[0]

    @classmethod
    def identity(cls, ambient_dim: int) -> "GeodesicKernel":
        eye = np.eye(ambient_dim)
        return cls(eye, eye.copy(), np.zeros(0), 0, 0)


def _check_dim(d, ambient):
    if d < 1:
        raise DimensionError(f"subspace dimension must be >= 1, got {d}")
    if 2 * d > ambient:
        raise DimensionError(
            f"subspace dimension d={d} exceeds half the feature dimension D={ambient}"
        )


def pca_subspace(x, d: int) -> Subspace:
    """Top-``d`` principal directions of the mean-centred rows of ``x``."""
    x = as_features(x).data
    n, ambient = x.shape
    _check_dim(d, ambient)
    centred = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    tol = max(n, ambient) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if d > rank:
        raise DimensionError(
            f"subspace dimension d={d} exceeds rank {rank} of the centred data"
        )
    basis = vt[:d].T.copy()
    # Fix the sign so the largest-magnitude loading of each direction is positive.
    pivots = np.argmax(np.abs(basis), axis=0)
    basis *= np.sign(basis[pivots, np.arange(d)])
    variance = s[:d] ** 2 / max(n - 1, 1)
    return Subspace(basis, variance)


def denman_beavers_sqrt(a, tol: float = DB_TOL, max_iter: int = DB_MAX_ITER):
    """Principal square root by the coupled Denman-Beavers iteration.

    Uses the inverse-free form, in which each inverse of the classical
    recursion is replaced by one Newton-Schulz step, after scaling ``a`` by
    its Frobenius norm. This keeps the iteration well defined on singular PSD
    matrices, which geodesic flow kernels always are when D > 2d.

    Returns ``(root, iterations)``. Stops once
    ``||Y Y - a||_F / ||a||_F < tol``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"square matrix required, got shape {a.shape}")
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros_like(a), 0
    if not np.isfinite(scale):
        raise DegenerateError("matrix has non-finite entries")
    target = a / scale
    eye = np.eye(a.shape[0])
    y = target.copy()
    z = eye.copy()
    for it in range(1, max_iter + 1):
        t = 0.5 * (3.0 * eye - z @ y)
        y = y @ t
        z = t @ z
        resid = np.linalg.norm(y @ y - target)
        if not np.isfinite(resid):
            break
        if resid < tol:
            return y * np.sqrt(scale), it
    raise ConvergenceError(
        f"Denman-Beavers did not reach tolerance {tol:g} in {max_iter} iterations"
    )


def _one_minus_sinc(x):
    """``1 - sin(x)/x`` without cancellation near zero."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 0.1
    xs = x[small] ** 2
    out[small] = xs / 6 * (1 - xs / 20 * (1 - xs / 42 * (1 - xs / 72)))
    xl = x[~small]
    out[~small] = 1.0 - np.sin(xl) / xl
    return out


def flow_coefficients(theta):
    """Integrals of cos^2, -cos*sin and sin^2 of ``t*theta`` over t in [0, 1].

    Written so that theta -> 0 gives the analytic limits (1, 0, 0).
    """
    theta = np.asarray(theta, dtype=float)
    lam1 = 0.5 * (1.0 + np.sinc(2.0 * theta / np.pi))
    lam2 = -0.5 * theta * np.sinc(theta / np.pi) ** 2
    lam3 = 0.5 * _one_minus_sinc(2.0 * theta)
    return lam1, lam2, lam3


def geodesic_flow_kernel(s_src: Subspace, s_tgt: Subspace) -> GeodesicKernel:
    """Closed-form geodesic flow kernel between two PCA subspaces.

    With ``Ps' Pt = U1 cos(Theta) V'`` and ``Rs' Pt = -U2 sin(Theta) V'``
    (``Rs`` the orthogonal complement of ``Ps``), the flow is
    ``Phi(t) = Ps U1 cos(t Theta) - Rs U2 sin(t Theta)`` and
    ``G = int_0^1 Phi Phi' dt`` has the block form ``Q H Q'`` with
    ``Q = [Ps U1, Rs U2]``. ``Rs U2`` is recovered from the residual of ``Pt``
    against ``Ps`` so the (D - d)-column complement is never formed.
    """
    ps, pt = np.asarray(s_src.basis, float), np.asarray(s_tgt.basis, float)
    if ps.shape != pt.shape:
        raise DimensionError(f"subspace shapes differ: {ps.shape} vs {pt.shape}")
    ambient, d = ps.shape
    _check_dim(d, ambient)

    cross = ps.T @ pt
    u1, cos, vt = np.linalg.svd(cross)
    v = vt.T
    resid = pt @ v - ps @ (cross @ v)
    resid -= ps @ (ps.T @ resid)
    sin = np.linalg.norm(resid, axis=0)
    theta = np.arctan2(sin, np.clip(cos, 0.0, 1.0))
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(resid))):
        raise DegenerateError("principal angle computation produced non-finite values")

    flat = sin < _ANGLE_EPS
    theta[flat] = 0.0
    comp = np.zeros_like(resid)
    comp[:, ~flat] = -resid[:, ~flat] / sin[~flat]

    lam1, lam2, lam3 = flow_coefficients(theta)
    q = np.hstack([ps @ u1, comp])
    h = np.block([[np.diag(lam1), np.diag(lam2)], [np.diag(lam2), np.diag(lam3)]])
    root_h, iters = denman_beavers_sqrt(h)

    g = q @ h @ q.T
    sqrt_g = q @ root_h @ q.T
    g = 0.5 * (g + g.T)
    sqrt_g = 0.5 * (sqrt_g + sqrt_g.T)
    return GeodesicKernel(g, sqrt_g, theta, d, iters)


def fit_geodesic_kernel(x_src, x_tgt, d: int) -> GeodesicKernel:
    return geodesic_flow_kernel(pca_subspace(x_src, d), pca_subspace(x_tgt, d))


def manifold_transform(g: GeodesicKernel, x) -> FeatureMatrix:
    """Map each row ``x_i`` to ``sqrt(G) x_i``; domain and labels are kept."""
    x = as_features(x)
    if x.n_features != g.ambient_dim:
        raise DimensionError(
            f"features have {x.n_features} columns, kernel expects {g.ambient_dim}"
        )
    return x.with_data(x.data @ g.sqrt_g)
