"""Reference computations that share no code path with the package.

Each oracle follows the defining formula as directly as possible: explicit
geodesics and quadrature, double sums, exhaustive neighbour search.
"""

import numpy as np


def random_subspace(rng, ambient, d):
    q, _ = np.linalg.qr(rng.normal(size=(ambient, d)))
    return q


def grassmann_geodesic(ps, pt):
    """Geodesic ``Phi(t)`` from span(ps) to span(pt) via the Grassmann log map.

    ``(I - ps ps') pt (ps' pt)^-1 = U tan(Theta) V'`` and
    ``Phi(t) = ps V cos(t Theta) + U sin(t Theta)``.
    """
    m = ps.T @ pt
    tangent = (pt - ps @ m) @ np.linalg.inv(m)
    u, s, vt = np.linalg.svd(tangent, full_matrices=False)
    theta = np.arctan(s)
    a = ps @ vt.T

    def phi(t):
        t = np.atleast_1d(t)
        return (a[None] * np.cos(np.outer(t, theta))[:, None, :]
                + u[None] * np.sin(np.outer(t, theta))[:, None, :])

    return phi, theta


def gfk_gram_by_quadrature(ps, pt, x, n_points=10_000):
    """``int_0^1 (Phi(t)' x_i)' (Phi(t)' x_j) dt`` for all column pairs of ``x``.

    Trapezoid rule on ``n_points`` equally spaced nodes.
    """
    m = ps.T @ pt
    tangent = (pt - ps @ m) @ np.linalg.inv(m)
    u, s, vt = np.linalg.svd(tangent, full_matrices=False)
    theta = np.arctan(s)
    a = vt @ ps.T @ x  # coefficients along ps V
    b = u.T @ x
    t = np.linspace(0.0, 1.0, n_points)
    cos = np.cos(np.outer(t, theta))[:, :, None]
    sin = np.sin(np.outer(t, theta))[:, :, None]
    proj = cos * a[None] + sin * b[None]  # (t, d, samples)
    integrand = np.einsum("tki,tkj->tij", proj, proj)
    h = t[1] - t[0]
    return h * (integrand.sum(axis=0) - 0.5 * (integrand[0] + integrand[-1]))


def eig_sqrt(g):
    """PSD square root by eigendecomposition, noise-level eigenvalues zeroed."""
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    w = np.where(w > 1e-14 * max(w.max(), 1.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.T


def brute_force_affinity(z, p):
    n = len(z)
    sim = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            sim[i, j] = np.dot(z[i], z[j]) / (np.linalg.norm(z[i]) * np.linalg.norm(z[j]))
    neigh = []
    for i in range(n):
        ranked = sorted((j for j in range(n) if j != i), key=lambda j: (-sim[i, j], j))
        neigh.append(set(ranked[:p]))
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and (j in neigh[i] or i in neigh[j]):
                w[i, j] = max(sim[i, j], 0.0)
    return w


def double_sum_smoothness(w, f):
    n = len(f)
    return sum(w[i, j] * (f[i] - f[j]) ** 2 for i in range(n) for j in range(n))


def nearest_neighbour_labels(xs, ys, xt):
    out = []
    for q in xt:
        best, label = np.inf, None
        for x, y in zip(xs, ys):
            dist = float(np.sum((x - q) ** 2))
            if dist < best:
                best, label = dist, y
        out.append(label)
    return np.array(out)


def regularised_objective(beta, k, a_diag, y, m, l, lam, eta, rho):
    """Squared source loss + eta ||f||^2 + lam MMD + rho Laplacian, from the matrices."""
    f = k @ beta
    loss = np.sum((a_diag[:, None] * (y - f)) ** 2)
    return (loss + eta * np.trace(beta.T @ k @ beta)
            + np.trace(f.T @ (lam * m + rho * l) @ f))
