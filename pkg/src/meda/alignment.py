"""MMD alignment matrices and the adaptive marginal/conditional weight."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    EmptyClassWarning,
    InsufficientDataError,
)
from .features import as_features

DEFAULT_SEED = 0
# Ridge penalty of the domain discriminator, relative to standardised features.
DISCRIMINATOR_RIDGE = 1e-2


@dataclass
class ADistanceReport:
    d_marginal: float
    d_conditional: np.ndarray
    marginal_error: float
    conditional_errors: np.ndarray

    def to_dict(self):
        return {
            "d_marginal": float(self.d_marginal),
            "d_conditional": [float(v) for v in self.d_conditional],
            "marginal_error": float(self.marginal_error),
            "conditional_errors": [float(v) for v in self.conditional_errors],
        }


@dataclass
class AlignmentState:
    m0: np.ndarray
    mc: list
    mu: float
    combined: np.ndarray = field(init=False)

    def __post_init__(self):
        self.combined = combine(self.m0, self.mc, self.mu)


def build_m0(n: int, m: int) -> np.ndarray:
    """Marginal MMD matrix ``a a'`` with ``a = (1/n, ..., -1/m, ...)``."""
    if n < 1 or m < 1:
        raise DimensionError(f"need at least one sample per domain, got n={n}, m={m}")
    a = np.concatenate([np.full(n, 1.0 / n), np.full(m, -1.0 / m)])
    return np.outer(a, a)


def build_mc(labels_src, pseudo_labels_tgt, c: int) -> np.ndarray:
    """Conditional MMD matrix for class ``c``.

    If ``c`` has no target members the matrix is all zeros and an
    :class:`EmptyClassWarning` is issued.
    """
    ys = np.asarray(labels_src)
    yt = np.asarray(pseudo_labels_tgt)
    n, m = len(ys), len(yt)
    src = ys == c
    tgt = yt == c
    n_c, m_c = int(src.sum()), int(tgt.sum())
    if n_c == 0:
        raise DimensionError(f"class {c} does not occur in the source labels")
    if m_c == 0:
        warnings.warn(EmptyClassWarning(f"class {c} has no target members"), stacklevel=2)
        return np.zeros((n + m, n + m))
    a = np.zeros(n + m)
    a[:n][src] = 1.0 / n_c
    a[n:][tgt] = -1.0 / m_c
    return np.outer(a, a)


def combine(m0, mc_list, mu: float) -> np.ndarray:
    """``(1 - mu) M0 + mu * sum(Mc)``."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    m0 = np.asarray(m0, dtype=float)
    total = np.zeros_like(m0)
    for mc in mc_list:
        if mc.shape != m0.shape:
            raise DimensionError(f"shape mismatch {mc.shape} vs {m0.shape}")
        total += mc
    return (1.0 - mu) * m0 + mu * total


def _canonical_folds(x, seed):
    # Order rows by content before shuffling so folds do not depend on input order.
    order = np.lexsort(x.T[::-1])
    perm = np.random.default_rng(seed).permutation(len(x))
    folds = np.empty(len(x), dtype=int)
    folds[order[perm]] = np.arange(len(x)) % 2
    return folds


def _fit_discriminator(x, y, w):
    """Weighted ridge on +-1 targets with an unpenalised intercept."""
    mean = np.average(x, axis=0, weights=w)
    std = np.sqrt(np.average((x - mean) ** 2, axis=0, weights=w))
    std[std == 0] = 1.0
    xs = (x - mean) / std
    ybar = np.average(y, weights=w)
    sw = np.sqrt(w)[:, None]
    gram = (xs * sw).T @ (xs * sw)
    rhs = (xs * sw).T @ (sw[:, 0] * (y - ybar))
    coef = np.linalg.solve(gram + DISCRIMINATOR_RIDGE * np.eye(x.shape[1]), rhs)
    return lambda q: ((q - mean) / std) @ coef + ybar


def domain_error(x_a, x_b, seed: int = DEFAULT_SEED) -> float:
    """Held-out balanced error of a linear classifier separating two sample sets.

    Each set is split in two folds; a ridge discriminator is trained on one
    fold of both sets and scored on the other, in both directions. Classes are
    weighted equally so chance level is 0.5 regardless of set sizes.
    """
    xa = as_features(x_a).data
    xb = as_features(x_b).data
    if len(xa) < 2 or len(xb) < 2:
        raise InsufficientDataError(
            f"each domain needs >= 2 samples to split, got {len(xa)} and {len(xb)}"
        )
    if xa.shape[1] != xb.shape[1]:
        raise DimensionError(f"feature dimensions differ: {xa.shape[1]} vs {xb.shape[1]}")
    fa, fb = _canonical_folds(xa, seed), _canonical_folds(xb, seed)
    miss_a = miss_b = 0
    for k in (0, 1):
        tr_a, tr_b = xa[fa != k], xb[fb != k]
        x = np.vstack([tr_a, tr_b])
        y = np.concatenate([-np.ones(len(tr_a)), np.ones(len(tr_b))])
        w = np.concatenate([np.full(len(tr_a), 0.5 / len(tr_a)), np.full(len(tr_b), 0.5 / len(tr_b))])
        score = _fit_discriminator(x, y, w)
        miss_a += int(np.sum(score(xa[fa == k]) >= 0))
        miss_b += int(np.sum(score(xb[fb == k]) < 0))
    return 0.5 * (miss_a / len(xa) + miss_b / len(xb))


def a_distance_from_error(eps: float) -> float:
    eps = min(eps, 1.0 - eps)
    return 2.0 * (1.0 - 2.0 * eps)


def a_distance(x_a, x_b, seed: int = DEFAULT_SEED) -> float:
    """Proxy A-distance ``2 (1 - 2 eps)``, with eps folded into [0, 0.5]."""
    return a_distance_from_error(domain_error(x_a, x_b, seed))


def mu_from_distances(d_marginal: float, d_conditional) -> float:
    total = d_marginal + float(np.sum(d_conditional))
    if total <= 0.0:
        return 0.5
    return float(np.clip(1.0 - d_marginal / total, 0.0, 1.0))


def estimate_mu(z_src, z_tgt, pseudo_labels_tgt, seed: int = DEFAULT_SEED, classes=None):
    """Adaptive factor from marginal and per-class A-distances.

    Returns ``(mu, report)``. Classes with fewer than two members on either
    side cannot be split for held-out scoring and contribute ``d_c = 0``.
    When no divergence is measurable anywhere ``mu = 0.5``.
    """
    z_src = as_features(z_src)
    xs, xt = z_src.data, as_features(z_tgt).data
    ys = z_src.labels
    yt = np.asarray(pseudo_labels_tgt)
    if ys is None:
        raise DimensionError("source features must be labelled")
    if len(yt) != len(xt):
        raise DimensionError(f"{len(yt)} pseudo-labels for {len(xt)} target samples")
    if classes is None:
        classes = np.unique(ys)

    eps_m = domain_error(xs, xt, seed)
    d_m = a_distance_from_error(eps_m)
    d_c = np.zeros(len(classes))
    eps_c = np.full(len(classes), 0.5)
    for i, c in enumerate(classes):
        a, b = xs[ys == c], xt[yt == c]
        if len(a) < 2 or len(b) < 2:
            continue
        eps_c[i] = domain_error(a, b, seed)
        d_c[i] = a_distance_from_error(eps_c[i])
    mu = mu_from_distances(d_m, d_c)
    return mu, ADistanceReport(d_m, d_c, eps_m, eps_c)


def alignment_state(labels_src, pseudo_labels_tgt, mu: float, classes=None) -> AlignmentState:
    ys = np.asarray(labels_src)
    yt = np.asarray(pseudo_labels_tgt)
    if classes is None:
        classes = np.unique(ys)
    m0 = build_m0(len(ys), len(yt))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyClassWarning)
        mc = [build_mc(ys, yt, c) for c in classes]
    return AlignmentState(m0, mc, mu)

