"""Closed-form domain-invariant classifier and the pseudo-label refinement loop."""

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Union

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from . import __version__
from .alignment import DEFAULT_SEED, ADistanceReport, estimate_mu
from .errors import (
    DegenerateError,
    DimensionError,
    EmptyInputError,
    ParseError,
    SingularSystemError,
)
from .features import Domain, FeatureMatrix, as_features
from .graph import laplacian_graph

RESIDUAL_TOL = 1e-8
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class KernelSpec:
    """``kind`` is ``"rbf"`` or ``"linear"``; ``bandwidth`` is sigma^2 or ``"auto"``."""

    kind: str = "rbf"
    bandwidth: Union[float, str] = "auto"

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.bandwidth != "auto" and not float(self.bandwidth) > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def resolved(self) -> bool:
        return self.kind == "linear" or self.bandwidth != "auto"

    def resolve(self, z) -> "KernelSpec":
        """Fix an ``auto`` bandwidth to the mean per-feature variance of ``z``."""
        if self.resolved:
            return self
        sigma2 = float(np.mean(np.var(as_features(z).data, axis=0)))
        if not sigma2 > 0:
            raise DegenerateError("RBF bandwidth resolved to 0; all inputs identical")
        return replace(self, bandwidth=sigma2)


@dataclass(frozen=True)
class Hyper:
    lam: float = 10.0
    eta: float = 0.1
    rho: float = 1.0
    p: int = 10
    d: int = 20
    t_max: int = 10
    kernel: KernelSpec = field(default_factory=KernelSpec)
    # None means estimate mu every iteration; a float pins it.
    mu: Optional[float] = None
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.lam < 0 or self.rho < 0:
            raise ValueError("lambda and rho must be >= 0")
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if self.mu is not None and not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")

    def to_dict(self):
        out = asdict(self)
        out["kernel"] = asdict(self.kernel)
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["kernel"] = KernelSpec(**d.get("kernel", {}))
        return cls(**d)


@dataclass
class MedaModel:
    beta: np.ndarray
    train_features: np.ndarray
    kernel: KernelSpec
    hyper: Hyper
    classes: np.ndarray
    n_source: int
    mu_history: list = field(default_factory=list)
    label_history: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    target_label_history: list = field(default_factory=list)
    converged: bool = False
    sqrt_g: Optional[np.ndarray] = None

    @property
    def n_iterations(self) -> int:
        return len(self.mu_history)

    @property
    def target_labels(self) -> np.ndarray:
        return self.target_label_history[-1]

    def transform(self, x) -> FeatureMatrix:
        """Map raw (normalised) features into the manifold used at training."""
        x = as_features(x)
        if self.sqrt_g is None:
            return x
        if x.n_features != self.sqrt_g.shape[0]:
            raise DimensionError(
                f"features have {x.n_features} columns, model expects {self.sqrt_g.shape[0]}"
            )
        return x.with_data(x.data @ self.sqrt_g)


def kernel_matrix(z, spec: KernelSpec, z_other=None) -> np.ndarray:
    """Kernel between rows of ``z`` (and ``z_other`` if given)."""
    x = as_features(z).data
    y = x if z_other is None else as_features(z_other).data
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"feature dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    if spec.kind == "linear":
        return x @ y.T
    if not spec.resolved:
        raise ValueError("kernel bandwidth must be resolved before use")
    sigma2 = float(spec.bandwidth)
    if not sigma2 > 0:
        raise DegenerateError("RBF bandwidth is 0")
    sq = cdist(x, y, "sqeuclidean")
    k = np.exp(-sq / (2.0 * sigma2))
    if z_other is None:
        k = 0.5 * (k + k.T)
    return k


def build_indicator(n: int, m: int) -> np.ndarray:
    if n < 1 or m < 0:
        raise DimensionError(f"invalid domain sizes n={n}, m={m}")
    return np.diag(np.concatenate([np.ones(n), np.zeros(m)]))


def one_hot(labels, classes, n_total: Optional[int] = None) -> np.ndarray:
    """Label matrix with one row per sample; rows past ``len(labels)`` are zero."""
    labels = np.asarray(labels)
    n_total = len(labels) if n_total is None else n_total
    y = np.zeros((n_total, len(classes)))
    idx = np.searchsorted(classes, labels)
    y[np.arange(len(labels)), idx] = 1.0
    return y


def system_matrix(k, a, m, l, lam, eta, rho) -> np.ndarray:
    """``(A + lam M + rho L) K + eta I``."""
    a = np.asarray(a, dtype=float)
    reg = lam * np.asarray(m) if lam else np.zeros_like(k)
    if rho:
        reg = reg + rho * np.asarray(l)
    lhs = reg @ k
    if a.ndim == 1:
        lhs += a[:, None] * k
    else:
        lhs += a @ k
    lhs[np.diag_indices_from(lhs)] += eta
    return lhs


def solve_system(lhs, rhs, max_refine: int = 5) -> np.ndarray:
    """LU solve with a few rounds of iterative refinement."""
    try:
        lu = scipy.linalg.lu_factor(lhs, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularSystemError(str(exc)) from exc
    x = scipy.linalg.lu_solve(lu, rhs)
    scale = np.linalg.norm(rhs) or 1.0
    for _ in range(max_refine):
        r = rhs - lhs @ x
        if np.linalg.norm(r) / scale < 1e-14:
            break
        x += scipy.linalg.lu_solve(lu, r)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solution has non-finite entries")
    if np.linalg.norm(rhs - lhs @ x) / scale >= RESIDUAL_TOL:
        raise SingularSystemError("linear system residual above tolerance")
    return x


def solve_beta(k, a, y, m, l, lam=10.0, eta=0.1, rho=1.0) -> np.ndarray:
    """Coefficients ``beta = ((A + lam M + rho L) K + eta I)^-1 A Y``.

    ``y`` has one row per sample (source and target) and one column per
    class; ``a`` is the domain indicator, either diagonal matrix or vector.
    """
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    k = np.asarray(k, dtype=float)
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n = k.shape[0]
    if k.shape != (n, n) or y.shape[0] != n:
        raise DimensionError(f"shape mismatch: K {k.shape}, Y {y.shape}")
    rhs = a[:, None] * y if a.ndim == 1 else a @ y
    return solve_system(system_matrix(k, a, m, l, lam, eta, rho), rhs)


def predict(model: MedaModel, z_query):
    """Scores ``K(query, train) beta`` and their per-row argmax class."""
    z = as_features(z_query).data
    if z.shape[1] != model.train_features.shape[1]:
        raise DimensionError(
            f"query has {z.shape[1]} features, model expects {model.train_features.shape[1]}"
        )
    scores = kernel_matrix(z, model.kernel, model.train_features) @ model.beta
    return model.classes[np.argmax(scores, axis=1)], scores


def base_classifier_labels(z_src, z_tgt) -> np.ndarray:
    """1-nearest-neighbour labels for the target, Euclidean distance."""
    z_src = as_features(z_src)
    if z_src.labels is None:
        raise DimensionError("source features must be labelled")
    dist = cdist(as_features(z_tgt).data, z_src.data)
    return z_src.labels[np.argmin(dist, axis=1)]


def accuracy(predicted, truth) -> float:
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape:
        raise DimensionError(f"length mismatch {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise EmptyInputError("cannot score an empty prediction")
    return float(np.mean(predicted == truth))


def mmd_matrix(labels_src, labels_tgt, classes, mu: float) -> np.ndarray:
    """``(1 - mu) M0 + mu sum_c Mc`` assembled without storing each Mc."""
    ys, yt = np.asarray(labels_src), np.asarray(labels_tgt)
    n, m = len(ys), len(yt)
    cols, weights = [], []
    a0 = np.concatenate([np.full(n, 1.0 / n), np.full(m, -1.0 / m)])
    cols.append(a0)
    weights.append(1.0 - mu)
    for c in classes:
        src, tgt = ys == c, yt == c
        if not src.any() or not tgt.any():
            continue
        ac = np.zeros(n + m)
        ac[:n][src] = 1.0 / src.sum()
        ac[n:][tgt] = -1.0 / tgt.sum()
        cols.append(ac)
        weights.append(mu)
    v = np.stack(cols, axis=1)
    return (v * np.asarray(weights)) @ v.T


def fit(z_src, z_tgt, hyper: Optional[Hyper] = None, sqrt_g=None) -> MedaModel:
    """Run the alternating refinement on manifold features.

    1NN seeds the target pseudo-labels; each round re-estimates mu (unless
    pinned), rebuilds the MMD matrix, solves for beta and relabels the
    target. Stops when the labels stop changing or after ``t_max`` rounds.
    """
    hyper = hyper or Hyper()
    z_src = as_features(z_src)
    z_tgt = as_features(z_tgt, Domain.TARGET)
    if z_src.labels is None:
        raise DimensionError("source features must be labelled")
    if z_src.n_features != z_tgt.n_features:
        raise DimensionError(
            f"feature dimensions differ: {z_src.n_features} vs {z_tgt.n_features}"
        )
    n, m = z_src.n_samples, z_tgt.n_samples
    if n < 1 or m < 1:
        raise EmptyInputError("both domains need samples")
    ys = z_src.labels
    classes = np.unique(ys)
    z_all = np.vstack([z_src.data, z_tgt.data])

    yt = base_classifier_labels(z_src, z_tgt)
    spec = hyper.kernel.resolve(z_all)
    k = kernel_matrix(z_all, spec)
    a = np.concatenate([np.ones(n), np.zeros(m)])
    rhs = one_hot(ys, classes, n + m)
    fixed = a[:, None] * k
    fixed[np.diag_indices_from(fixed)] += hyper.eta
    if hyper.rho:
        fixed += hyper.rho * (laplacian_graph(z_all, hyper.p).l @ k)

    model = MedaModel(
        beta=np.zeros((n + m, len(classes))),
        train_features=z_all,
        kernel=spec,
        hyper=hyper,
        classes=classes,
        n_source=n,
        sqrt_g=sqrt_g,
    )
    for _ in range(hyper.t_max):
        if hyper.mu is None:
            mu, report = estimate_mu(z_src, z_tgt, yt, seed=hyper.seed, classes=classes)
        else:
            mu, report = hyper.mu, None
        lhs = fixed
        if hyper.lam:
            lhs = fixed + hyper.lam * (mmd_matrix(ys, yt, classes, mu) @ k)
        beta = solve_system(lhs, rhs)
        yt_new = classes[np.argmax(k[n:] @ beta, axis=1)]

        model.beta = beta
        model.mu_history.append(float(mu))
        model.reports.append(report)
        model.label_history.append(float(np.mean(yt_new == yt)))
        model.target_label_history.append(yt_new)
        if np.array_equal(yt_new, yt):
            model.converged = True
            break
        yt = yt_new
    return model


def save_model(model: MedaModel, path) -> None:
    """Write a model to an ``.npz`` container with a JSON metadata entry."""
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "artifact_version": __version__,
        "hyper": model.hyper.to_dict(),
        "kernel": asdict(model.kernel),
        "n_source": model.n_source,
        "mu_history": model.mu_history,
        "label_history": model.label_history,
        "converged": model.converged,
        "reports": [r.to_dict() if r is not None else None for r in model.reports],
    }
    arrays = {
        "beta": model.beta,
        "train_features": model.train_features,
        "classes": model.classes,
    }
    for i, labels in enumerate(model.target_label_history):
        arrays[f"target_labels_{i}"] = labels
    if model.sqrt_g is not None:
        arrays["sqrt_g"] = model.sqrt_g
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_model(path) -> MedaModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise ParseError(f"unsupported model format version {meta.get('format_version')}")
        history = []
        while f"target_labels_{len(history)}" in data:
            history.append(data[f"target_labels_{len(history)}"])
        reports = [
            None
            if r is None
            else ADistanceReport(
                r["d_marginal"],
                np.array(r["d_conditional"]),
                r["marginal_error"],
                np.array(r["conditional_errors"]),
            )
            for r in meta["reports"]
        ]
        return MedaModel(
            beta=data["beta"],
            train_features=data["train_features"],
            kernel=KernelSpec(**meta["kernel"]),
            hyper=Hyper.from_dict(meta["hyper"]),
            classes=data["classes"],
            n_source=meta["n_source"],
            mu_history=meta["mu_history"],
            label_history=meta["label_history"],
            reports=reports,
            target_label_history=history,
            converged=meta["converged"],
            sqrt_g=data["sqrt_g"] if "sqrt_g" in data else None,
        )
