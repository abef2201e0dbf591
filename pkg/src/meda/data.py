"""Dataset ingestion, normalisation and seeded synthetic tasks."""

import json
import os
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import (
    DegenerateError,
    DegenerateFeatureWarning,
    DimensionError,
    ParseError,
)
from .features import Domain, FeatureMatrix, as_features

NORMALIZATIONS = ("none", "zscore", "unit_l2")
FORMATS = ("dense", "sparse", "mat")
_EXTENSIONS = {
    ".csv": "dense",
    ".txt": "dense",
    ".tsv": "dense",
    ".dat": "dense",
    ".svm": "sparse",
    ".libsvm": "sparse",
    ".sparse": "sparse",
    ".mat": "mat",
}


def infer_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in _EXTENSIONS:
        raise ParseError(f"cannot infer format from extension {ext!r} of {path}")
    return _EXTENSIONS[ext]


def _parse_label(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"invalid label {token!r}", lineno) from None
    if not value.is_integer():
        raise ParseError(f"label {token!r} is not an integer", lineno)
    return int(value)


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def _parse_dense(text, has_labels):
    rows, labels = [], []
    width = None
    for lineno, line in _content_lines(text):
        tokens = line.split(",") if "," in line else line.split()
        if has_labels:
            *tokens, label = tokens
            labels.append(_parse_label(label.strip(), lineno))
        try:
            values = [float(t) for t in tokens]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DimensionError(f"line {lineno}: expected {width} features, got {len(values)}")
        rows.append(values)
    if not rows:
        raise ParseError("no data rows")
    return np.array(rows, dtype=float), (np.array(labels) if has_labels else None)


def _parse_sparse(text, n_features):
    entries, labels = [], []
    have_labels = None
    max_index = 0
    for lineno, line in _content_lines(text):
        tokens = line.split()
        labelled = ":" not in tokens[0]
        if have_labels is None:
            have_labels = labelled
        elif labelled != have_labels:
            raise ParseError("mixed labelled and unlabelled rows", lineno)
        if labelled:
            labels.append(_parse_label(tokens[0], lineno))
            tokens = tokens[1:]
        row = {}
        for tok in tokens:
            idx, sep, val = tok.partition(":")
            try:
                i, v = int(idx), float(val)
            except ValueError:
                raise ParseError(f"invalid index:value pair {tok!r}", lineno) from None
            if not sep or i < 1:
                raise ParseError(f"invalid index:value pair {tok!r}", lineno)
            if n_features is not None and i > n_features:
                raise DimensionError(f"line {lineno}: index {i} exceeds D={n_features}")
            row[i - 1] = v
            max_index = max(max_index, i)
        entries.append(row)
    if not entries:
        raise ParseError("no data rows")
    width = n_features if n_features is not None else max_index
    x = np.zeros((len(entries), width))
    for r, row in enumerate(entries):
        for i, v in row.items():
            x[r, i] = v
    return x, (np.array(labels) if have_labels else None)


def _load_mat(path):
    import scipy.io

    mat = scipy.io.loadmat(path)
    fkey = next((k for k in ("fts", "X", "features", "feas") if k in mat), None)
    if fkey is None:
        raise ParseError(f"{path}: no feature array (fts/X/features/feas)")
    x = np.asarray(mat[fkey], dtype=float)
    lkey = next((k for k in ("labels", "Y", "y", "label") if k in mat), None)
    labels = None
    if lkey is not None:
        labels = np.asarray(mat[lkey]).ravel()
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise ParseError(f"{path}: labels are not integers")
        labels = labels.astype(np.int64)
        if len(labels) != len(x):
            raise DimensionError(f"{path}: {len(labels)} labels for {len(x)} rows")
    return x, labels


def load_dataset(
    path,
    fmt: str = "auto",
    n_features: Optional[int] = None,
    has_labels: bool = True,
    domain=Domain.SOURCE,
) -> FeatureMatrix:
    """Read a feature file.

    ``dense``: delimited numbers (comma or whitespace) with the label as the
    last column. ``sparse``: ``label idx:value ...`` with 1-based indices.
    ``mat``: MATLAB file with ``fts``/``X`` features and ``labels``/``Y``.
    """
    if fmt == "auto":
        fmt = infer_format(path)
    if fmt == "mat":
        x, labels = _load_mat(path)
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        if fmt == "dense":
            x, labels = _parse_dense(text, has_labels)
        elif fmt == "sparse":
            x, labels = _parse_sparse(text, n_features)
        else:
            raise ParseError(f"unknown format {fmt!r}")
    if n_features is not None and x.shape[1] != n_features:
        raise DimensionError(f"expected {n_features} features, file has {x.shape[1]}")
    return FeatureMatrix(x, domain, labels)


def save_dataset(x: FeatureMatrix, path, fmt: str = "auto") -> None:
    """Write ``x`` so :func:`load_dataset` reproduces it bit-exactly."""
    if fmt == "auto":
        fmt = infer_format(path)
    lines = []
    for i, row in enumerate(x.data):
        label = [] if x.labels is None else [str(int(x.labels[i]))]
        if fmt == "dense":
            lines.append(",".join([repr(float(v)) for v in row] + label))
        elif fmt == "sparse":
            pairs = [f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0]
            lines.append(" ".join(label + pairs))
        else:
            raise ParseError(f"cannot write format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class NormalizationStats:
    mode: str
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None


def normalize(x, mode: str = "zscore", stats: Optional[NormalizationStats] = None):
    """Normalise features; returns ``(features, stats)``.

    ``zscore`` standardises each feature with stats fitted on ``x`` unless
    ``stats`` is given (fit on the source, apply to the target). Zero-variance
    features are centred but left unscaled. ``unit_l2`` scales rows to unit
    norm and needs no stats.
    """
    x = as_features(x)
    if mode not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {mode!r}")
    data = x.data
    if mode == "none":
        out, stats = data, stats or NormalizationStats("none")
    elif mode == "unit_l2":
        norms = np.linalg.norm(data, axis=1)
        if np.any(norms == 0):
            raise DegenerateError(f"row {int(np.argmin(norms))} is all zero")
        out, stats = data / norms[:, None], stats or NormalizationStats("unit_l2")
    else:
        if stats is None:
            mean = data.mean(axis=0)
            std = data.std(axis=0)
            flat = std == 0
            if flat.any():
                warnings.warn(
                    DegenerateFeatureWarning(
                        f"{int(flat.sum())} zero-variance feature(s) left unscaled"
                    ),
                    stacklevel=2,
                )
                std = np.where(flat, 1.0, std)
            stats = NormalizationStats("zscore", mean, std)
        if stats.mode != "zscore":
            raise ValueError(f"stats fitted for {stats.mode!r}, not zscore")
        out = (data - stats.mean) / stats.std
    if np.any(~np.any(out != 0, axis=1)):
        raise DegenerateError("normalisation produced an all-zero row")
    return x.with_data(out), stats


def reindex_labels(labels_src, labels_tgt=None):
    """Map source classes onto ``1..C``; returns ``(src, tgt, original_classes)``.

    Target labels outside the source classes become 0.
    """
    classes = np.unique(labels_src)
    src = np.searchsorted(classes, labels_src) + 1
    tgt = None
    if labels_tgt is not None:
        labels_tgt = np.asarray(labels_tgt)
        pos = np.searchsorted(classes, labels_tgt)
        pos = np.clip(pos, 0, len(classes) - 1)
        known = classes[pos] == labels_tgt
        tgt = np.where(known, pos + 1, 0)
    return src, tgt, classes


@dataclass(frozen=True)
class DatasetPair:
    source: FeatureMatrix
    target: FeatureMatrix
    name: str = "task"
    normalization: str = "none"
    classes: Optional[np.ndarray] = None

    @property
    def n_classes(self) -> int:
        return len(np.unique(self.source.labels))


def make_pair(source, target, name="task", normalization="none") -> DatasetPair:
    """Validate, re-index labels to ``1..C`` and normalise a source/target pair."""
    source = as_features(source)
    target = as_features(target, Domain.TARGET)
    if source.labels is None:
        raise DimensionError("source domain must be labelled")
    if source.n_features != target.n_features:
        raise DimensionError(
            f"source has {source.n_features} features, target has {target.n_features}"
        )
    ys, yt, classes = reindex_labels(source.labels, target.labels)
    source = FeatureMatrix(source.data, Domain.SOURCE, ys)
    target = FeatureMatrix(target.data, Domain.TARGET, yt)
    source, stats = normalize(source, normalization)
    target, _ = normalize(target, normalization, stats)
    return DatasetPair(source, target, name, normalization, classes)


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Gaussian class clusters with a global and a per-class target offset.

    ``marginal_shift`` is added to every target sample; row ``c`` of
    ``conditional_shift`` is added to target samples of class ``c + 1``.
    Class means are drawn as ``class_sep * N(0, I)``.
    """

    n_per_class: int = 100
    n_classes: int = 3
    n_features: int = 10
    marginal_shift: Optional[np.ndarray] = None
    conditional_shift: Optional[np.ndarray] = None
    noise_sigma: float = 1.0
    class_sep: float = 3.0
    seed: int = 0
    name: str = "synthetic"


def generate_synthetic(spec: SyntheticTaskSpec) -> DatasetPair:
    rng = np.random.default_rng(spec.seed)
    c, dim, k = spec.n_classes, spec.n_features, spec.n_per_class
    means = spec.class_sep * rng.normal(size=(c, dim))
    shift = np.zeros(dim) if spec.marginal_shift is None else np.broadcast_to(
        np.asarray(spec.marginal_shift, dtype=float), (dim,)
    )
    cond = np.zeros((c, dim)) if spec.conditional_shift is None else np.asarray(
        spec.conditional_shift, dtype=float
    )
    if cond.shape != (c, dim):
        raise DimensionError(f"conditional_shift must have shape {(c, dim)}, got {cond.shape}")
    labels = np.repeat(np.arange(1, c + 1), k)
    xs = means[labels - 1] + spec.noise_sigma * rng.normal(size=(c * k, dim))
    xt = means[labels - 1] + shift + cond[labels - 1]
    xt = xt + spec.noise_sigma * rng.normal(size=(c * k, dim))
    return DatasetPair(
        FeatureMatrix(xs, Domain.SOURCE, labels),
        FeatureMatrix(xt, Domain.TARGET, labels.copy()),
        spec.name,
        "none",
        np.arange(1, c + 1),
    )


def random_direction(rng, dim, length):
    v = rng.normal(size=dim)
    return length * v / np.linalg.norm(v)


def marginal_shift_spec(seed: int, magnitude: float = 8.0, **kw) -> SyntheticTaskSpec:
    """Target = source translated as a whole (class structure kept)."""
    base = SyntheticTaskSpec(seed=seed, name=f"marginal-{seed}", **kw)
    rng = np.random.default_rng([seed, 1])
    return replace(base, marginal_shift=random_direction(rng, base.n_features, magnitude))


def conditional_shift_spec(seed: int, **kw) -> SyntheticTaskSpec:
    """Target classes trade places: marginals match, class conditionals do not."""
    base = SyntheticTaskSpec(seed=seed, name=f"conditional-{seed}", **kw)
    means = base.class_sep * np.random.default_rng(seed).normal(size=(base.n_classes, base.n_features))
    # Same draw order as generate_synthetic, so these are the actual class means.
    cycled = np.roll(means, -1, axis=0)
    return replace(base, conditional_shift=cycled - means)


STANDARD_SUITE = dict(n_per_class=100, n_classes=3, n_features=10)


def standard_spec(seed: int) -> SyntheticTaskSpec:
    """The shifted-Gaussians benchmark task used for end-to-end checks.

    Moderate global translation plus smaller per-class drifts.
    """
    rng = np.random.default_rng([seed, 7])
    dim, c = STANDARD_SUITE["n_features"], STANDARD_SUITE["n_classes"]
    return SyntheticTaskSpec(
        **STANDARD_SUITE,
        marginal_shift=random_direction(rng, dim, 3.0),
        conditional_shift=np.stack([random_direction(rng, dim, 1.5) for _ in range(c)]),
        noise_sigma=1.0,
        class_sep=1.0,
        seed=seed,
        name=f"standard-{seed}",
    )


def write_json(payload, path) -> None:
    """Canonical JSON: sorted keys, fixed indentation, trailing newline."""
    text = json.dumps(payload, sort_keys=True, indent=2, default=_json_default)
    if path in (None, "-"):
        print(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")

