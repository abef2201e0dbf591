from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DimensionError


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class FeatureMatrix:
    """Samples-by-features matrix tagged with its domain.

    ``labels`` are integers in ``1..C``. Source matrices carry true labels;
    target matrices carry either held-out truth or pseudo-labels.
    """

    data: np.ndarray
    domain: Domain = Domain.SOURCE
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise DimensionError(f"feature data must be 2-D, got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "domain", Domain(self.domain))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (data.shape[0],):
                raise DimensionError(
                    f"expected {data.shape[0]} labels, got shape {labels.shape}"
                )
            labels = labels.astype(np.int64)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]

    def with_data(self, data) -> "FeatureMatrix":
        return replace(self, data=data)

    def with_labels(self, labels) -> "FeatureMatrix":
        return replace(self, labels=labels)

    def __len__(self):
        return self.n_samples


def as_features(x, domain=Domain.SOURCE, labels=None) -> FeatureMatrix:
    if isinstance(x, FeatureMatrix):
        return x
    return FeatureMatrix(np.asarray(x, dtype=float), domain, labels)
