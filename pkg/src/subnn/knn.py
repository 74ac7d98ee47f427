"""k-NN regression estimates, the induced plug-in classifier, and the r_k bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .neighbors import NNIndex, build_index, sorted_neighbor_order

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class LabelSet:
    """Labels aligned with a point set.

    Classification labels are dense integers ``0..n_classes-1``; regression
    targets are reals and ``n_classes`` is 0.
    """

    values: np.ndarray
    mode: str = CLASSIFICATION
    n_classes: int = 0

    def __post_init__(self):
        if self.mode not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == CLASSIFICATION:
            vals = np.asarray(self.values)
            if vals.size and not np.all(vals == np.round(vals)):
                raise ValueError("classification labels must be integers")
            vals = vals.astype(np.intp)
            if self.n_classes == 1 or self.n_classes < 0:
                raise ValueError(f"need at least 2 classes, got {self.n_classes}")
            n_classes = self.n_classes or max(int(vals.max()) + 1 if vals.size else 0, 2)
            if vals.size and (vals.min() < 0 or vals.max() >= n_classes):
                raise ValueError(f"labels must lie in 0..{n_classes - 1}")
            object.__setattr__(self, "n_classes", n_classes)
        else:
            vals = np.asarray(self.values, dtype=np.float64)
            object.__setattr__(self, "n_classes", 0)
        vals = vals.reshape(-1).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    @property
    def is_classification(self) -> bool:
        return self.mode == CLASSIFICATION

    def take(self, indices) -> "LabelSet":
        return LabelSet(self.values[np.asarray(indices)], self.mode, self.n_classes)

    def with_values(self, values) -> "LabelSet":
        return LabelSet(values, self.mode, self.n_classes)


def classification_labels(values, n_classes: int = 0) -> LabelSet:
    return LabelSet(values, CLASSIFICATION, n_classes)


def regression_targets(values) -> LabelSet:
    return LabelSet(values, REGRESSION)


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Argmax over the last axis with ties going to the smallest index."""
    # np.argmax already returns the first maximal entry
    return np.argmax(scores, axis=-1)


def majority_vote(votes: np.ndarray, n_classes: int) -> np.ndarray:
    """Most frequent label along axis 0 of an (I, ...) vote array; ties to the smallest label."""
    votes = np.asarray(votes, dtype=np.intp)
    counts = np.empty(votes.shape[1:] + (n_classes,), dtype=np.intp)
    for c in range(n_classes):
        counts[..., c] = np.count_nonzero(votes == c, axis=0)
    return argmax_lowest(counts)


def mean_vote(values: np.ndarray) -> np.ndarray:
    """Means along axis 0 of an (I, ...) array, summed in submodel order."""
    values = np.asarray(values, dtype=np.float64)
    total = np.zeros(values.shape[1:])
    for row in values:
        total = total + row
    return total / values.shape[0]


class KnnModel:
    """k-NN predictor over a labelled sample.

    ``k`` is clamped to the sample size; ``k_clamped`` records whether that
    happened.
    """

    def __init__(self, points, labels: LabelSet, k: int, index: NNIndex | None = None,
                 index_mode: str = "spatial"):
        self.index = index if index is not None else build_index(points, mode=index_mode)
        if len(labels) != self.index.n:
            raise ValueError(f"{len(labels)} labels for {self.index.n} points")
        k = int(k)
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        self.labels = labels
        self.k_requested = k
        self.k = min(k, self.index.n)
        self.k_clamped = k > self.index.n

    @property
    def points(self) -> np.ndarray:
        return self.index.points

    @property
    def mode(self) -> str:
        return self.labels.mode

    @property
    def n_classes(self) -> int:
        return self.labels.n_classes

    def _require(self, mode):
        if self.mode != mode:
            raise ValueError(f"operation needs a {mode} model, this one is {self.mode}")

    def class_proportions(self, queries) -> np.ndarray:
        """Row-wise k-NN estimate of the class-probability vector, shape (q, L)."""
        self._require(CLASSIFICATION)
        idx, _, _ = self.index.query(queries, self.k)
        lab = self.labels.values[idx]
        counts = np.zeros((lab.shape[0], self.n_classes))
        for c in range(self.n_classes):
            counts[:, c] = np.count_nonzero(lab == c, axis=1)
        return counts / self.k

    def classify(self, queries) -> np.ndarray:
        return argmax_lowest(self.class_proportions(queries))

    def regress(self, queries) -> np.ndarray:
        self._require(REGRESSION)
        idx, _, _ = self.index.query(queries, self.k)
        return self.labels.values[idx].mean(axis=1)

    def predict(self, queries) -> np.ndarray:
        if self.mode == CLASSIFICATION:
            return self.classify(queries)
        return self.regress(queries)


def knn_regress(model: KnnModel, x) -> np.ndarray:
    """Class-probability estimate at a single point (fractions of the k neighbors per class)."""
    return model.class_proportions(np.asarray(x, dtype=np.float64)[None, :])[0]


def knn_regress_value(model: KnnModel, x) -> float:
    """Mean target of the k nearest neighbors."""
    return float(model.regress(np.asarray(x, dtype=np.float64)[None, :])[0])


def knn_classify(model: KnnModel, x) -> int:
    return int(argmax_lowest(knn_regress(model, x)))


def neighbor_statistics(index: NNIndex, labels: LabelSet, queries, ks) -> np.ndarray:
    """k-NN predictions at every query for each k in ``ks`` in one pass.

    Returns an array of shape (q, len(ks)): predicted labels for
    classification, neighbor means for regression. The neighbor order is the
    index's tie-broken order, so column j equals ``KnnModel(k=ks[j]).predict``
    (exactly for labels, up to summation rounding for regression means).
    """
    ks = np.minimum(np.asarray(ks, dtype=np.intp), index.n)
    # counts are accumulated between consecutive distinct cut points only
    cuts, where = np.unique(ks, return_inverse=True)
    starts = np.concatenate([[0], cuts[:-1]])
    kmax = int(cuts[-1])
    q = np.asarray(queries, dtype=np.float64)
    out = np.empty((len(q), len(ks)), dtype=np.intp if labels.is_classification else np.float64)
    chunk = max(1, 2_000_000 // max(1, kmax * max(1, labels.n_classes)))
    for start in range(0, len(q), chunk):
        order = sorted_neighbor_order(index, q[start:start + chunk], kmax)
        lab = labels.values[order]
        if labels.is_classification:
            counts = np.empty((len(lab), len(cuts), labels.n_classes), dtype=np.intp)
            for c in range(labels.n_classes):
                seg = np.add.reduceat((lab == c).view(np.int8), starts, axis=1, dtype=np.intp)
                counts[:, :, c] = np.cumsum(seg, axis=1)
            out[start:start + len(lab)] = argmax_lowest(counts)[:, where]
        else:
            sums = np.cumsum(np.add.reduceat(lab, starts, axis=1), axis=1)
            out[start:start + len(lab)] = (sums / cuts)[:, where]
    return out


@dataclass(frozen=True)
class TheoryParams:
    """Constants entering the uniform r_k bound.

    ``vc_dim`` defaults to D + 2, the VC dimension of Euclidean balls in R^D.
    """

    c_d: float
    d: int
    delta: float = 0.05
    vc_dim: int | None = None
    ambient_dim: int | None = None

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.d < 1:
            raise ValueError("intrinsic dimension must be >= 1")
        if self.c_d <= 0:
            raise ValueError("C_d must be positive")
        if self.vc_dim is None:
            object.__setattr__(self, "vc_dim", (self.ambient_dim or self.d) + 2)
        if self.vc_dim < 1:
            raise ValueError("VC dimension must be positive")


def rk_theoretical_bound(params: TheoryParams, n: int, k: int) -> float:
    """High-probability uniform upper bound on the k-th NN distance.

    (3 / C_d)^(1/d) * max(k/n, (V ln(2n) + ln(8/delta)) / n)^(1/d)
    """
    if n < 1 or not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    vc_term = (params.vc_dim * math.log(2 * n) + math.log(8 / params.delta)) / n
    return (3 / params.c_d) ** (1 / params.d) * max(k / n, vc_term) ** (1 / params.d)
