"""Denoised 1-NN submodels, their majority/mean ensemble, and bagged 1-NN.

A denoised submodel keeps a random subsample of the training set whose labels
have been replaced by the full-data k-NN prediction at each subsample point;
it then answers queries with plain 1-NN over that subsample. The ensemble
aggregates a handful of such submodels built on independent subsamples.
Bagged 1-NN is the same construction with the original labels kept.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .knn import CLASSIFICATION, KnnModel, LabelSet, majority_vote, mean_vote
from .neighbors import NNIndex, build_index

MAJORITY = "majority"
MEAN = "mean"

_WARMUP_QUERIES = 16


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_subsample(n: int, m: int, rng=None) -> np.ndarray:
    """``m`` distinct indices drawn uniformly without replacement from ``range(n)``, sorted."""
    n, m = int(n), int(m)
    if m < 1:
        raise ValueError(f"subsample size must be positive, got {m}")
    if m > n:
        raise ValueError(f"subsample size {m} exceeds sample size {n}")
    idx = _rng(rng).choice(n, size=m, replace=False)
    return np.sort(idx)


def subsample_size(ratio: float, n: int) -> int:
    """Subsample size for ratio m/n; errors when fewer than one point would be kept."""
    if not 0 < ratio <= 1:
        raise ValueError(f"subsampling ratio must lie in (0, 1], got {ratio}")
    m = math.floor(ratio * n + 1e-9)
    if m < 1:
        raise ValueError(f"ratio {ratio} keeps no points of a sample of size {n}")
    return m


def child_seeds(seed, count: int) -> list[int]:
    """Independent integer seeds for ``count`` submodels, derived from one master seed."""
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(count)]


def default_workers(n_models: int) -> int:
    env = os.environ.get("SUBNN_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, min(n_models, os.cpu_count() or 1))


@dataclass(frozen=True)
class DenoisedModel:
    """1-NN over a subsample carrying (possibly denoised) labels."""

    sub_points: np.ndarray
    labels: LabelSet
    sub_index: NNIndex
    source_indices: np.ndarray
    k: int | None = None

    @property
    def m(self) -> int:
        return len(self.source_indices)

    @property
    def mode(self) -> str:
        return self.labels.mode

    def predict(self, queries) -> np.ndarray:
        nn, _, _ = self.sub_index.query(queries, 1)
        return self.labels.values[nn[:, 0]]


def _subsample_model(points, labels: LabelSet, indices, k, index_mode) -> DenoisedModel:
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 0:
        raise ValueError("subsample is empty")
    if len(np.unique(indices)) != len(indices):
        raise ValueError("subsample indices must be distinct")
    sub = points[indices]
    return DenoisedModel(sub, labels, build_index(sub, mode=index_mode), indices, k)


def build_denoised(full: KnnModel, indices, index_mode: str = "spatial") -> DenoisedModel:
    """Prelabel the subsample ``indices`` with the full-data k-NN prediction and index it for 1-NN."""
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 0:
        raise ValueError("subsample is empty")
    denoised = full.labels.with_values(full.predict(full.points[indices]))
    return _subsample_model(full.points, denoised, indices, full.k, index_mode)


def build_plain(points, labels: LabelSet, indices, index_mode: str = "spatial") -> DenoisedModel:
    """1-NN over the subsample with its original labels (the bagging building block)."""
    indices = np.asarray(indices, dtype=np.intp)
    return _subsample_model(np.asarray(points), labels.take(indices), indices, None, index_mode)


def denoised_predict(model: DenoisedModel, x):
    value = model.predict(np.asarray(x, dtype=np.float64)[None, :])[0]
    return value.item()


@dataclass
class BatchPrediction:
    """Ensemble predictions for a query batch plus wall-clock timings in seconds."""

    predictions: np.ndarray
    submodel_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    aggregation_time: float = 0.0

    @property
    def max_time(self) -> float:
        """Slowest submodel plus aggregation: the effective time with one unit per subsample."""
        if len(self.submodel_times) == 0:
            return self.aggregation_time
        return float(np.max(self.submodel_times)) + self.aggregation_time

    @property
    def mean_time(self) -> float:
        if len(self.submodel_times) == 0:
            return self.aggregation_time
        return float(np.mean(self.submodel_times)) + self.aggregation_time


class _Ensemble:
    kind = "ensemble"

    def __init__(self, submodels, aggregation: str | None = None, seeds=None):
        submodels = list(submodels)
        if not submodels:
            raise ValueError("an ensemble needs at least one submodel")
        modes = {sm.mode for sm in submodels}
        if len(modes) != 1:
            raise ValueError("submodels disagree on mode")
        if len({sm.m for sm in submodels}) != 1:
            raise ValueError("submodels disagree on subsample size")
        self.submodels = submodels
        self.mode = modes.pop()
        self.n_classes = submodels[0].labels.n_classes
        if aggregation is None:
            aggregation = MAJORITY if self.mode == CLASSIFICATION else MEAN
        if aggregation not in (MAJORITY, MEAN):
            raise ValueError(f"unknown aggregation {aggregation!r}")
        if aggregation == MAJORITY and self.mode != CLASSIFICATION:
            raise ValueError("majority aggregation needs classification labels")
        self.aggregation = aggregation
        self.seeds = list(seeds) if seeds is not None else None

    @property
    def n_models(self) -> int:
        return len(self.submodels)

    @property
    def m(self) -> int:
        return self.submodels[0].m

    @property
    def dim(self) -> int:
        return self.submodels[0].sub_index.dim

    def aggregate(self, votes: np.ndarray) -> np.ndarray:
        if self.aggregation == MAJORITY:
            return majority_vote(votes, self.n_classes)
        return mean_vote(votes)

    def predict_one(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"query dimension mismatch: expected {self.dim}, got {x.shape}")
        votes = np.array([[denoised_predict(sm, x)] for sm in self.submodels])
        return self.aggregate(votes)[0].item()

    def predict_batch(self, queries, timing: bool = False, workers: int | None = None) -> BatchPrediction:
        """Predict a batch with one worker per submodel, merged in submodel order.

        With ``timing`` set, each submodel first answers a small untimed warm-up
        batch and is then timed over the whole batch on its worker.
        """
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim == 1:
            q = q.reshape(1, -1)
        if q.ndim != 2 or q.shape[1] != self.dim:
            raise ValueError(f"query dimension mismatch: expected D={self.dim}, got shape {q.shape}")
        workers = workers or default_workers(self.n_models)

        def run(sm):
            if timing and len(q):
                sm.predict(q[:_WARMUP_QUERIES])
            t0 = time.perf_counter()
            out = sm.predict(q)
            return out, time.perf_counter() - t0

        if workers == 1 or self.n_models == 1:
            results = [run(sm) for sm in self.submodels]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, self.submodels))
        votes = np.stack([r[0] for r in results]) if len(q) else np.empty((self.n_models, 0))
        t0 = time.perf_counter()
        preds = self.aggregate(votes)
        agg = time.perf_counter() - t0
        times = np.array([r[1] for r in results])
        if not timing:
            return BatchPrediction(preds)
        return BatchPrediction(preds, times, agg)

    def predict(self, queries) -> np.ndarray:
        return self.predict_batch(queries).predictions


class SubNNModel(_Ensemble):
    kind = "subnn"

    def __init__(self, submodels, aggregation=None, seeds=None):
        super().__init__(submodels, aggregation, seeds)
        if len({sm.k for sm in self.submodels}) != 1:
            raise ValueError("submodels disagree on the denoising k")
        self.k = self.submodels[0].k


class BaggedModel(_Ensemble):
    kind = "bagged"


def build_subnn(full: KnnModel, ratio: float, n_models: int, seed=0, aggregation=None,
                index_mode: str = "spatial") -> SubNNModel:
    """Ensemble of ``n_models`` denoised 1-NN submodels over independent subsamples."""
    if n_models < 1:
        raise ValueError("need at least one submodel")
    n = full.index.n
    m = subsample_size(ratio, n)
    seeds = child_seeds(seed, n_models)
    subs = [build_denoised(full, draw_subsample(n, m, s), index_mode) for s in seeds]
    return SubNNModel(subs, aggregation, seeds)


def build_bagged(points, labels: LabelSet, ratio: float, n_models: int, seed=0, aggregation=None,
                 index_mode: str = "spatial") -> BaggedModel:
    """Ensemble of plain 1-NN predictors over independent subsamples (no denoising)."""
    if n_models < 1:
        raise ValueError("need at least one submodel")
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    m = subsample_size(ratio, n)
    seeds = child_seeds(seed, n_models)
    subs = [build_plain(points, labels, draw_subsample(n, m, s), index_mode) for s in seeds]
    return BaggedModel(subs, aggregation, seeds)


def subnn_predict(model: SubNNModel, x):
    """Majority label (classification) or mean (regression) of the submodel predictions at ``x``."""
    return model.predict_one(x)


def subnn_predict_batch(model: SubNNModel, queries, timing: bool = False, workers=None) -> BatchPrediction:
    return model.predict_batch(queries, timing=timing, workers=workers)


def bagged_predict(model: BaggedModel, x):
    return model.predict_one(x)
