"""Two-stage cross-validated choice of the neighbor count k.

Stage one scans powers of two; stage two scans a linear window around the
stage-one winner. The loss is either the plain k-NN validation loss or, when
an ensemble shape (ratio, number of models) is given, the validation loss of
the denoised-subsample ensemble built with that k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ensemble import child_seeds, draw_subsample, subsample_size
from .knn import LabelSet, majority_vote, mean_vote, neighbor_statistics
from .neighbors import build_index


def stage1_grid(n: int) -> list[int]:
    """Powers 2, 4, ..., 2^ceil(log2 n), clamped to n without duplicates."""
    if n < 2:
        raise ValueError(f"stage-one grid needs n >= 2, got {n}")
    top = math.ceil(math.log2(n))
    return sorted({min(2 ** i, n) for i in range(1, top + 1)})


def stage2_grid(k_prime: int, n: int) -> list[int]:
    """Integers from ceil(k'/2) - 10 to 2k' + 10, clamped into [1, n]."""
    if not 1 <= k_prime <= n:
        raise ValueError(f"need 1 <= k' <= n, got k'={k_prime}, n={n}")
    lo = max(1, -(-k_prime // 2) - 10)
    hi = min(n, 2 * k_prime + 10)
    return list(range(lo, hi + 1))


@dataclass(frozen=True)
class CvConfig:
    folds: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least two folds")


@dataclass
class CvResult:
    chosen_k: int
    stage1_k: int
    stage1_grid: list[int]
    stage1_losses: list[float]
    stage2_grid: list[int] = field(default_factory=list)
    stage2_losses: list[float] = field(default_factory=list)
    degenerate: bool = False
    objective: str = "knn"

    @property
    def chosen_loss(self) -> float:
        if not self.stage2_grid:
            return float("nan")
        return self.stage2_losses[self.stage2_grid.index(self.chosen_k)]

    def to_dict(self) -> dict:
        return {
            "chosen_k": self.chosen_k,
            "stage1_k": self.stage1_k,
            "stage1_grid": list(self.stage1_grid),
            "stage1_losses": list(self.stage1_losses),
            "stage2_grid": list(self.stage2_grid),
            "stage2_losses": list(self.stage2_losses),
            "degenerate": self.degenerate,
            "objective": self.objective,
        }


def make_folds(n: int, folds: int, seed) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n)`` cut into ``folds`` near-equal validation blocks."""
    if folds > n:
        raise ValueError(f"{folds} folds for {n} points")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(b) for b in np.array_split(perm, folds)]


class _FoldEvaluator:
    """Per-fold state reused by both stages (fixed folds and fixed subsamples)."""

    def __init__(self, points, labels: LabelSet, val_idx, ratio, n_models, seed, index_mode):
        n = len(points)
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        train_idx = np.flatnonzero(mask)
        self.labels = labels
        self.train_labels = labels.take(train_idx)
        self.val_x = points[val_idx]
        self.val_y = labels.values[val_idx]
        self.train_x = points[train_idx]
        self.index = build_index(self.train_x, mode=index_mode)
        self.subsamples = None
        if ratio is not None:
            m = subsample_size(ratio, len(train_idx))
            self.subsamples = []
            for s in child_seeds(seed, n_models):
                sub = draw_subsample(len(train_idx), m, s)
                nn, _, _ = build_index(self.train_x[sub], mode=index_mode).query(self.val_x, 1)
                self.subsamples.append((sub, nn[:, 0]))

    @property
    def n_train(self) -> int:
        return len(self.train_x)

    def predictions(self, grid) -> np.ndarray:
        if self.subsamples is None:
            return neighbor_statistics(self.index, self.train_labels, self.val_x, grid)
        votes = []
        for sub, nn in self.subsamples:
            denoised = neighbor_statistics(self.index, self.train_labels, self.train_x[sub], grid)
            votes.append(denoised[nn])
        votes = np.stack(votes)  # (I, q, G)
        if self.labels.is_classification:
            return majority_vote(votes, self.labels.n_classes)
        return mean_vote(votes)

    def loss_sums(self, grid) -> np.ndarray:
        pred = self.predictions(grid)
        if self.labels.is_classification:
            return np.count_nonzero(pred != self.val_y[:, None], axis=0).astype(np.float64)
        return np.sum((pred - self.val_y[:, None]) ** 2, axis=0)


def cross_validate_k(points, labels: LabelSet, config: CvConfig = CvConfig(),
                     ratio: float | None = None, n_models: int = 1,
                     index_mode: str = "spatial") -> CvResult:
    """Choose k by two-stage cross-validation.

    Validation loss at each k is pooled over all folds (misclassification rate
    or mean squared error over every held-out point). Ties go to the smaller
    k. With ``ratio`` set the loss is that of the subsample ensemble with
    ``n_models`` members; subsamples are drawn once per fold and reused for
    every k.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} points")
    if n < 2 * config.folds:
        raise ValueError(f"need at least {2 * config.folds} points for {config.folds}-fold CV, got {n}")
    objective = "knn" if ratio is None else f"subnn({ratio},{n_models})"
    if labels.is_classification and len(np.unique(labels.values)) == 1:
        warnings.warn("all training labels are identical; cross-validation skipped, k=1", stacklevel=2)
        return CvResult(1, 1, [], [], [1], [0.0], degenerate=True, objective=objective)

    folds = make_folds(n, config.folds, config.seed)
    fold_seeds = child_seeds(config.seed, len(folds))
    evaluators = [_FoldEvaluator(points, labels, v, ratio, n_models, s, index_mode)
                  for v, s in zip(folds, fold_seeds)]
    n_train = min(ev.n_train for ev in evaluators)

    def losses(grid):
        total = sum(ev.loss_sums(grid) for ev in evaluators)
        return [float(x) for x in total / n]

    g1 = stage1_grid(n_train)
    l1 = losses(g1)
    k1 = g1[int(np.argmin(l1))]
    g2 = stage2_grid(k1, n_train)
    l2 = losses(g2)
    k2 = g2[int(np.argmin(l2))]
    return CvResult(k2, k1, g1, l1, g2, l2, objective=objective)
