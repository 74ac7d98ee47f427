"""Delimited-text ingestion, standardization, splitting and synthetic data.

The synthetic generator draws intrinsic coordinates uniformly on [0, 1]^d,
embeds them isometrically in R^D (zero padding followed by a seeded
rotation) and labels them from a class-probability function whose Hölder
constant and exponent are set by the caller. Ground truth travels with the
sample so that Bayes and excess errors can be computed exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .knn import CLASSIFICATION, REGRESSION, LabelSet


class DataError(ValueError):
    """Malformed input data."""


@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray
    labels: LabelSet
    truth: np.ndarray | None = None
    bayes_labels: np.ndarray | None = None
    label_names: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) != len(self.labels):
            raise ValueError(f"{len(pts)} points but {len(self.labels)} labels")
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=np.float64)
            if len(truth) != len(pts):
                raise ValueError("truth is not aligned with points")
            if self.labels.is_classification:
                if truth.ndim != 2 or truth.shape[1] != self.labels.n_classes:
                    raise ValueError("truth must hold one probability vector per point")
                if np.any(truth < -1e-12) or np.any(np.abs(truth.sum(axis=1) - 1) > 1e-9):
                    raise ValueError("truth rows must be probability vectors")
            object.__setattr__(self, "truth", truth)

    def __len__(self):
        return len(self.points)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mode(self) -> str:
        return self.labels.mode

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return replace(
            self,
            points=self.points[idx],
            labels=self.labels.take(idx),
            truth=None if self.truth is None else self.truth[idx],
            bayes_labels=None if self.bayes_labels is None else self.bayes_labels[idx],
        )

    def with_points(self, points) -> "LabeledDataset":
        return replace(self, points=points)


# ---------------------------------------------------------------- ingestion

def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label=None, mode: str = CLASSIFICATION, delimiter: str = ",",
             header: bool | None = None) -> LabeledDataset:
    """Read a delimited file with one sample per row.

    Parameters
    ----------
    label : str, int or None
        Label column by header name or position; the last column by default.
    mode : {"classification", "regression"}
        Class labels are mapped to 0..L-1 in order of first appearance;
        regression targets must be numeric.
    header : bool or None
        ``None`` treats the first row as a header when any of its cells is
        not a number.
    """
    if mode not in (CLASSIFICATION, REGRESSION):
        raise ValueError(f"unknown mode {mode!r}")
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh, delimiter=delimiter))]
    rows = [(ln, [c.strip() for c in r]) for ln, r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    names = None
    first = rows[0][1]
    if header is None:
        # a string class label in the first row does not make it a header
        skip = None
        if mode == CLASSIFICATION and not isinstance(label, str):
            skip = len(first) - 1 if label is None else int(label) % max(len(first), 1)
        header = isinstance(label, str) and not label.lstrip("-").isdigit() or \
            not all(_is_number(c) for j, c in enumerate(first) if j != skip)
    if header:
        names = first
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(names) if names is not None else len(rows[0][1])
    if width < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")

    if label is None:
        col = width - 1
    elif isinstance(label, str) and not label.lstrip("-").isdigit():
        if names is None or label not in names:
            raise DataError(f"{path}: unknown label column {label!r}")
        col = names.index(label)
    else:
        col = int(label)
        if col < 0:
            col += width
        if not 0 <= col < width:
            raise DataError(f"{path}: label column {label} out of range for {width} columns")

    feats, raw_labels = [], []
    for ln, r in rows:
        if len(r) != width:
            raise DataError(f"{path}: row {ln} has {len(r)} fields, expected {width}")
        vals = []
        for j, cell in enumerate(r):
            if j == col:
                continue
            if cell == "":
                raise DataError(f"{path}: row {ln} column {j + 1} is empty")
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: row {ln} column {j + 1}: non-numeric value {cell!r}") from None
        if r[col] == "":
            raise DataError(f"{path}: row {ln} has an empty label")
        feats.append(vals)
        raw_labels.append((ln, r[col]))

    feature_names = tuple(n for j, n in enumerate(names) if j != col) if names else ()
    if mode == CLASSIFICATION:
        mapping: dict[str, int] = {}
        codes = [mapping.setdefault(v, len(mapping)) for _, v in raw_labels]
        labels = LabelSet(np.array(codes), CLASSIFICATION, max(2, len(mapping)))
        label_names = tuple(mapping)
    else:
        targets = []
        for ln, v in raw_labels:
            try:
                targets.append(float(v))
            except ValueError:
                raise DataError(f"{path}: row {ln}: non-numeric target {v!r}") from None
        labels = LabelSet(np.array(targets), REGRESSION)
        label_names = ()
    return LabeledDataset(np.array(feats, dtype=np.float64).reshape(len(feats), width - 1),
                          labels, label_names=label_names, feature_names=feature_names)


def load_points(path, delimiter: str = ",", header: bool | None = None) -> np.ndarray:
    """Read a feature-only delimited file (e.g. prediction queries)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, [c.strip() for c in r]) for i, r in enumerate(csv.reader(fh, delimiter=delimiter))]
    rows = [(ln, r) for ln, r in rows if any(r)]
    if rows and (header or (header is None and not all(_is_number(c) for c in rows[0][1]))):
        rows = rows[1:]
    if not rows:
        return np.empty((0, 0))
    width = len(rows[0][1])
    out = np.empty((len(rows), width))
    for i, (ln, r) in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: row {ln} has {len(r)} fields, expected {width}")
        try:
            out[i] = [float(c) for c in r]
        except ValueError:
            raise DataError(f"{path}: row {ln}: non-numeric value") from None
    return out


def write_csv(dataset: LabeledDataset, path, delimiter: str = ",", truth_sidecar: bool = True) -> None:
    """Write features plus label column; ground truth goes to ``<stem>.truth.csv`` when present."""
    path = Path(path)
    names = list(dataset.feature_names) or [f"x{j}" for j in range(dataset.dim)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(names + ["label"])
        for x, y in zip(dataset.points, dataset.labels.values):
            if dataset.labels.is_classification:
                y = dataset.label_names[y] if dataset.label_names else int(y)
            else:
                y = repr(float(y))
            w.writerow([repr(float(v)) for v in x] + [y])
    if truth_sidecar and dataset.truth is not None:
        with truth_path(path).open("w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter)
            if dataset.labels.is_classification:
                L = dataset.labels.n_classes
                w.writerow([f"eta_{c}" for c in range(L)] + ["bayes_label"])
                for row, b in zip(dataset.truth, dataset.bayes_labels):
                    w.writerow([repr(float(v)) for v in row] + [int(b)])
            else:
                w.writerow(["mean"])
                for v in dataset.truth:
                    w.writerow([repr(float(v))])


def truth_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".truth.csv")


def load_truth(path, delimiter: str = ","):
    """Read a ground-truth sidecar; returns (eta matrix, bayes labels) or (means, None)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    head, body = rows[0], rows[1:]
    data = np.array([[float(c) for c in r] for r in body])
    if head[-1] == "bayes_label":
        return data[:, :-1], data[:, -1].astype(np.intp)
    return data[:, 0], None


# ---------------------------------------------------------- preprocessing

@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, points) -> "Standardizer":
        pts = np.asarray(points, dtype=np.float64)
        if len(pts) == 0:
            raise ValueError("cannot standardize an empty training set")
        mean = pts.mean(axis=0)
        std = pts.std(axis=0)
        return cls(mean, std)

    @property
    def scale(self) -> np.ndarray:
        # zero-variance columns are only centred
        return np.where(self.std > 0, self.std, 1.0)

    def transform(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != len(self.mean):
            raise ValueError(f"expected {len(self.mean)} columns, got shape {pts.shape}")
        return (pts - self.mean) / self.scale


def standardize(train: LabeledDataset, test: LabeledDataset | None = None):
    """Centre and scale every column with training statistics (population std).

    Returns ``(train', test', stats)``; ``test'`` is None when no test set is given.
    """
    stats = Standardizer.fit(train.points)
    tr = train.with_points(stats.transform(train.points))
    if test is None:
        return tr, None, stats
    if test.dim != train.dim:
        raise ValueError(f"train has {train.dim} columns, test has {test.dim}")
    return tr, test.with_points(stats.transform(test.points)), stats


def split(dataset: LabeledDataset, train_fraction: float, seed=0):
    """Seeded shuffle split into floor(f n) training rows and the rest."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = dataset.n
    n_train = math.floor(train_fraction * n)
    if n_train == 0 or n_train == n:
        raise ValueError(f"fraction {train_fraction} leaves an empty side for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


# -------------------------------------------------------------- synthetic

LINEAR = "linear"
RADIAL = "radial"
MULTISCALE = "multiscale"
RADIAL_RADIUS = 0.4


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic distribution.

    ``alpha`` and ``lam`` bound the class-probability function:
    ``|eta(x) - eta(x')|_inf <= lam * |x - x'|^alpha``. ``margin_exponent``
    shapes how flat eta is near the decision boundary (larger means more mass
    with a small gap between the top two classes). ``amplitude`` in (0, 1]
    caps how far eta reaches from the uniform vector.
    """

    d: int = 2
    D: int | None = None
    n: int = 1000
    alpha: float = 1.0
    lam: float = 1.0
    n_classes: int = 2
    noise_flip: float = 0.0
    seed: int = 0
    amplitude: float = 1.0
    margin_exponent: float = 1.0
    boundary: str = LINEAR
    offset: float = 0.0
    rotate: bool = True
    mode: str = CLASSIFICATION
    noise_std: float = 0.0
    scales: int = 6
    scale_ratio: float = 2.0

    def __post_init__(self):
        if self.D is None:
            object.__setattr__(self, "D", self.d)
        if not 1 <= self.d <= self.D:
            raise ValueError(f"need 1 <= d <= D, got d={self.d}, D={self.D}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if not 0 <= self.noise_flip < 0.5:
            raise ValueError("noise_flip must lie in [0, 0.5)")
        if not 0 < self.amplitude <= 1:
            raise ValueError("amplitude must lie in (0, 1]")
        if self.margin_exponent <= 0:
            raise ValueError("margin_exponent must be positive")
        if self.alpha > min(1.0, self.margin_exponent):
            raise ValueError("alpha may not exceed the margin exponent when the latter is below 1")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.scales < 1 or self.scale_ratio < 1:
            raise ValueError("multiscale profile needs scales >= 1 and scale_ratio >= 1")
        if self.boundary not in (LINEAR, RADIAL, MULTISCALE):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.mode not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @classmethod
    def parse(cls, text: str, **overrides) -> "SynthSpec":
        """Build from ``"d=2,D=5,n=1000,alpha=1"`` style text."""
        casts = {f: t for f, t in _SPEC_FIELDS.items()}
        kwargs = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, _, value = part.partition("=")
            key = _SPEC_ALIASES.get(key.strip(), key.strip())
            if key not in casts:
                raise ValueError(f"unknown synthetic parameter {key!r}")
            kwargs[key] = casts[key](value.strip())
        kwargs.update(overrides)
        return cls(**kwargs)


def _to_bool(v: str) -> bool:
    return v.lower() in ("1", "true", "yes", "on")


_SPEC_FIELDS = {
    "d": int, "D": int, "n": int, "alpha": float, "lam": float, "n_classes": int,
    "noise_flip": float, "seed": int, "amplitude": float, "margin_exponent": float,
    "boundary": str, "offset": float, "rotate": _to_bool, "mode": str, "noise_std": float,
    "scales": int, "scale_ratio": float,
}
_SPEC_ALIASES = {"lambda": "lam", "L": "n_classes", "flip": "noise_flip", "gamma": "margin_exponent",
                 "beta_profile": "margin_exponent", "noise": "noise_std"}


def _signed_power(t: np.ndarray, gamma: float) -> np.ndarray:
    return np.sign(t) * np.minimum(1.0, np.abs(t)) ** gamma


class SyntheticDistribution:
    """Sampler and ground truth for a :class:`SynthSpec`."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        rot_seed, _ = np.random.SeedSequence([spec.seed, 0x5EED]).spawn(2)
        if spec.rotate and spec.D > 1:
            g = np.random.default_rng(rot_seed).standard_normal((spec.D, spec.D))
            q, r = np.linalg.qr(g)
            self.rotation = q * np.sign(np.diag(r))
        else:
            self.rotation = np.eye(spec.D)
        gamma = spec.margin_exponent
        # transition width making lam a valid Hölder constant for exponent alpha
        scale = max(gamma, 1.0)
        if spec.mode == CLASSIFICATION:
            self.width = scale * (spec.amplitude / spec.lam) ** (1 / spec.alpha)
        else:
            # regression mean ranges over [-A, A]
            self.width = scale / 2 * (2 * spec.amplitude / spec.lam) ** (1 / spec.alpha)

    def embed(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        pad = np.zeros((len(u), self.spec.D))
        pad[:, : self.spec.d] = u
        return pad @ self.rotation.T

    def intrinsic(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return (x @ self.rotation)[:, : self.spec.d]

    def boundary_coordinate(self, u) -> np.ndarray:
        """1-Lipschitz signed coordinate whose zero set is the central decision boundary."""
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        if self.spec.boundary == LINEAR:
            g = (u - 0.5).sum(axis=1) / math.sqrt(self.spec.d)
        elif self.spec.boundary == RADIAL:
            g = RADIAL_RADIUS - np.linalg.norm(u - 0.5, axis=1)
        else:
            g = self._multiscale(u[:, 0])
        return g - self.spec.offset

    def _multiscale(self, t: np.ndarray) -> np.ndarray:
        # the unit interval is cut into `scales` segments; segment j carries
        # alternating-sign tents of width seg / counts[j], slope +-1, zero at
        # both segment ends, so the whole profile is 1-Lipschitz
        J = self.spec.scales
        seg = 1.0 / J
        counts = np.maximum(1, np.round(2 * self.spec.scale_ratio ** np.arange(J))).astype(np.intp)
        j = np.minimum((t // seg).astype(np.intp), J - 1)
        j = np.maximum(j, 0)
        h = seg / counts[j]
        s = np.clip(t - j * seg, 0, seg)
        pos = s / h
        cell = np.minimum(np.floor(pos), counts[j] - 1)
        frac = (pos - cell) * h
        tent = h / 2 - np.abs(frac - h / 2)
        return np.where(cell % 2 == 0, tent, -tent)

    def clean_eta(self, u) -> np.ndarray:
        """Class probabilities before label flipping, shape (n, L)."""
        spec = self.spec
        L = spec.n_classes
        z = self.boundary_coordinate(u) / self.width + (L - 1) / 2
        t = np.clip(z, 0, L - 1)
        lo = np.minimum(np.floor(t), L - 2).astype(np.intp)
        frac = t - lo
        q = 0.5 + 0.5 * _signed_power(2 * frac - 1, spec.margin_exponent)
        eta = np.full((len(t), L), (1 - spec.amplitude) / L)
        rows = np.arange(len(t))
        eta[rows, lo] += spec.amplitude * (1 - q)
        eta[rows, lo + 1] += spec.amplitude * q
        return eta

    def eta(self, u) -> np.ndarray:
        """Conditional class probabilities of the observed (possibly flipped) labels."""
        eta = self.clean_eta(u)
        p = self.spec.noise_flip
        if p:
            L = self.spec.n_classes
            eta = (1 - p) * eta + p * (1 - eta) / (L - 1)
        return eta

    def mean(self, u) -> np.ndarray:
        """Regression function for ``mode="regression"``."""
        z = self.boundary_coordinate(u) / self.width
        return self.spec.amplitude * _signed_power(z, self.spec.margin_exponent)

    def eta_at(self, x) -> np.ndarray:
        return self.eta(self.intrinsic(x))

    def sample(self, n: int | None = None, seed=None) -> LabeledDataset:
        spec = self.spec
        n = spec.n if n is None else n
        seed = spec.seed if seed is None else seed
        pts_ss, lab_ss = np.random.SeedSequence([*np.atleast_1d(seed).tolist(), 0xDA7A]).spawn(2)
        u = np.random.default_rng(pts_ss).random((n, spec.d))
        x = self.embed(u)
        rng = np.random.default_rng(lab_ss)
        if spec.mode == REGRESSION:
            mu = self.mean(u)
            y = mu + spec.noise_std * rng.standard_normal(n)
            return LabeledDataset(x, LabelSet(y, REGRESSION), truth=mu)
        clean = self.clean_eta(u)
        cdf = np.cumsum(clean, axis=1)
        y = np.minimum((rng.random(n)[:, None] > cdf).sum(axis=1), spec.n_classes - 1)
        if spec.noise_flip:
            flip = rng.random(n) < spec.noise_flip
            shift = rng.integers(1, spec.n_classes, size=n)
            y = np.where(flip, (y + shift) % spec.n_classes, y)
        eta = self.eta(u)
        return LabeledDataset(x, LabelSet(y, CLASSIFICATION, spec.n_classes), truth=eta,
                              bayes_labels=np.argmax(eta, axis=1))


def synth_manifold(spec: SynthSpec) -> LabeledDataset:
    """Draw ``spec.n`` labelled points from the synthetic distribution of ``spec``."""
    return SyntheticDistribution(spec).sample()


def bayes_error(dataset: LabeledDataset) -> float:
    """Plug-in Bayes risk: mean of 1 - max_l eta_l over the sample."""
    if dataset.truth is None:
        raise ValueError("dataset carries no ground truth")
    if not dataset.labels.is_classification:
        raise ValueError("Bayes 0-1 error needs classification truth")
    return float(np.mean(1 - dataset.truth.max(axis=1)))


def expected_error(truth: np.ndarray, predictions) -> float:
    """Conditional 0-1 risk of given predictions: mean of 1 - eta_{prediction}."""
    predictions = np.asarray(predictions, dtype=np.intp)
    return float(np.mean(1 - truth[np.arange(len(truth)), predictions]))


def top_two_gap(truth: np.ndarray) -> np.ndarray:
    part = np.sort(truth, axis=1)
    return part[:, -1] - part[:, -2]


def margin_mass(dataset: LabeledDataset, t: float) -> float:
    """Fraction of the sample whose top-two class-probability gap is at most ``t``."""
    if dataset.truth is None:
        raise ValueError("dataset carries no ground truth")
    return float(np.mean(top_two_gap(dataset.truth) <= t))


def estimate_margin_exponent(dataset: LabeledDataset, ts=None) -> float:
    """Least-squares slope of log P(gap <= t) against log t (empirical noise-margin exponent)."""
    if ts is None:
        ts = np.geomspace(0.02, 0.5, 8)
    ts = np.asarray(ts, dtype=np.float64)
    mass = np.array([margin_mass(dataset, t) for t in ts])
    keep = mass > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ts[keep]), np.log(mass[keep]), 1)[0])


def cube_ball_mass_constant(d: int) -> float:
    """Largest C with P(B(x, r)) >= C r^d for uniform [0,1]^d, all x in the cube, 0 < r <= sqrt(d).

    The worst case is a ball centred at a corner; the ratio of its mass to r^d
    decreases in r and reaches d^(-d/2) at the diameter.
    """
    return float(d) ** (-d / 2)
