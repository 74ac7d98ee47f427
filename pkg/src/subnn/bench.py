"""Benchmark harness: errors, prediction times and their ratios to k-NN.

Prediction time for an ensemble is reported two ways: the slowest submodel
plus aggregation (the effective time with one computing unit per subsample)
and the average submodel plus aggregation.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import (LabeledDataset, SynthSpec, SyntheticDistribution, bayes_error,
                   cube_ball_mass_constant, expected_error)
from .ensemble import (BaggedModel, BatchPrediction, SubNNModel, _Ensemble, build_bagged,
                       build_subnn, child_seeds)
from .knn import CLASSIFICATION, KnnModel, TheoryParams, rk_theoretical_bound
from .neighbors import build_index
from .selection import CvConfig, cross_validate_k

KNN = "kNN"
ONE_NN = "1NN"


def subnn_name(ratio, n_models) -> str:
    return f"subNN({ratio:g},{n_models})"


def bagged_name(ratio, n_models) -> str:
    return f"bagged({ratio:g},{n_models})"


@dataclass
class TimingRecord:
    max_time: float
    avg_time: float
    submodel_times: list = field(default_factory=list)


def prediction_error(predictions, targets, mode: str) -> float:
    """0-1 error for classification, mean squared error for regression."""
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if len(predictions) != len(targets):
        raise ValueError("predictions and targets differ in length")
    if len(targets) == 0:
        raise ValueError("empty test set")
    if mode == CLASSIFICATION:
        return float(np.mean(predictions != targets))
    return float(np.mean((predictions.astype(np.float64) - targets) ** 2))


def timed_predict(model, queries, workers=None):
    """Predictions plus a :class:`TimingRecord`; one small untimed warm-up batch first."""
    if isinstance(model, _Ensemble):
        out: BatchPrediction = model.predict_batch(queries, timing=True, workers=workers)
        return out.predictions, TimingRecord(out.max_time, out.mean_time, list(out.submodel_times))
    model.predict(queries[:16])
    t0 = time.perf_counter()
    pred = model.predict(queries)
    dt = time.perf_counter() - t0
    return pred, TimingRecord(dt, dt, [dt])


def evaluate_method(model, test: LabeledDataset, workers=None):
    """Test error and timing of a trained model on a labelled test set."""
    if model.mode != test.mode:
        raise ValueError(f"{model.mode} model evaluated on {test.mode} data")
    if test.n == 0:
        raise ValueError("empty test set")
    pred, timing = timed_predict(model, test.points, workers)
    return prediction_error(pred, test.labels.values, test.mode), timing


@dataclass
class BenchRow:
    method: str
    error: float
    relative_error: float
    time_max: float
    time_avg: float
    relative_time_max: float
    relative_time_avg: float
    k: int | None = None
    seed: int = 0
    repetitions: int = 1
    error_std: float = 0.0
    flag: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num, den):
    return num / den if den > 0 else num


def relative_table(results) -> list[BenchRow]:
    """Divide every row's error and times by those of the ``kNN`` row.

    ``results`` holds dicts with keys method, error, time_max, time_avg and
    optionally k, seed, repetitions, error_std. When the k-NN error or time is
    zero the absolute value is reported in its place and the row is flagged.
    """
    results = list(results)
    base = next((r for r in results if r["method"] == KNN), None)
    if base is None:
        raise ValueError("relative table needs a kNN row")
    flags = []
    if base["error"] <= 0:
        flags.append("zero-knn-error")
    if base["time_max"] <= 0 or base["time_avg"] <= 0:
        flags.append("zero-knn-time")
    rows = []
    for r in results:
        is_base = r["method"] == KNN
        rows.append(BenchRow(
            method=r["method"],
            error=r["error"],
            relative_error=1.0 if is_base else _ratio(r["error"], base["error"]),
            time_max=r["time_max"],
            time_avg=r["time_avg"],
            relative_time_max=1.0 if is_base else _ratio(r["time_max"], base["time_max"]),
            relative_time_avg=1.0 if is_base else _ratio(r["time_avg"], base["time_avg"]),
            k=r.get("k"),
            seed=r.get("seed", 0),
            repetitions=r.get("repetitions", 1),
            error_std=r.get("error_std", 0.0),
            flag=",".join(flags),
        ))
    return rows


# ------------------------------------------------------------------ sweeps

@dataclass
class SweepSpec:
    """Grid of ensemble shapes to benchmark against k-NN and 1-NN."""

    ratios: tuple = (0.1,)
    n_models: tuple = (1, 3, 10)
    repetitions: int = 5
    seed: int = 0
    k: int | str = "cv"
    folds: int = 2
    bagged: bool = True
    workers: int | None = None
    name: str = "sweep"

    def __post_init__(self):
        if any(not 0 < r <= 1 for r in self.ratios):
            raise ValueError("every ratio must lie in (0, 1]")
        if any(i < 1 for i in self.n_models):
            raise ValueError("every ensemble size must be >= 1")
        if self.repetitions < 1:
            raise ValueError("need at least one repetition")


def _choose_k(train: LabeledDataset, spec: SweepSpec, seed, ratio=None, n_models=1):
    if spec.k != "cv":
        return int(spec.k)
    return cross_validate_k(train.points, train.labels, CvConfig(spec.folds, seed),
                            ratio=ratio, n_models=n_models).chosen_k


def run_repetition(train: LabeledDataset, test: LabeledDataset, spec: SweepSpec, rep: int) -> list[dict]:
    """One repetition of every method; returns raw per-method records."""
    seed = child_seeds(spec.seed, spec.repetitions)[rep]
    records = []

    def record(method, model, k, ratio=None, n_models=None):
        err, tm = evaluate_method(model, test, spec.workers)
        records.append({"method": method, "rep": rep, "seed": seed, "error": err,
                        "time_max": tm.max_time, "time_avg": tm.avg_time, "k": k,
                        "ratio": ratio, "n_models": n_models})

    index = build_index(train.points)
    k = _choose_k(train, spec, seed)
    knn = KnnModel(None, train.labels, k, index=index)
    record(KNN, knn, knn.k)
    record(ONE_NN, KnnModel(None, train.labels, 1, index=index), 1)
    for ratio in spec.ratios:
        for n_models in spec.n_models:
            ks = _choose_k(train, spec, seed, ratio, n_models)
            full = KnnModel(None, train.labels, ks, index=index)
            record(subnn_name(ratio, n_models), build_subnn(full, ratio, n_models, seed), full.k,
                   ratio, n_models)
            if spec.bagged:
                record(bagged_name(ratio, n_models),
                       build_bagged(train.points, train.labels, ratio, n_models, seed), None,
                       ratio, n_models)
    return records


def summarize(raw: list[dict]) -> list[BenchRow]:
    """Collapse per-repetition records: mean/std error, median times, median k."""
    methods = list(dict.fromkeys(r["method"] for r in raw))
    summary = []
    for m in methods:
        rs = [r for r in raw if r["method"] == m]
        errs = np.array([r["error"] for r in rs])
        ks = [r["k"] for r in rs if r["k"] is not None]
        summary.append({
            "method": m,
            "error": float(errs.mean()),
            "error_std": float(errs.std()),
            "time_max": float(np.median([r["time_max"] for r in rs])),
            "time_avg": float(np.median([r["time_avg"] for r in rs])),
            "k": int(np.median(ks)) if ks else None,
            "seed": rs[0]["seed"],
            "repetitions": len(rs),
        })
    return relative_table(summary)


@dataclass
class SweepResult:
    spec: SweepSpec
    raw: list
    rows: list

    def row(self, method) -> BenchRow:
        return next(r for r in self.rows if r.method == method)

    def curves(self):
        """Per-ratio curves of error and time against ensemble size."""
        out = {"error": [], "time": []}
        for ratio in self.spec.ratios:
            for n_models in self.spec.n_models:
                for kind, name in (("subNN", subnn_name(ratio, n_models)),
                                   ("bagged", bagged_name(ratio, n_models))):
                    rs = [r for r in self.raw if r["method"] == name]
                    if not rs:
                        continue
                    e = np.array([r["error"] for r in rs])
                    t = np.array([r["time_max"] for r in rs])
                    out["error"].append((ratio, n_models, kind, float(e.mean()), float(e.std())))
                    out["time"].append((ratio, n_models, kind, float(np.median(t)), float(t.std())))
        base = {m: [r for r in self.raw if r["method"] == m] for m in (KNN, ONE_NN)}
        for m, rs in base.items():
            e = np.array([r["error"] for r in rs])
            t = np.array([r["time_max"] for r in rs])
            out["error"].append(("", "", m, float(e.mean()), float(e.std())))
            out["time"].append(("", "", m, float(np.median(t)), float(t.std())))
        return out


def sweep(train: LabeledDataset, test: LabeledDataset, spec: SweepSpec) -> SweepResult:
    """Train and evaluate k-NN, 1-NN, and every (ratio, I) ensemble over repetitions."""
    for ratio in spec.ratios:
        if ratio * train.n < 1:
            raise ValueError(f"ratio {ratio} leaves no points of {train.n}")
    raw = []
    for rep in range(spec.repetitions):
        raw.extend(run_repetition(train, test, spec, rep))
    return SweepResult(spec, raw, summarize(raw))


# ----------------------------------------------------------------- reports

TABLE_COLUMNS = ["method", "relative_error", "relative_time", "relative_avg_time", "error",
                 "error_std", "time_max", "time_avg", "k", "repetitions", "flag"]


def write_table(rows, path, delimiter=",") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow([r.method, f"{r.relative_error:.3f}", f"{r.relative_time_max:.3f}",
                        f"{r.relative_time_avg:.3f}", f"{r.error:.6g}", f"{r.error_std:.6g}",
                        f"{r.time_max:.6g}", f"{r.time_avg:.6g}", "" if r.k is None else r.k,
                        r.repetitions, r.flag])


def write_curves(curves: dict, out_dir, experiment: str) -> list[Path]:
    paths = []
    for metric, rows in curves.items():
        p = Path(out_dir) / f"{experiment}_{metric}_vs_I.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ratio", "I", "method", "mean", "std"])
            for row in rows:
                w.writerow([row[0], row[1], row[2], f"{row[3]:.6g}", f"{row[4]:.6g}"])
        paths.append(p)
    return paths


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def save_raw(result: SweepResult, path, meta: dict | None = None) -> None:
    doc = {"spec": asdict(result.spec), "raw": result.raw, "meta": meta or {}}
    Path(path).write_text(json.dumps(doc, indent=2, default=_json_default))


def load_raw(path) -> SweepResult:
    doc = json.loads(Path(path).read_text())
    spec = doc["spec"]
    spec["ratios"] = tuple(spec["ratios"])
    spec["n_models"] = tuple(spec["n_models"])
    raw = doc["raw"]
    return SweepResult(SweepSpec(**spec), raw, summarize(raw))


def emit_report(result: SweepResult, out_dir, meta: dict | None = None, plot: bool = False) -> dict:
    """Write the table, JSON summary, raw records, curve files and (optionally) figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = result.spec.name
    write_table(result.rows, out / f"{name}_table.csv")
    (out / f"{name}_report.json").write_text(json.dumps(
        {"spec": asdict(result.spec), "meta": meta or {}, "rows": [r.to_dict() for r in result.rows]},
        indent=2, default=_json_default))
    save_raw(result, out / f"{name}_raw.json", meta)
    files = {"table": out / f"{name}_table.csv", "report": out / f"{name}_report.json",
             "raw": out / f"{name}_raw.json",
             "curves": write_curves(result.curves(), out, name)}
    if plot:
        from .plots import plot_sweep
        files["figures"] = plot_sweep(result, out)
    return files


# --------------------------------------------------------- rate experiment

def theory_ratio(n: int, alpha: float = 1.0, d: int = 1, scale: float = 4.0) -> float:
    """Subsampling ratio min(1, scale * n^(-2a/(2a+d)) * ln n)."""
    return min(1.0, scale * n ** (-2 * alpha / (2 * alpha + d)) * math.log(n))


@dataclass
class RateSpec:
    base: SynthSpec
    n_grid: tuple = (1000, 2000, 4000, 8000, 16000)
    seeds: tuple = tuple(range(10))
    n_test: int = 5000
    n_models: int = 3
    ratio_scale: float = 4.0
    folds: int = 2


@dataclass
class RateResult:
    table: list
    knn_slope: float
    subnn_slope: float
    flags: list

    @property
    def slope_gap(self) -> float:
        return abs(self.knn_slope - self.subnn_slope)


def loglog_slope(ns, values):
    """OLS slope of log(value) on log(n) over strictly positive values; None with < 2 points."""
    ns = np.asarray(ns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    keep = values > 0
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(ns[keep]), np.log(values[keep]), 1)[0])


def rate_experiment(spec: RateSpec) -> RateResult:
    """Excess 0-1 risk of CV-tuned k-NN and subNN as the sample size grows.

    Risks are computed against the known class probabilities of a fixed test
    sample, so the excess risk of each predictor is exact given its
    predictions.
    """
    if len(spec.n_grid) < 3:
        raise ValueError("need at least three sample sizes")
    dist = SyntheticDistribution(spec.base)
    b = spec.base
    table, flags = [], []
    for n in spec.n_grid:
        ratio = theory_ratio(n, b.alpha, b.d, spec.ratio_scale)
        knn_ex, sub_ex, ks, kss = [], [], [], []
        for s in spec.seeds:
            train = dist.sample(n, seed=[s, n])
            test = dist.sample(spec.n_test, seed=[s, n, 1])
            floor = bayes_error(test)
            cfg = CvConfig(spec.folds, s)
            k = cross_validate_k(train.points, train.labels, cfg).chosen_k
            index = build_index(train.points)
            knn = KnnModel(None, train.labels, k, index=index)
            knn_ex.append(expected_error(test.truth, knn.predict(test.points)) - floor)
            k_sub = cross_validate_k(train.points, train.labels, cfg, ratio=ratio,
                                     n_models=spec.n_models).chosen_k
            full = KnnModel(None, train.labels, k_sub, index=index)
            model = build_subnn(full, ratio, spec.n_models, seed=s)
            sub_ex.append(expected_error(test.truth, model.predict(test.points)) - floor)
            ks.append(k)
            kss.append(k_sub)
        row = {"n": n, "ratio": ratio, "knn_excess": float(np.mean(knn_ex)),
               "subnn_excess": float(np.mean(sub_ex)), "knn_excess_std": float(np.std(knn_ex)),
               "subnn_excess_std": float(np.std(sub_ex)), "knn_k": float(np.median(ks)),
               "subnn_k": float(np.median(kss))}
        for key in ("knn_excess", "subnn_excess"):
            if row[key] <= 0:
                flags.append(f"n={n}: {key} <= 0, excluded from fit")
        table.append(row)
    ns = [r["n"] for r in table]
    ks = loglog_slope(ns, [r["knn_excess"] for r in table])
    ss = loglog_slope(ns, [r["subnn_excess"] for r in table])
    if ks is None or ss is None:
        flags.append("slope undefined: fewer than two positive excess errors")
    return RateResult(table, float("nan") if ks is None else ks,
                      float("nan") if ss is None else ss, flags)


# ----------------------------------------------------------- r_k experiment

def cube_grid(d: int, n_points: int = 1000) -> np.ndarray:
    """Regular lattice on [0,1]^d with ceil(n_points^(1/d)) nodes per axis, corners included."""
    per_axis = math.ceil(round(n_points ** (1 / d), 9))
    axes = [np.linspace(0, 1, per_axis)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def rk_experiment(d: int, n_grid, k_rule, seeds, delta: float = 0.05, grid_points: int = 1000):
    """Empirical sup of r_k over a lattice vs the uniform high-probability bound.

    Data are uniform on [0,1]^d with C_d = d^(-d/2) and VC dimension d + 2.
    Returns one row per (n, k) with the fraction of seeds satisfying the bound.
    """
    params = TheoryParams(c_d=cube_ball_mass_constant(d), d=d, delta=delta, ambient_dim=d)
    grid = cube_grid(d, grid_points)
    rows = []
    for n in n_grid:
        k = int(k_rule(n))
        bound = rk_theoretical_bound(params, n, k)
        sups = []
        for s in seeds:
            x = np.random.default_rng([s, n, d]).random((n, d))
            sups.append(float(build_index(x).kth_distance(grid, k).max()))
        sups = np.array(sups)
        rows.append({"d": d, "n": n, "k": k, "bound": bound, "sup_mean": float(sups.mean()),
                     "sup_max": float(sups.max()), "satisfied": float(np.mean(sups <= bound)),
                     "trials": len(sups)})
    return rows
