"""Command-line entry point: ``subnn train | predict | bench | rate | rk``.

Exit codes: 0 success, 1 computation error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench
from .data import (DataError, LabeledDataset, SynthSpec, SyntheticDistribution, load_csv,
                   load_points, split, standardize)
from .ensemble import build_subnn
from .knn import CLASSIFICATION, REGRESSION, KnnModel
from .persist import ModelFormatError, TrainedModel
from .selection import CvConfig, cross_validate_k

log = logging.getLogger("subnn")

MODES = {"classify": CLASSIFICATION, "regress": REGRESSION}
MODEL_FILENAME = "model.subnn"


class UsageError(Exception):
    pass


def _k_arg(value: str):
    if value == "cv":
        return value
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("k must be a positive integer or 'cv'") from None
    if k < 1:
        raise argparse.ArgumentTypeError("k must be a positive integer or 'cv'")
    return k


def _ratio_arg(value: str) -> float:
    r = float(value)
    if not 0 < r <= 1:
        raise argparse.ArgumentTypeError("ratio must lie in (0, 1]")
    return r


def _positive(value: str) -> int:
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _float_list(text):
    return tuple(_ratio_arg(v) for v in text.split(","))


def _int_list(text):
    return tuple(_positive(v) for v in text.split(","))


def _workers_default():
    env = os.environ.get("SUBNN_WORKERS")
    return int(env) if env else None


def _add_data_flags(p, list_values=False):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="delimited training file")
    src.add_argument("--synth", help="synthetic spec, e.g. d=2,D=5,n=1000,alpha=1")
    p.add_argument("--label", default=None, help="label column name or index (default: last)")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")
    p.add_argument("--mode", choices=sorted(MODES), default="classify", help="task type")
    if list_values:
        p.add_argument("--ratio", type=_float_list, default=(0.1,), help="comma-separated m/n ratios")
        p.add_argument("--models", type=_int_list, default=(1, 3, 10), help="comma-separated ensemble sizes I")
    else:
        p.add_argument("--ratio", type=_ratio_arg, default=0.1, help="subsampling ratio m/n")
        p.add_argument("--models", type=_positive, default=10, help="number of subsamples I")
    p.add_argument("--k", type=_k_arg, default="cv", help="denoising k, or 'cv' (default)")
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--workers", type=_positive, default=_workers_default(),
                   help="worker cap for parallel submodel evaluation (env SUBNN_WORKERS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subnn", description="Denoised 1-NN subsample ensembles.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit an ensemble and save it")
    _add_data_flags(p)
    p.add_argument("--out", type=Path, required=True, help="model file or directory")
    p.add_argument("--folds", type=_positive, default=2, help="cross-validation folds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict one value per query row")
    p.add_argument("--model", type=Path, required=True, help="model file written by train")
    p.add_argument("--queries", type=Path, required=True, help="delimited feature rows")
    p.add_argument("--out", type=Path, required=True, help="predictions file")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")
    p.add_argument("--workers", type=_positive, default=_workers_default(),
                   help="worker cap for parallel submodel evaluation (env SUBNN_WORKERS)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="relative error/time table against k-NN")
    _add_data_flags(p, list_values=True)
    p.add_argument("--test", type=Path, help="separate test file (default: split --data)")
    p.add_argument("--train-fraction", type=float, default=0.85, help="split fraction for --data")
    p.add_argument("--test-size", type=_positive, default=1000, help="test sample size for --synth")
    p.add_argument("--reps", type=_positive, default=5, help="repetitions")
    p.add_argument("--folds", type=_positive, default=2, help="cross-validation folds")
    p.add_argument("--no-bagged", action="store_true", help="skip the bagged 1-NN baseline")
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    p.add_argument("--name", default="bench", help="report file prefix")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rate", help="excess-error scaling of kNN vs subNN on synthetic data")
    p.add_argument("--synth", default="d=1,alpha=1,lam=5,boundary=multiscale",
                   help="synthetic spec (n is taken from --n-grid)")
    p.add_argument("--n-grid", type=_int_list, default=(1000, 2000, 4000, 8000, 16000))
    p.add_argument("--seeds", type=_positive, default=10, help="number of seeds")
    p.add_argument("--models", type=_positive, default=3, help="number of subsamples I")
    p.add_argument("--test-size", type=_positive, default=5000)
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("rk", help="empirical k-th NN distances vs the uniform bound")
    p.add_argument("--d", type=_int_list, default=(1, 2, 3), help="intrinsic dimensions")
    p.add_argument("--n-grid", type=_int_list, default=(1000, 10000))
    p.add_argument("--seeds", type=_positive, default=40)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_rk)
    return parser


def _load_source(args) -> LabeledDataset:
    mode = MODES[args.mode]
    if args.data is not None:
        label = args.label
        if label is not None and label.lstrip("-").isdigit():
            label = int(label)
        return load_csv(args.data, label=label, mode=mode, delimiter=args.delimiter)
    return SyntheticDistribution(_synth_spec(args.synth, mode, args.seed)).sample()


def _synth_spec(text, mode, seed):
    """Parse --synth; the --seed flag applies unless the text sets its own seed."""
    try:
        spec = SynthSpec.parse(text, mode=mode)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad --synth spec: {exc}") from None
    if "seed=" not in text.replace(" ", ""):
        spec = replace(spec, seed=seed)
    return spec


def fit_model(train: LabeledDataset, ratio: float, n_models: int, k, seed: int, folds: int = 2):
    """Standardize, choose k, build the ensemble. Returns (TrainedModel, cv result or None)."""
    std_train, _, stats = standardize(train)
    cv = None
    if k == "cv":
        cv = cross_validate_k(std_train.points, std_train.labels, CvConfig(folds, seed),
                              ratio=ratio, n_models=n_models)
        k = cv.chosen_k
    full = KnnModel(std_train.points, std_train.labels, k)
    ens = build_subnn(full, ratio, n_models, seed)
    meta = {"ratio": ratio, "seed": seed, "k": full.k, "folds": folds,
            "label_names": list(train.label_names), "feature_names": list(train.feature_names),
            "cv": cv.to_dict() if cv is not None else None}
    return TrainedModel(stats, ens, std_train.points, std_train.labels, meta), cv


def cmd_train(args) -> int:
    data = _load_source(args)
    model, cv = fit_model(data, args.ratio, args.models, args.k, args.seed, args.folds)
    out = args.out
    if out.is_dir():
        out = out / MODEL_FILENAME
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    print(f"saved {out} (n={data.n}, D={data.dim}, k={model.meta['k']}, m={model.ensemble.m}, "
          f"I={model.ensemble.n_models})")
    return 0


def cmd_predict(args) -> int:
    model = TrainedModel.load(args.model)
    queries = load_points(args.queries, delimiter=args.delimiter)
    if queries.size and queries.shape[1] != len(model.standardizer.mean):
        raise DataError(f"{args.queries}: row 1 has {queries.shape[1]} features, "
                        f"model expects {len(model.standardizer.mean)}")
    preds = model.predict(queries, workers=args.workers) if queries.size else []
    lines = model.format_predictions(preds)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("".join(line + "\n" for line in lines))
    return 0


def _bench_sets(args):
    mode = MODES[args.mode]
    if args.data is not None:
        data = _load_source(args)
        if args.test is not None:
            label = args.label
            if label is not None and label.lstrip("-").isdigit():
                label = int(label)
            test = load_csv(args.test, label=label, mode=mode, delimiter=args.delimiter)
            train = data
        else:
            train, test = split(data, args.train_fraction, args.seed)
    else:
        spec = _synth_spec(args.synth, mode, args.seed)
        dist = SyntheticDistribution(spec)
        train = dist.sample(spec.n, seed=[spec.seed, args.seed])
        test = dist.sample(args.test_size, seed=[spec.seed, args.seed, 1])
    train, test, _ = standardize(train, test)
    return train, test


def cmd_bench(args) -> int:
    train, test = _bench_sets(args)
    spec = bench.SweepSpec(ratios=args.ratio, n_models=args.models, repetitions=args.reps,
                           seed=args.seed, k=args.k, folds=args.folds, bagged=not args.no_bagged,
                           workers=args.workers, name=args.name)
    result = bench.sweep(train, test, spec)
    meta = {"n_train": train.n, "n_test": test.n, "dim": train.dim, "mode": train.mode,
            "source": str(args.data) if args.data else args.synth}
    files = bench.emit_report(result, args.out, meta, plot=not args.no_plot)
    sys.stdout.write(Path(files["table"]).read_text())
    return 0


def cmd_rate(args) -> int:
    base = _synth_spec(args.synth, CLASSIFICATION, 0)
    spec = bench.RateSpec(base, n_grid=args.n_grid, seeds=tuple(range(args.seeds)),
                          n_test=args.test_size, n_models=args.models)
    res = bench.rate_experiment(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    doc = {"table": res.table, "knn_slope": res.knn_slope, "subnn_slope": res.subnn_slope,
           "flags": res.flags}
    (args.out / "rate.json").write_text(json.dumps(doc, indent=2))
    with (args.out / "rate.csv").open("w") as fh:
        cols = list(res.table[0])
        fh.write(",".join(cols) + "\n")
        for row in res.table:
            fh.write(",".join(f"{row[c]:.6g}" for c in cols) + "\n")
    if not args.no_plot:
        from .plots import plot_rate
        plot_rate(res, args.out / "rate.png")
    print(f"kNN slope {res.knn_slope:.3f}  subNN slope {res.subnn_slope:.3f}")
    for f in res.flags:
        print(f"flag: {f}")
    return 0


def cmd_rk(args) -> int:
    rows = []
    for d in args.d:
        rows += bench.rk_experiment(d, args.n_grid, lambda n: int(np.ceil(n ** (2 / 3))),
                                    range(args.seeds), delta=args.delta)
    args.out.mkdir(parents=True, exist_ok=True)
    cols = list(rows[0])
    with (args.out / "rk.csv").open("w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[c]:.6g}" for c in cols) + "\n")
    if not args.no_plot:
        from .plots import plot_rk
        plot_rk(rows, args.out / "rk.png")
    for row in rows:
        print(f"d={row['d']} n={row['n']} k={row['k']} sup={row['sup_max']:.4f} "
              f"bound={row['bound']:.4f} satisfied={row['satisfied']:.2f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError, ModelFormatError, OSError) as exc:
        print(f"subnn: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"subnn: computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
