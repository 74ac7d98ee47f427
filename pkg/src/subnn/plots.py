"""Figures for benchmark reports, written next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
})


def _new(width=4.5, height=3.0):
    return plt.subplots(figsize=(width, height))


def plot_sweep(result, out_dir) -> list[Path]:
    """Error and max-rule time against ensemble size, one line per (method, ratio)."""
    out_dir = Path(out_dir)
    paths = []
    curves = result.curves()
    for metric, ylabel in (("error", "test error"), ("time", "prediction time [s]")):
        fig, ax = _new()
        rows = curves[metric]
        series = {}
        for ratio, n_models, kind, mean, std in rows:
            if ratio == "":
                continue
            series.setdefault((kind, ratio), []).append((n_models, mean, std))
        for (kind, ratio), pts in sorted(series.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            pts.sort()
            xs, ys, es = zip(*pts)
            style = "-o" if kind == "subNN" else "--s"
            ax.errorbar(xs, ys, yerr=es, fmt=style, ms=3, capsize=2, label=f"{kind} {ratio:g}")
        for ratio, n_models, kind, mean, std in rows:
            if ratio == "":
                ax.axhline(mean, lw=1, ls=":" if kind == "1NN" else "-.", color="k" if kind == "kNN" else "grey",
                           label=kind)
        ax.set_xlabel("number of subsamples I")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        fig.tight_layout()
        p = out_dir / f"{result.spec.name}_{metric}_vs_I.png"
        fig.savefig(p)
        plt.close(fig)
        paths.append(p)
    return paths


def plot_rate(rate_result, path) -> Path:
    fig, ax = _new()
    ns = [r["n"] for r in rate_result.table]
    ax.loglog(ns, [r["knn_excess"] for r in rate_result.table], "-o", ms=3,
              label=f"kNN (slope {rate_result.knn_slope:.2f})")
    ax.loglog(ns, [r["subnn_excess"] for r in rate_result.table], "--s", ms=3,
              label=f"subNN (slope {rate_result.subnn_slope:.2f})")
    ax.set_xlabel("n")
    ax.set_ylabel("excess error")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_rk(rows, path) -> Path:
    fig, ax = _new()
    for d in sorted({r["d"] for r in rows}):
        rs = [r for r in rows if r["d"] == d]
        ns = [r["n"] for r in rs]
        line, = ax.loglog(ns, [r["sup_max"] for r in rs], "-o", ms=3, label=f"sup r_k, d={d}")
        ax.loglog(ns, [r["bound"] for r in rs], "--", color=line.get_color(), label=f"bound, d={d}")
    ax.set_xlabel("n")
    ax.set_ylabel("distance")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
