"""Figure rendering for the CLI report paths.

Every report-producing command writes its delimited data first; these
helpers render companion PNGs next to it.  Rendering failures must never
fail a run, so callers go through ``render_safely``.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

GOLDEN = (math.sqrt(5) - 1) / 2
FIG_SIZE = (6.0, 6.0 * GOLDEN)
DPI = 150


def _finish(fig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return str(path)


def render_safely(fn, *args, **kwargs) -> str | None:
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # pragma: no cover - defensive
        print(f"warning: figure rendering failed: {exc}")
        return None


def training_curves(rows: list[dict], path) -> str:
    """Loss and validation/test metric against epoch."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(2 * FIG_SIZE[0] * 0.7, FIG_SIZE[1]))
    epochs = [r["epoch"] for r in rows]
    ax1.plot(epochs, [r["train_loss"] for r in rows], color="tab:blue")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    evaluated = [r for r in rows if r["val_metric"] == r["val_metric"]]
    ax2.plot([r["epoch"] for r in evaluated], [r["val_metric"] for r in evaluated],
             label="val", color="tab:orange")
    ax2.plot([r["epoch"] for r in evaluated], [r["test_metric"] for r in evaluated],
             label="test", color="tab:green", alpha=0.7)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("metric")
    ax2.legend(frameon=False)
    return _finish(fig, path)


def scaling_curves(rows: list[dict], exponents: dict, path) -> str:
    """Log-log runtime and memory against graph size."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(2 * FIG_SIZE[0] * 0.7, FIG_SIZE[1]))
    ns = [r["n"] for r in rows]
    ax1.loglog(ns, [r["seconds"] for r in rows], "o-", label=
               f"hybrid (exp {exponents['linear_time_exponent']:.2f})")
    ax1.loglog(ns, [r["softmax_seconds"] for r in rows], "s--", label=
               f"softmax (exp {exponents['softmax_time_exponent']:.2f})")
    ax1.set_xlabel("nodes")
    ax1.set_ylabel("seconds / layer pass")
    ax1.legend(frameon=False)
    ax2.loglog(ns, [r["peak_bytes"] for r in rows], "o-", color="tab:red",
               label=f"peak bytes (exp {exponents['memory_exponent']:.2f})")
    ax2.set_xlabel("nodes")
    ax2.set_ylabel("peak bytes")
    ax2.legend(frameon=False)
    return _finish(fig, path)


def diagnostics_bars(entries: list[dict], path) -> str:
    """Per-layer attention rank and mean row entropy."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(2 * FIG_SIZE[0] * 0.7, FIG_SIZE[1]))
    layers = [e["layer"] for e in entries]
    ax1.bar([str(l) for l in layers], [e["attention_rank"] for e in entries],
            color="tab:blue", label="equivalent map")
    ax1.bar([str(l) for l in layers], [e["linear_rank"] for e in entries],
            color="tab:cyan", label="linear part")
    ax1.set_xlabel("attention layer")
    ax1.set_ylabel("numerical rank")
    ax1.legend(frameon=False)
    ax2.bar([str(l) for l in layers], [e["mean_row_entropy"] for e in entries],
            color="tab:orange")
    ax2.set_xlabel("attention layer")
    ax2.set_ylabel("mean row entropy")
    return _finish(fig, path)


def theorem_margins(results: dict[str, dict], path) -> str:
    """Violations and margin statistics per oracle."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    names = sorted(results)
    margins = [results[n]["margin_min"] for n in names]
    colors = ["tab:green" if results[n]["passed"] else "tab:red" for n in names]
    ax.bar(names, margins, color=colors)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("minimum inequality slack")
    ax.set_yscale("symlog")
    return _finish(fig, path)


def sweep_bars(by_variant: dict[str, dict], metric_name: str, path) -> str:
    """Ablation mean with one-standard-deviation whiskers."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    names = list(by_variant)
    means = [by_variant[n]["mean"] for n in names]
    stds = [by_variant[n]["std"] for n in names]
    ax.bar(names, means, yerr=stds, capsize=4, color="tab:blue")
    ax.set_ylabel(f"test {metric_name}")
    ax.set_ylim(bottom=max(0.0, min(means) - 3 * max(max(stds), 1e-3)))
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    return _finish(fig, path)
