"""Scaling benchmark: time and peak allocations of one hybrid attention
layer (forward + backward) across graph sizes, against an explicit
quadratic softmax baseline.

The hybrid path runs through the tape and never materializes the n-by-n
map.  The baseline computes the explicit score matrix in row blocks with a
closed-form backward pass, so its memory stays bounded while its time
keeps the O(n^2 d) growth the contrast is meant to show.
"""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .autodiff import Tape
from .errors import ContractError
from .graphs import Graph, _csr_from_pairs, looped_adjacency
from .model import Model, TarifConfig, tape_hybrid

DEFAULT_SIZES = (1000, 2000, 4000, 8000, 16000)


@dataclass
class ScalingRow:
    n: int
    seconds: float
    peak_bytes: int
    softmax_seconds: float


@dataclass
class ScalingReport:
    rows: list[ScalingRow] = field(default_factory=list)
    linear_time_exponent: float = float("nan")
    softmax_time_exponent: float = float("nan")
    memory_exponent: float = float("nan")


def bench_graph(n: int, avg_degree: int, d_in: int, seed: int) -> Graph:
    """Random graph with roughly ``avg_degree`` neighbors per node."""
    rg = rng.stream(seed, rng.STREAM_BENCH, n)
    m = n * avg_degree // 2
    src = rg.integers(0, n, size=m)
    dst = rg.integers(0, n - 1, size=m)
    dst = np.where(dst >= src, dst + 1, dst)  # no self-loops
    pairs = np.unique(np.stack([np.minimum(src, dst), np.maximum(src, dst)], axis=1), axis=0)
    offsets, targets = _csr_from_pairs(n, pairs[:, 0], pairs[:, 1])
    features = rg.standard_normal((n, d_in))
    labels = rg.integers(0, 2, size=n)
    return Graph(n=n, csr_offsets=offsets, csr_targets=targets,
                 features=features, labels=labels)


def _hybrid_once(graph: Graph, model: Model) -> None:
    tape = Tape()
    pv = model.leaf_vars(tape)
    h = tape.leaf(graph.features)
    z = tape_hybrid(tape, looped_adjacency(graph), h, pv, "attn0", model.cfg)
    tape.backward(tape.total_sum(z))


def time_hybrid_layer(graph: Graph, cfg: TarifConfig, repeats: int = 3) -> tuple[float, int]:
    """Median seconds over ``repeats`` plus traced peak bytes of one pass."""
    model = Model.build(cfg, graph, num_classes=2)
    _hybrid_once(graph, model)  # warm caches outside the timed region
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        _hybrid_once(graph, model)
        times.append(time.perf_counter() - start)
    tracemalloc.start()
    _hybrid_once(graph, model)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return float(np.median(times)), int(peak)


def _softmax_blocked_pass(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                          block: int = 1024) -> None:
    """Explicit softmax attention, forward and closed-form backward.

    Row blocks bound memory to O(block * n); the arithmetic stays the full
    quadratic cost.  Upstream gradient is taken as all-ones.
    """
    n, d = q.shape
    scale = 1.0 / np.sqrt(d)
    g_out = np.ones((block, v.shape[1]))
    dq = np.zeros_like(q)
    dk = np.zeros_like(k)
    dv = np.zeros_like(v)
    for start in range(0, n, block):
        stop = min(start + block, n)
        scores = (q[start:stop] @ k.T) * scale
        scores -= scores.max(axis=1, keepdims=True)
        w = np.exp(scores)
        w /= w.sum(axis=1, keepdims=True)
        _ = w @ v  # forward output of this block
        g = g_out[: stop - start]
        dv += w.T @ g
        dw = g @ v.T
        ds = w * (dw - (dw * w).sum(axis=1, keepdims=True))
        dq[start:stop] = ds @ k * scale
        dk += ds.T @ q[start:stop] * scale


def time_softmax_baseline(n: int, d: int, seed: int, repeats: int = 3) -> float:
    rg = rng.stream(seed, rng.STREAM_BENCH, n, 1)
    q = rg.standard_normal((n, d))
    k = rg.standard_normal((n, d))
    v = rg.standard_normal((n, d))
    _softmax_blocked_pass(q, k, v)  # warm-up
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        _softmax_blocked_pass(q, k, v)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def fit_exponent(sizes, values) -> float:
    """Least-squares slope of log(value) against log(size)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if sizes.size < 2:
        raise ContractError("need at least two sizes to fit an exponent")
    slope, _ = np.polyfit(np.log(sizes), np.log(values), 1)
    return float(slope)


def run_scaling(sizes=DEFAULT_SIZES, d_model: int = 64, avg_degree: int = 8,
                seed: int = 0, repeats: int = 3) -> ScalingReport:
    report = ScalingReport()
    cfg = TarifConfig(d_model=d_model, n_gnn_layers=0, n_attn_layers=1, seed=seed)
    for n in sizes:
        graph = bench_graph(int(n), avg_degree, d_model, seed)
        seconds, peak = time_hybrid_layer(graph, cfg, repeats)
        softmax_seconds = time_softmax_baseline(int(n), d_model, seed, repeats)
        report.rows.append(ScalingRow(n=int(n), seconds=seconds, peak_bytes=peak,
                                      softmax_seconds=softmax_seconds))
    ns = [r.n for r in report.rows]
    report.linear_time_exponent = fit_exponent(ns, [r.seconds for r in report.rows])
    report.softmax_time_exponent = fit_exponent(ns, [r.softmax_seconds for r in report.rows])
    report.memory_exponent = fit_exponent(ns, [r.peak_bytes for r in report.rows])
    return report
