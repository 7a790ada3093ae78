"""Attention and embedding measurements: sequence entropy, attention-map
rank, and between-class scatter, plus per-layer snapshots of a model."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attention import explicit_linear_map
from .errors import DegenerateInputError, SnapshotCapError
from .graphs import Graph, looped_adjacency
from .linalg import numerical_rank, scatter_trace, to_json_dict
from .model import Model, SparseRowMap

SNAPSHOT_NODE_CAP = 2048


def pse(x) -> float:
    """Entropy of a non-negative sequence normalized by its sum.

    ``-sum (x_i/s) * ln(x_i/s)`` with the ``0 * ln 0 = 0`` convention.
    Lies in [0, ln N]; 0 for a point mass, ln N for a uniform sequence.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise DegenerateInputError("entropy of an empty sequence is undefined")
    if np.any(x < 0):
        raise DegenerateInputError("sequence entropy requires non-negative entries")
    s = x.sum()
    if s <= 0:
        raise DegenerateInputError("sequence entropy requires positive total mass")
    p = x / s
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def attention_entropy(attn_map) -> float:
    """Mean row-wise sequence entropy of a non-negative map."""
    m = np.asarray(attn_map, dtype=np.float64)
    if m.ndim != 2:
        raise DegenerateInputError(f"attention map must be 2-D, got shape {m.shape}")
    if np.any(m < 0):
        raise DegenerateInputError("attention map must be non-negative")
    sums = m.sum(axis=1)
    bad = np.flatnonzero(sums <= 0)
    if bad.size:
        raise DegenerateInputError(f"attention map row {bad[0]} has zero mass")
    p = m / sums[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return float(-terms.sum(axis=1).mean())


@dataclass
class LayerSnapshot:
    """Measurements of one attention layer on one graph."""

    layer: int
    attention_rank: int
    linear_rank: int
    mean_row_entropy: float
    scatter: float
    gate: float | None
    sharpen_p: float | None
    sharpen_q: float | None
    map_dump: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class DiagnosticsReport:
    entries: list[LayerSnapshot] = field(default_factory=list)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(entry.to_json())
                fh.write("\n")


def equivalent_map(trace_entry: dict, graph: Graph) -> tuple[np.ndarray, np.ndarray]:
    """Materialize the explicit attention maps of a traced layer.

    Returns ``(m_linear, m_eq)`` where ``m_linear`` is the kernelized score
    map and ``m_eq`` adds the gated local branch when it was active.
    """
    m_lin = explicit_linear_map(trace_entry["phi_q"], trace_entry["phi_k"])
    m_eq = m_lin
    if trace_entry["alphas"] is not None:
        adj_weights = np.mean([a[:, 0] for a in trace_entry["alphas"]], axis=0)
        adj = looped_adjacency(graph)
        local = SparseRowMap(n=graph.n, sources=adj.sources, targets=adj.targets,
                             weights=adj_weights).to_dense()
        m_eq = m_lin + trace_entry["gate"] * local
    return m_lin, m_eq


def snapshot(model: Model, graph: Graph, layer: int, rel_tol: float | None = None,
             dump_dir=None) -> LayerSnapshot:
    """Measure one attention layer: explicit-map rank, mean row entropy, and
    between-class scatter of the layer output.

    Refuses graphs above the node cap since the map is materialized densely;
    subsample the graph first.
    """
    if graph.n > SNAPSHOT_NODE_CAP:
        raise SnapshotCapError(
            f"snapshot materializes an n-by-n map; n={graph.n} exceeds the cap of "
            f"{SNAPSHOT_NODE_CAP}. Subsample the graph (e.g. diagnose --subsample)."
        )
    if not 0 <= layer < model.cfg.n_attn_layers:
        raise DegenerateInputError(f"layer index {layer} out of range")
    entry = model.trace(graph)[layer]
    return _measure(entry, graph, layer, rel_tol, dump_dir)


def _measure(entry: dict, graph: Graph, layer: int, rel_tol, dump_dir) -> LayerSnapshot:
    m_lin, m_eq = equivalent_map(entry, graph)
    dump_ref = None
    if dump_dir is not None:
        dump_dir = Path(dump_dir)
        dump_dir.mkdir(parents=True, exist_ok=True)
        dump_ref = str(dump_dir / f"attention_map_layer{layer}.json")
        Path(dump_ref).write_text(json.dumps(to_json_dict(m_eq)), encoding="utf-8")
    return LayerSnapshot(
        layer=layer,
        attention_rank=numerical_rank(m_eq, rel_tol).numerical_rank,
        linear_rank=numerical_rank(m_lin, rel_tol).numerical_rank,
        mean_row_entropy=attention_entropy(m_eq),
        scatter=scatter_trace(entry["h_out"], graph.labels),
        gate=entry["gate"],
        sharpen_p=entry["p"],
        sharpen_q=entry["q"],
        map_dump=dump_ref,
    )


def report(model: Model, graph: Graph, rel_tol: float | None = None,
           dump_dir=None) -> DiagnosticsReport:
    """Snapshots for every attention layer of the model (one shared forward)."""
    if graph.n > SNAPSHOT_NODE_CAP:
        raise SnapshotCapError(
            f"snapshot materializes an n-by-n map; n={graph.n} exceeds the cap of "
            f"{SNAPSHOT_NODE_CAP}. Subsample the graph (e.g. diagnose --subsample)."
        )
    trace = model.trace(graph)
    return DiagnosticsReport(entries=[
        _measure(trace[i], graph, i, rel_tol, dump_dir)
        for i in range(model.cfg.n_attn_layers)
    ])
