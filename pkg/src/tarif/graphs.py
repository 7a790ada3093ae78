"""Graph containers, file ingestion, and synthetic generators.

Graphs are undirected, stored as CSR with both directions of every edge
and no self-loops; layers that need self-loops add them virtually through
``looped_adjacency``.  The synthetic generator draws features from a
Gaussian mixture with mutually orthogonal class means and samples edges
with class-dependent probabilities, so homophily is a dial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng
from .errors import DegenerateInputError, GraphParseError, ShapeError, StratificationError
from .linalg import as_matrix, load_csv, save_csv


@dataclass
class Graph:
    """Undirected graph with node features, labels, and split masks."""

    n: int
    csr_offsets: np.ndarray  # (n+1,) int64, non-decreasing
    csr_targets: np.ndarray  # (E,) int64, both directions stored
    features: np.ndarray     # (n, d) float64
    labels: np.ndarray       # (n,) int64 in [0, K)
    train_mask: np.ndarray = field(default=None)
    val_mask: np.ndarray = field(default=None)
    test_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.csr_offsets = np.asarray(self.csr_offsets, dtype=np.int64)
        self.csr_targets = np.asarray(self.csr_targets, dtype=np.int64)
        self.features = as_matrix(self.features, "features")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        for name in ("train_mask", "val_mask", "test_mask"):
            m = getattr(self, name)
            if m is None:
                m = np.zeros(self.n, dtype=bool)
            setattr(self, name, np.asarray(m, dtype=bool))
        if self.csr_offsets.shape != (self.n + 1,):
            raise ShapeError(f"csr_offsets must have length n+1={self.n + 1}")
        if self.features.shape[0] != self.n or self.labels.shape[0] != self.n:
            raise ShapeError("features/labels row count must equal n")
        if np.any(np.diff(self.csr_offsets) < 0) or self.csr_offsets[-1] != self.csr_targets.size:
            raise ShapeError("csr_offsets must be non-decreasing and end at the edge count")
        if self.csr_targets.size and (self.csr_targets.min() < 0 or self.csr_targets.max() >= self.n):
            raise ShapeError("csr_targets contains node ids out of range")
        if np.any(self.train_mask & self.val_mask) or np.any(self.train_mask & self.test_mask) \
                or np.any(self.val_mask & self.test_mask):
            raise ShapeError("split masks must be disjoint")

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return self.csr_targets.size // 2

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def neighbors(self, i: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[i]:self.csr_offsets[i + 1]]


@dataclass
class SbmSpec:
    """Stochastic block model with Gaussian-mixture features.

    Class means are ``mean_scale`` times distinct standard basis vectors,
    hence mutually orthogonal; features add isotropic noise of std
    ``sigma``.  ``p_in > p_out`` gives homophily, ``p_in < p_out``
    heterophily.
    """

    n: int
    k: int
    p_in: float
    p_out: float
    feature_dim: int
    mean_scale: float = 1.0
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p_in <= 1.0 and 0.0 <= self.p_out <= 1.0):
            raise DegenerateInputError("edge probabilities must lie in [0, 1]")
        if self.k > self.feature_dim:
            raise DegenerateInputError(
                f"orthogonal class means need k <= feature_dim, got k={self.k} d={self.feature_dim}"
            )
        if self.n < self.k:
            raise DegenerateInputError("need at least one node per class")


def _csr_from_pairs(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Build CSR from undirected pairs (one direction given, no self-loops)."""
    if src.size == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    all_src = np.concatenate([src, dst])
    all_dst = np.concatenate([dst, src])
    order = np.lexsort((all_dst, all_src))
    all_src, all_dst = all_src[order], all_dst[order]
    counts = np.bincount(all_src, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, all_dst.astype(np.int64)


def class_means(k: int, d: int, mean_scale: float) -> np.ndarray:
    """The k orthogonal class centers as rows of a (k, d) matrix."""
    means = np.zeros((k, d))
    means[np.arange(k), np.arange(k)] = mean_scale
    return means


def generate_sbm(spec: SbmSpec) -> Graph:
    """Sample a graph from ``spec``; identical seeds give identical graphs."""
    n, k, d = spec.n, spec.k, spec.feature_dim

    # Round-robin labels, then a seeded shuffle.
    labels = np.arange(n, dtype=np.int64) % k
    labels = labels[rng.stream(spec.seed, rng.STREAM_LABELS).permutation(n)]

    means = class_means(k, d, spec.mean_scale)
    feat_rng = rng.stream(spec.seed, rng.STREAM_FEATURES)
    features = means[labels] + spec.sigma * feat_rng.standard_normal((n, d))

    # Bernoulli per unordered pair, one row of the upper triangle at a time.
    edge_rng = rng.stream(spec.seed, rng.STREAM_EDGES)
    srcs, dsts = [], []
    for i in range(n - 1):
        u = edge_rng.random(n - i - 1)
        p = np.where(labels[i + 1:] == labels[i], spec.p_in, spec.p_out)
        hit = np.flatnonzero(u < p)
        if hit.size:
            srcs.append(np.full(hit.size, i, dtype=np.int64))
            dsts.append(hit.astype(np.int64) + i + 1)
    src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64)
    offsets, targets = _csr_from_pairs(n, src, dst)
    return Graph(n=n, csr_offsets=offsets, csr_targets=targets,
                 features=features, labels=labels)


def split(graph: Graph, train_frac: float, val_frac: float, seed: int) -> Graph:
    """Return a copy of ``graph`` with stratified train/val/test masks.

    Global mask sizes hit ``round(n * frac)`` exactly; per-class counts land
    within one node of ``class_size * frac`` (largest-remainder rounding),
    and every class contributes at least one training node.
    """
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac >= 1:
        raise DegenerateInputError("fractions must be positive and sum to less than 1")
    counts = np.bincount(graph.labels, minlength=graph.num_classes)
    if np.any(counts < 3):
        small = int(np.argmin(counts))
        raise StratificationError(
            f"class {small} has {counts[small]} nodes; stratified splitting needs at least 3"
        )
    if round(graph.n * train_frac) < graph.num_classes or round(graph.n * val_frac) < graph.num_classes:
        raise StratificationError("train/val fractions too small to cover every class")

    def allocate(frac_counts: np.ndarray, total: int) -> np.ndarray:
        base = np.floor(frac_counts).astype(np.int64)
        base = np.maximum(base, 1)
        remainder = frac_counts - np.floor(frac_counts)
        while base.sum() < total:
            i = int(np.argmax(remainder))
            base[i] += 1
            remainder[i] = -1
        while base.sum() > total:
            i = int(np.argmax(np.where(base > 1, remainder, -np.inf)))
            base[i] -= 1
            remainder[i] = -1
        return base

    n_train = int(round(graph.n * train_frac))
    n_val = int(round(graph.n * val_frac))
    train_per_class = allocate(counts * train_frac, n_train)
    val_per_class = allocate(counts * val_frac, n_val)

    split_rng = rng.stream(seed, rng.STREAM_SPLIT)
    train = np.zeros(graph.n, dtype=bool)
    val = np.zeros(graph.n, dtype=bool)
    test = np.zeros(graph.n, dtype=bool)
    for c in range(graph.num_classes):
        members = np.flatnonzero(graph.labels == c)
        members = members[split_rng.permutation(members.size)]
        t, v = train_per_class[c], val_per_class[c]
        if t + v >= members.size:
            raise StratificationError(f"class {c} too small for the requested fractions")
        train[members[:t]] = True
        val[members[t:t + v]] = True
        test[members[t + v:]] = True
    return replace(graph, train_mask=train, val_mask=val, test_mask=test)


def edge_homophily(graph: Graph) -> float:
    """Fraction of (directed) edge slots joining same-class endpoints."""
    if graph.csr_targets.size == 0:
        return float("nan")
    src = np.repeat(np.arange(graph.n), graph.degrees())
    same = graph.labels[src] == graph.labels[graph.csr_targets]
    return float(same.mean())


def induced_subgraph(graph: Graph, nodes: np.ndarray) -> Graph:
    """Subgraph on ``nodes`` (ids relabeled to 0..len(nodes)-1)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if np.unique(nodes).size != nodes.size:
        raise DegenerateInputError("subgraph node list contains duplicates")
    remap = -np.ones(graph.n, dtype=np.int64)
    remap[nodes] = np.arange(nodes.size)
    src = np.repeat(np.arange(graph.n), graph.degrees())
    keep = (remap[src] >= 0) & (remap[graph.csr_targets] >= 0) & (src < graph.csr_targets)
    offsets, targets = _csr_from_pairs(nodes.size, remap[src[keep]], remap[graph.csr_targets[keep]])
    return Graph(n=nodes.size, csr_offsets=offsets, csr_targets=targets,
                 features=graph.features[nodes], labels=graph.labels[nodes],
                 train_mask=graph.train_mask[nodes], val_mask=graph.val_mask[nodes],
                 test_mask=graph.test_mask[nodes])


# ---------------------------------------------------------------------------
# File formats: whitespace edge list, features CSV, one label per line,
# masks as JSON index lists.

def load_edge_list(path, feature_path, label_path) -> Graph:
    """Load the three-file text format; edges are symmetrized and deduplicated."""
    try:
        features = load_csv(feature_path)
    except (ShapeError, DegenerateInputError) as exc:
        raise GraphParseError(str(exc)) from exc
    n = features.shape[0]

    labels = []
    with open(label_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError as exc:
                raise GraphParseError(f"{label_path}:{lineno}: label is not an integer") from exc
    if len(labels) != n:
        raise GraphParseError(f"{label_path}: {len(labels)} labels for {n} feature rows")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0:
        raise GraphParseError(f"{label_path}: negative label")

    pairs: set[tuple[int, int]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphParseError(f"{path}:{lineno}: expected 'src dst', got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise GraphParseError(f"{path}:{lineno}: node ids must be integers") from exc
            if a < 0 or b < 0 or a >= n or b >= n:
                raise GraphParseError(f"{path}:{lineno}: node id out of range [0, {n})")
            if a == b:
                continue  # self-loops are never stored
            pairs.add((min(a, b), max(a, b)))
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        src, dst = arr[:, 0], arr[:, 1]
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    offsets, targets = _csr_from_pairs(n, src, dst)
    return Graph(n=n, csr_offsets=offsets, csr_targets=targets, features=features, labels=labels)


def save_graph(graph: Graph, directory) -> Path:
    """Write ``edges.txt``, ``features.csv``, ``labels.txt``, ``masks.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    src = np.repeat(np.arange(graph.n), graph.degrees())
    order = src < graph.csr_targets
    with open(directory / "edges.txt", "w", encoding="utf-8") as fh:
        for a, b in zip(src[order], graph.csr_targets[order]):
            fh.write(f"{a} {b}\n")
    save_csv(graph.features, directory / "features.csv")
    with open(directory / "labels.txt", "w", encoding="utf-8") as fh:
        for y in graph.labels:
            fh.write(f"{y}\n")
    masks = {
        "train": np.flatnonzero(graph.train_mask).tolist(),
        "val": np.flatnonzero(graph.val_mask).tolist(),
        "test": np.flatnonzero(graph.test_mask).tolist(),
    }
    (directory / "masks.json").write_text(json.dumps(masks), encoding="utf-8")
    return directory


def load_graph(directory) -> Graph:
    """Inverse of :func:`save_graph`."""
    directory = Path(directory)
    g = load_edge_list(directory / "edges.txt", directory / "features.csv",
                       directory / "labels.txt")
    masks_path = directory / "masks.json"
    if masks_path.exists():
        masks = json.loads(masks_path.read_text(encoding="utf-8"))
        for name, key in (("train_mask", "train"), ("val_mask", "val"), ("test_mask", "test")):
            m = np.zeros(g.n, dtype=bool)
            m[np.asarray(masks.get(key, []), dtype=np.int64)] = True
            setattr(g, name, m)
    return g


# ---------------------------------------------------------------------------
# Virtual self-loops for the message-passing layers.

@dataclass
class LoopedAdjacency:
    """CSR neighborhoods with one self-loop slot appended per node, plus the
    precomputed permutation that groups edge slots by target (used to
    scatter gradients back to source features at C speed)."""

    n: int
    offsets: np.ndarray         # (n+1,)
    targets: np.ndarray         # (E',)
    sources: np.ndarray         # (E',) owning row of each slot
    scatter_perm: np.ndarray    # argsort(targets, stable)
    scatter_offsets: np.ndarray  # (n+1,) boundaries of target groups

    @property
    def num_slots(self) -> int:
        return self.targets.size


def looped_adjacency(graph: Graph) -> LoopedAdjacency:
    cached = getattr(graph, "_looped_cache", None)
    if cached is not None:
        return cached
    n = graph.n
    deg = graph.degrees()
    new_deg = deg + 1
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(new_deg, out=offsets[1:])
    total = int(offsets[-1])
    targets = np.empty(total, dtype=np.int64)
    src_orig = np.repeat(np.arange(n), deg)
    # Original entries keep their within-row order; self-loop slot goes last.
    pos = offsets[src_orig] + (np.arange(graph.csr_targets.size) - graph.csr_offsets[src_orig])
    targets[pos] = graph.csr_targets
    targets[offsets[1:] - 1] = np.arange(n)
    sources = np.repeat(np.arange(n), new_deg)
    perm = np.argsort(targets, kind="stable")
    counts = np.bincount(targets, minlength=n)
    scatter_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=scatter_offsets[1:])
    adj = LoopedAdjacency(n=n, offsets=offsets, targets=targets, sources=sources,
                          scatter_perm=perm, scatter_offsets=scatter_offsets)
    graph._looped_cache = adj
    return adj
