"""The stacked node-classification model.

Architecture: input projection, a few local message-passing layers
(edge-attention aggregation with residual, layer norm, ReLU), one or more
hybrid global-attention layers, a final refinement message-passing layer,
and a linear classifier head.

The hybrid layer combines kernelized linear attention (optionally
entropy-sharpened) with a gated local edge-attention branch and a
node-wise post-modulation of the output.  Four independent switches in
``TarifConfig`` turn each ingredient off, which is exactly the ablation
grid the trainer sweeps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .attention import sharpen_with_partials
from .autodiff import Tape, Var
from .errors import ContractError, ShapeError
from .graphs import Graph, LoopedAdjacency, looped_adjacency
from .linalg import load_csv, save_csv

LAYER_NORM_EPS = 1e-5
LEAKY_SLOPE = 0.2

VARIANTS = {
    "full": {},
    "no-post-mod": {"use_post_modulation": False},
    "no-post-mod-sharpen": {"use_post_modulation": False, "use_sharpening": False},
    "no-gate": {"use_gate": False},
    "vanilla": {"use_post_modulation": False, "use_sharpening": False,
                "use_gat_branch": False, "use_gate": False},
}


@dataclass
class TarifConfig:
    """Architecture hyperparameters.

    ``lam`` scales the gated local branch; ``alpha``/``beta`` bound the
    learnable sharpening exponents via p = 1 + alpha * sigmoid(w) and
    q = 1 + beta * sigmoid(w).  The exponents initialize at the midpoint
    (w = 0), so choose alpha = 2*(p0 - 1), beta = 2*(q0 - 1) to start from
    a target (p0, q0).
    """

    d_model: int = 32
    n_gnn_layers: int = 1
    n_attn_layers: int = 1
    lam: float = 0.1
    alpha: float = 2.0
    beta: float = 1.0
    kernel: str = "sigmoid"
    gat_heads: int = 1
    use_gat_branch: bool = True
    use_gate: bool = True
    use_sharpening: bool = True
    use_post_modulation: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ContractError("lam must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise ContractError("alpha and beta must be positive")
        if self.kernel not in ("sigmoid", "relu"):
            raise ContractError(f"kernel must be 'sigmoid' or 'relu', got {self.kernel!r}")
        if self.d_model < 1 or self.n_attn_layers < 1 or self.n_gnn_layers < 0:
            raise ContractError("layer counts/width out of range")
        if self.gat_heads < 1:
            raise ContractError("gat_heads must be >= 1")

    def with_variant(self, name: str) -> "TarifConfig":
        if name not in VARIANTS:
            raise ContractError(f"unknown variant {name!r}; expected one of {sorted(VARIANTS)}")
        return TarifConfig(**{**asdict(self), **VARIANTS[name]})


def _uniform_init(rg: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(rows)
    return rg.uniform(-bound, bound, size=(rows, cols))


def init_params(cfg: TarifConfig, d_in: int, num_classes: int) -> dict[str, np.ndarray]:
    """Fresh parameter dictionary, deterministic in ``cfg.seed``."""
    rg = rng.stream(cfg.seed, rng.STREAM_PARAMS)
    d = cfg.d_model
    params: dict[str, np.ndarray] = {}

    def gat_block(prefix: str):
        for h in range(cfg.gat_heads):
            params[f"{prefix}.gat{h}.w"] = _uniform_init(rg, d, d)
            params[f"{prefix}.gat{h}.a_src"] = _uniform_init(rg, d, 1)
            params[f"{prefix}.gat{h}.a_dst"] = _uniform_init(rg, d, 1)

    def ln_block(prefix: str):
        params[f"{prefix}.ln.gain"] = np.ones((1, d))
        params[f"{prefix}.ln.bias"] = np.zeros((1, d))

    params["in_proj.w"] = _uniform_init(rg, d_in, d)
    params["in_proj.b"] = np.zeros((1, d))
    for i in range(cfg.n_gnn_layers):
        gat_block(f"gnn{i}")
        ln_block(f"gnn{i}")
    for i in range(cfg.n_attn_layers):
        params[f"attn{i}.w_q"] = _uniform_init(rg, d, d)
        params[f"attn{i}.w_k"] = _uniform_init(rg, d, d)
        params[f"attn{i}.w_v"] = _uniform_init(rg, d, d)
        params[f"attn{i}.gate"] = np.zeros((1, 1))   # sigmoid(0) = 0.5: gate starts half-open
        params[f"attn{i}.sharp"] = np.zeros((1, 1))  # exponents start at their midpoints
        params[f"attn{i}.psi"] = _uniform_init(rg, d, d)
        gat_block(f"attn{i}")
        ln_block(f"attn{i}")
    gat_block("refine")
    ln_block("refine")
    params["head.w"] = _uniform_init(rg, d, num_classes)
    params["head.b"] = np.zeros((1, num_classes))
    return params


# ---------------------------------------------------------------------------
# Tape-level layers.

def tape_kernel(tape: Tape, x: Var, kind: str) -> Var:
    if kind == "sigmoid":
        return tape.sigmoid(x)
    if kind == "relu":
        return tape.relu(x)
    raise ContractError(f"unknown kernel kind {kind!r}")


def tape_sharpen(tape: Tape, x: Var, p: Var, q: Var) -> Var:
    """Record the sharpening map as one primitive; gradients flow to x, p, q."""
    if np.any(x.value < 0):
        raise ContractError("sharpen requires non-negative input; apply the kernel map first")
    value, dx, dp, dq = sharpen_with_partials(x.value, p.value[0, 0], q.value[0, 0])

    def vjp(g):
        return (g * dx,
                np.array([[float(np.sum(g * dp))]]),
                np.array([[float(np.sum(g * dq))]]))

    return tape.custom("sharpen", [x, p, q], value, vjp)


def tape_gat(tape: Tape, adj: LoopedAdjacency, x: Var, w: Var, a_src: Var, a_dst: Var):
    """One edge-attention head: returns (aggregated features, edge weights)."""
    wh = tape.matmul(x, w)
    s_src = tape.matmul(wh, a_src)
    s_dst = tape.matmul(wh, a_dst)
    scores = tape.add(tape.gather_rows(s_src, adj.sources), tape.gather_rows(s_dst, adj.targets))
    scores = tape.leaky_relu(scores, LEAKY_SLOPE)
    alpha = tape.segment_softmax(scores, adj.offsets)
    out = tape.neighbor_aggregate(alpha, wh, adj)
    return out, alpha


def tape_gat_heads(tape: Tape, adj: LoopedAdjacency, x: Var, pv: dict[str, Var],
                   prefix: str, heads: int):
    """Average over heads; single head is the default configuration."""
    outs, alphas = [], []
    for h in range(heads):
        out, alpha = tape_gat(tape, adj, x, pv[f"{prefix}.gat{h}.w"],
                              pv[f"{prefix}.gat{h}.a_src"], pv[f"{prefix}.gat{h}.a_dst"])
        outs.append(out)
        alphas.append(alpha)
    total = outs[0]
    for o in outs[1:]:
        total = tape.add(total, o)
    if heads > 1:
        total = tape.scale(total, 1.0 / heads)
    return total, alphas


def tape_layer_norm(tape: Tape, x: Var, gain: Var, bias: Var) -> Var:
    m = tape.mean_rows(x)
    c = tape.sub(x, m)
    v = tape.mean_rows(tape.mul(c, c))
    inv = tape.powf(tape.shift(v, LAYER_NORM_EPS), -0.5)
    return tape.add(tape.mul(tape.mul(c, inv), gain), bias)


def tape_residual_block(tape: Tape, h: Var, delta: Var, pv: dict[str, Var], prefix: str) -> Var:
    normed = tape_layer_norm(tape, tape.add(h, delta), pv[f"{prefix}.ln.gain"], pv[f"{prefix}.ln.bias"])
    return tape.relu(normed)


def tape_hybrid(tape: Tape, adj: LoopedAdjacency, h: Var, pv: dict[str, Var],
                prefix: str, cfg: TarifConfig, trace: list | None = None) -> Var:
    """The hybrid attention layer, before any residual wrapping.

    Z = LinAttn(sharpen(phi(H Wq)), sharpen(phi(H Wk)), H Wv)
        + lam * sigmoid(a) * GAT(H Wv)          (branch and gate switchable)
    Zbar = psi(H) * Z                           (post-modulation switchable)
    """
    q = tape.matmul(h, pv[f"{prefix}.w_q"])
    k = tape.matmul(h, pv[f"{prefix}.w_k"])
    v = tape.matmul(h, pv[f"{prefix}.w_v"])
    phi_q = tape_kernel(tape, q, cfg.kernel)
    phi_k = tape_kernel(tape, k, cfg.kernel)
    p_val = q_val = None
    if cfg.use_sharpening:
        s = tape.sigmoid(pv[f"{prefix}.sharp"])
        p_var = tape.shift(tape.scale(s, cfg.alpha), 1.0)
        q_var = tape.shift(tape.scale(s, cfg.beta), 1.0)
        phi_q = tape_sharpen(tape, phi_q, p_var, q_var)
        phi_k = tape_sharpen(tape, phi_k, p_var, q_var)
        p_val, q_val = float(p_var.value[0, 0]), float(q_var.value[0, 0])
    z = tape.matmul(phi_q, tape.matmul(tape.transpose(phi_k), v))

    gate_value = None
    alphas = None
    if cfg.use_gat_branch:
        branch, alphas = tape_gat_heads(tape, adj, v, pv, prefix, cfg.gat_heads)
        if cfg.use_gate:
            gate = tape.scale(tape.sigmoid(pv[f"{prefix}.gate"]), cfg.lam)
            branch = tape.mul(gate, branch)
            gate_value = float(gate.value[0, 0])
        else:
            gate_value = 1.0
        z = tape.add(z, branch)
    if cfg.use_post_modulation:
        z = tape.mul(tape.matmul(h, pv[f"{prefix}.psi"]), z)
    if trace is not None:
        trace.append({
            "layer": prefix,
            "h_in": h.value.copy(),
            "phi_q": phi_q.value.copy(),
            "phi_k": phi_k.value.copy(),
            "gate": gate_value,
            "p": p_val,
            "q": q_val,
            "alphas": [a.value.copy() for a in alphas] if alphas is not None else None,
            "output": z.value.copy(),
        })
    return z


def run_forward(tape: Tape, graph: Graph, pv: dict[str, Var], cfg: TarifConfig,
                trace: list | None = None) -> Var:
    """Record the full model forward pass; returns the (n, K) logits Var."""
    adj = looped_adjacency(graph)
    x = tape.leaf(graph.features)
    h = tape.add(tape.matmul(x, pv["in_proj.w"]), pv["in_proj.b"])
    for i in range(cfg.n_gnn_layers):
        delta, _ = tape_gat_heads(tape, adj, h, pv, f"gnn{i}", cfg.gat_heads)
        h = tape_residual_block(tape, h, delta, pv, f"gnn{i}")
    for i in range(cfg.n_attn_layers):
        z = tape_hybrid(tape, adj, h, pv, f"attn{i}", cfg, trace)
        h = tape_residual_block(tape, h, z, pv, f"attn{i}")
        if trace is not None:
            trace[-1]["h_out"] = h.value.copy()
    delta, _ = tape_gat_heads(tape, adj, h, pv, "refine", cfg.gat_heads)
    h = tape_residual_block(tape, h, delta, pv, "refine")
    return tape.add(tape.matmul(h, pv["head.w"]), pv["head.b"])


# ---------------------------------------------------------------------------
# Model container.

@dataclass
class Model:
    cfg: TarifConfig
    d_in: int
    num_classes: int
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def build(cls, cfg: TarifConfig, graph: Graph, num_classes: int | None = None) -> "Model":
        k = num_classes if num_classes is not None else graph.num_classes
        return cls(cfg=cfg, d_in=graph.features.shape[1], num_classes=k,
                   params=init_params(cfg, graph.features.shape[1], k))

    def leaf_vars(self, tape: Tape) -> dict[str, Var]:
        return {name: tape.leaf(value) for name, value in self.params.items()}

    def forward(self, tape: Tape, graph: Graph, trace: list | None = None) -> Var:
        if graph.features.shape[1] != self.d_in:
            raise ShapeError(
                f"graph features have width {graph.features.shape[1]}, model expects {self.d_in}"
            )
        return run_forward(tape, graph, self.leaf_vars(tape), self.cfg, trace)

    def predict(self, graph: Graph) -> np.ndarray:
        """Logits as a plain array; deterministic given params and graph."""
        return self.forward(Tape(), graph).value

    def trace(self, graph: Graph) -> list[dict]:
        """Per-attention-layer intermediates for diagnostics."""
        trace: list[dict] = []
        self.forward(Tape(), graph, trace)
        return trace

    def attention_layer_params(self, i: int) -> dict[str, np.ndarray]:
        prefix = f"attn{i}."
        return {name[len(prefix):]: v for name, v in self.params.items()
                if name.startswith(prefix)}


# ---------------------------------------------------------------------------
# Stand-alone forms of the individual layer operations (tests, diagnostics).

@dataclass
class SparseRowMap:
    """Row-stochastic neighborhood map in coordinate form."""

    n: int
    sources: np.ndarray
    targets: np.ndarray
    weights: np.ndarray  # (E,)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        dense[self.sources, self.targets] = self.weights
        return dense


def gat_branch(graph: Graph, v: np.ndarray, params: dict[str, np.ndarray],
               heads: int = 1):
    """Local edge-attention aggregation of ``v``.

    Returns the aggregated features and the (averaged over heads)
    row-stochastic sparse map over each node's neighborhood including the
    virtual self-loop.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != graph.n:
        raise ShapeError(f"value rows {v.shape[0]} != node count {graph.n}")
    adj = looped_adjacency(graph)
    tape = Tape()
    x = tape.leaf(v)
    pv = {}
    for h in range(heads):
        for k in ("w", "a_src", "a_dst"):
            key = f"gat{h}.{k}" if f"gat{h}.{k}" in params else k
            pv[f"x.gat{h}.{k}"] = tape.leaf(params[key])
    out, alphas = tape_gat_heads(tape, adj, x, pv, "x", heads)
    weight = np.mean([a.value[:, 0] for a in alphas], axis=0)
    return out.value, SparseRowMap(n=graph.n, sources=adj.sources, targets=adj.targets,
                                   weights=weight)


def hybrid_layer(graph: Graph, h: np.ndarray, params: dict[str, np.ndarray],
                 cfg: TarifConfig) -> np.ndarray:
    """One hybrid attention layer applied to ``h`` (no residual wrapping).

    ``params`` uses the per-layer key scheme of
    :meth:`Model.attention_layer_params`.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape[0] != graph.n:
        raise ShapeError(f"input rows {h.shape[0]} != node count {graph.n}")
    tape = Tape()
    pv = {f"layer.{k}": tape.leaf(val) for k, val in params.items()}
    return tape_hybrid(tape, looped_adjacency(graph), tape.leaf(h), pv, "layer", cfg).value


def forward(graph: Graph, model: Model) -> np.ndarray:
    """Full-model logits for every node."""
    return model.predict(graph)


# ---------------------------------------------------------------------------
# Checkpoints: a JSON manifest plus one CSV file per parameter matrix.

CHECKPOINT_MANIFEST = "model.json"


def save_checkpoint(model: Model, directory) -> Path:
    directory = Path(directory)
    (directory / "params").mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, (name, value) in enumerate(sorted(model.params.items())):
        fname = f"params/{idx:03d}_{name.replace('.', '_')}.csv"
        save_csv(value, directory / fname)
        entries.append({"name": name, "rows": int(value.shape[0]),
                        "cols": int(value.shape[1]), "file": fname})
    manifest = {
        "format": "tarif-checkpoint/1",
        "config": asdict(model.cfg),
        "d_in": model.d_in,
        "num_classes": model.num_classes,
        "params": entries,
    }
    (directory / CHECKPOINT_MANIFEST).write_text(json.dumps(manifest, indent=2),
                                                 encoding="utf-8")
    return directory


def load_checkpoint(directory) -> Model:
    directory = Path(directory)
    manifest = json.loads((directory / CHECKPOINT_MANIFEST).read_text(encoding="utf-8"))
    cfg = TarifConfig(**manifest["config"])
    params: dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        value = load_csv(directory / entry["file"])
        if value.shape != (entry["rows"], entry["cols"]):
            raise ShapeError(
                f"checkpoint param {entry['name']} has shape {value.shape}, "
                f"manifest says ({entry['rows']}, {entry['cols']})"
            )
        params[entry["name"]] = value
    return Model(cfg=cfg, d_in=int(manifest["d_in"]),
                 num_classes=int(manifest["num_classes"]), params=params)
