"""Optimization loop, losses, and the ablation sweep.

Training is full-batch: one tape forward per epoch, masked cross-entropy
on the training nodes, Adam on every parameter (projections, the gate and
sharpening scalars, the post-modulation projection, and the local-branch
attention weights).  A process-wide pre-flight gradient check runs once
before the first real update and aborts early if the engine and the
finite-difference oracle disagree.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .autodiff import Tape, Var, grad_check_detailed
from .errors import ContractError, DegenerateInputError, NumericalError, TrainingDiverged
from .graphs import Graph, SbmSpec, generate_sbm, split
from .metrics import accuracy, roc_auc
from .model import Model, TarifConfig, VARIANTS, run_forward, save_checkpoint

PREFLIGHT_TOLERANCE = 1e-4


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 1
    patience: int = 50
    metric: str = "accuracy"
    seed: int = 0
    preflight: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ContractError("learning_rate must be non-negative")
        if self.patience < 1:
            raise ContractError("patience must be at least 1")
        if self.metric not in ("accuracy", "roc_auc"):
            raise ContractError(f"metric must be 'accuracy' or 'roc_auc', got {self.metric!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    test_metric: float
    seconds: float


@dataclass
class TrainResult:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_val: float = -np.inf
    best_epoch: int = -1
    test_at_best: float = float("nan")

    def log_rows(self) -> list[dict]:
        return [asdict(e) for e in self.epochs]


def cross_entropy(tape: Tape, logits: Var, labels, mask) -> Var:
    """Mean masked softmax cross-entropy as a differentiable scalar."""
    return tape.masked_cross_entropy(logits, labels, mask)


class Adam:
    """Adam with decoupled weight decay over a named parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            if self.weight_decay:
                p -= self.lr * self.weight_decay * p
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _metric_value(metric: str, logits: np.ndarray, labels: np.ndarray,
                  mask: np.ndarray) -> float:
    if metric == "accuracy":
        return accuracy(logits, labels, mask)
    scores = logits[mask, 1] - logits[mask, 0]
    return roc_auc(scores, labels[mask])


_PREFLIGHT_RESULT: dict[str, float] | None = None

PARAM_CLASSES = {
    "projections": ("in_proj.", "head.", ".w_q", ".w_k", ".w_v"),
    "gate": (".gate",),
    "sharpening": (".sharp",),
    "post_modulation": (".psi",),
    "gat": (".gat",),
    "layer_norm": (".ln.",),
}


def classify_param(name: str) -> str:
    for cls, needles in PARAM_CLASSES.items():
        if any(n in name for n in needles):
            return cls
    return "other"


def preflight_grad_check(force: bool = False, step: float = 1e-5) -> dict[str, float]:
    """Finite-difference check of every parameter class on a 30-node graph.

    Runs once per process (cached); raises NumericalError if any class
    exceeds the tolerance.  Returns the worst relative error per class.
    """
    global _PREFLIGHT_RESULT
    if _PREFLIGHT_RESULT is not None and not force:
        return _PREFLIGHT_RESULT
    # Seeds are frozen at a kink-free instance: finite differences across a
    # (leaky-)ReLU breakpoint would report spurious error, so the instance
    # was chosen with all preactivations clear of zero at this step size.
    graph = generate_sbm(SbmSpec(n=30, k=3, p_in=0.3, p_out=0.1, feature_dim=6,
                                 mean_scale=1.0, sigma=0.6, seed=20240))
    graph = split(graph, 0.5, 0.2, seed=20240)
    cfg = TarifConfig(d_model=8, n_gnn_layers=1, n_attn_layers=1, seed=12)
    model = Model.build(cfg, graph)
    names = sorted(model.params)
    values = [model.params[n] for n in names]

    def loss_fn(tape: Tape, pvars: list[Var]) -> Var:
        logits = run_forward(tape, graph, dict(zip(names, pvars)), cfg)
        return cross_entropy(tape, logits, graph.labels, graph.train_mask)

    errors = grad_check_detailed(loss_fn, values, step=step)
    per_class: dict[str, float] = {}
    for name, err in zip(names, errors):
        cls = classify_param(name)
        per_class[cls] = max(per_class.get(cls, 0.0), err)
    worst = max(per_class.values())
    if worst >= PREFLIGHT_TOLERANCE:
        raise NumericalError(
            f"pre-flight gradient check failed: worst relative error {worst:.3e} "
            f"per class {per_class}"
        )
    _PREFLIGHT_RESULT = per_class
    return per_class


def train(graph: Graph, tarif_cfg: TarifConfig, train_cfg: TrainConfig,
          out_dir=None) -> tuple[TrainResult, Model]:
    """Full-batch training with early stopping on the validation metric."""
    if not (graph.train_mask.any() and graph.val_mask.any() and graph.test_mask.any()):
        raise DegenerateInputError("graph needs non-empty train/val/test masks; run split first")
    if train_cfg.preflight:
        preflight_grad_check()

    model = Model.build(tarif_cfg, graph)
    opt = Adam(model.params, lr=train_cfg.learning_rate, beta1=train_cfg.beta1,
               beta2=train_cfg.beta2, eps=train_cfg.adam_eps,
               weight_decay=train_cfg.weight_decay)
    result = TrainResult()
    last_good: dict[str, np.ndarray] | None = None
    since_best = 0
    for epoch in range(train_cfg.epochs):
        started = time.perf_counter()
        tape = Tape()
        pvars = model.leaf_vars(tape)
        logits = run_forward(tape, graph, pvars, tarif_cfg)
        loss = cross_entropy(tape, logits, graph.labels, graph.train_mask)
        loss_value = float(loss.value[0, 0])
        if not np.isfinite(loss_value):
            path = None
            if out_dir is not None and last_good is not None:
                model.params = last_good
                path = str(save_checkpoint(model, out_dir))
            raise TrainingDiverged(
                f"loss became non-finite at epoch {epoch}", checkpoint_path=path)
        last_good = {k: v.copy() for k, v in model.params.items()}
        grads_map = tape.backward(loss)
        grads = {name: grads_map[var] for name, var in pvars.items()}
        opt.step(grads)

        record = EpochRecord(epoch=epoch, train_loss=loss_value, val_metric=float("nan"),
                             test_metric=float("nan"),
                             seconds=time.perf_counter() - started)
        if epoch % train_cfg.eval_every == 0 or epoch == train_cfg.epochs - 1:
            lv = logits.value
            record.val_metric = _metric_value(train_cfg.metric, lv, graph.labels, graph.val_mask)
            record.test_metric = _metric_value(train_cfg.metric, lv, graph.labels, graph.test_mask)
            if record.val_metric > result.best_val:
                result.best_val = record.val_metric
                result.best_epoch = epoch
                result.test_at_best = record.test_metric
                since_best = 0
            else:
                since_best += 1
        result.epochs.append(record)
        if since_best > train_cfg.patience:
            break
    return result, model


@dataclass
class SweepRow:
    variant: str
    seed: int
    best_val: float
    test_at_best: float
    epochs_run: int


@dataclass
class SweepSummary:
    rows: list[SweepRow]
    by_variant: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "by_variant": self.by_variant}


def worker_count() -> int:
    raw = os.environ.get("TARIF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ablation_sweep(graph: Graph, base_cfg: TarifConfig, train_cfg: TrainConfig,
                   seeds: list[int]) -> SweepSummary:
    """Train the five component-removal variants across seeds.

    Returns one row per (variant, seed) plus per-variant mean and standard
    deviation of the test metric at the best validation epoch.
    """
    if len(seeds) < 3:
        raise ContractError("the ablation sweep needs at least 3 seeds")
    if train_cfg.preflight:
        preflight_grad_check()
    jobs = [(variant, seed) for variant in VARIANTS for seed in seeds]

    def run_one(job):
        variant, seed = job
        cfg = base_cfg.with_variant(variant)
        cfg = TarifConfig(**{**asdict(cfg), "seed": seed})
        tcfg = TrainConfig(**{**asdict(train_cfg), "seed": seed, "preflight": False})
        result, _ = train(graph, cfg, tcfg)
        return SweepRow(variant=variant, seed=seed, best_val=result.best_val,
                        test_at_best=result.test_at_best,
                        epochs_run=len(result.epochs))

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_one, jobs))
    else:
        rows = [run_one(job) for job in jobs]

    by_variant = {}
    for variant in VARIANTS:
        tests = np.array([r.test_at_best for r in rows if r.variant == variant])
        by_variant[variant] = {"mean": float(tests.mean()), "std": float(tests.std()),
                               "runs": int(tests.size)}
    return SweepSummary(rows=rows, by_variant=by_variant)
