"""Reverse-mode automatic differentiation over matrices.

A ``Tape`` records every operation applied to its ``Var``s; ``backward``
replays the record once in reverse and accumulates vector-Jacobian
products.  The primitive set is deliberately small: dense products,
element-wise maps, row softmax, and the sparse neighborhood operations the
graph layers need.  All values are float64 numpy arrays.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericalError, ShapeError, TapeUsageError


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "id", "value")

    def __init__(self, tape: "Tape", vid: int, value: np.ndarray):
        self.tape = tape
        self.id = vid
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.value.shape})"

    # Operator sugar for the common arithmetic.
    def __add__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)


class _Node:
    __slots__ = ("op", "out_id", "input_ids", "vjp")

    def __init__(self, op, out_id, input_ids, vjp):
        self.op = op
        self.out_id = out_id
        self.input_ids = input_ids
        self.vjp = vjp


class GradientMap:
    """Gradients keyed by Var; Vars the loss never touched read as zero."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, var: Var) -> np.ndarray:
        g = self._grads.get(var.id)
        if g is None:
            return np.zeros_like(var.value)
        return g

    def get(self, var: Var) -> np.ndarray:
        return self[var]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    # Trailing alignment: both arrays here are always 2-D.
    for axis in range(grad.ndim):
        if shape[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Single-owner operation record.

    The tape is not thread-safe; run one forward/backward pass per tape.
    ``check_finite=True`` validates every node output, which the gradient
    checker uses to pinpoint the op that produced a NaN.
    """

    def __init__(self, check_finite: bool = False):
        self.nodes: list[_Node] = []
        self.next_id = 0
        self.check_finite = check_finite

    # -- bookkeeping ---------------------------------------------------

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value) -> Var:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ShapeError(f"tape values must be 2-D matrices, got shape {value.shape}")
        var = Var(self, self.next_id, value)
        self.next_id += 1
        return var

    def _own(self, var) -> Var:
        if not isinstance(var, Var):
            raise TapeUsageError(f"expected a Var, got {type(var).__name__}")
        if var.tape is not self:
            raise TapeUsageError("input Var belongs to a different tape")
        return var

    def _emit(self, op: str, inputs: Sequence[Var], value: np.ndarray, vjp: Callable) -> Var:
        input_ids = tuple(self._own(v).id for v in inputs)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NumericalError(f"op '{op}' produced non-finite values")
        out = Var(self, self.next_id, value)
        self.next_id += 1
        self.nodes.append(_Node(op, out.id, input_ids, vjp))
        return out

    def custom(self, op: str, inputs: Sequence[Var], value, vjp: Callable) -> Var:
        """Record an externally defined primitive.

        ``vjp(grad_out)`` must return one gradient array (or None) per input.
        """
        return self._emit(op, inputs, np.asarray(value, dtype=np.float64), vjp)

    def record(self, op: str, *inputs, **kwargs) -> Var:
        """Dispatch by op name; the string form of the primitive methods."""
        fn = getattr(self, op, None)
        if fn is None or op.startswith("_"):
            raise TapeUsageError(f"unknown op kind '{op}'")
        return fn(*inputs, **kwargs)

    # -- dense primitives ------------------------------------------------

    def add(self, a: Var, b: Var) -> Var:
        a, b = self._own(a), self._own(b)
        value = a.value + b.value
        sa, sb = a.value.shape, b.value.shape
        return self._emit("add", (a, b), value,
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a: Var, b: Var) -> Var:
        a, b = self._own(a), self._own(b)
        value = a.value - b.value
        sa, sb = a.value.shape, b.value.shape
        return self._emit("sub", (a, b), value,
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))

    def mul(self, a: Var, b: Var) -> Var:
        """Element-wise (Hadamard) product with numpy broadcasting."""
        a, b = self._own(a), self._own(b)
        av, bv = a.value, b.value
        value = av * bv
        return self._emit("mul", (a, b), value,
                          lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))

    def scale(self, a: Var, c: float) -> Var:
        a = self._own(a)
        c = float(c)
        return self._emit("scale", (a,), c * a.value, lambda g: (c * g,))

    def shift(self, a: Var, c: float) -> Var:
        a = self._own(a)
        return self._emit("shift", (a,), a.value + float(c), lambda g: (g,))

    def matmul(self, a: Var, b: Var) -> Var:
        a, b = self._own(a), self._own(b)
        av, bv = a.value, b.value
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"cannot multiply {av.shape} by {bv.shape}")
        return self._emit("matmul", (a, b), av @ bv,
                          lambda g: (g @ bv.T, av.T @ g))

    def transpose(self, a: Var) -> Var:
        a = self._own(a)
        return self._emit("transpose", (a,), a.value.T.copy(), lambda g: (g.T,))

    # -- element-wise maps -------------------------------------------------

    def sigmoid(self, a: Var) -> Var:
        a = self._own(a)
        s = _sigmoid(a.value)
        return self._emit("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))

    def relu(self, a: Var) -> Var:
        a = self._own(a)
        mask = a.value > 0
        # np.maximum (not where) so NaN propagates instead of clamping to 0
        return self._emit("relu", (a,), np.maximum(a.value, 0.0), lambda g: (g * mask,))

    def leaky_relu(self, a: Var, slope: float = 0.2) -> Var:
        a = self._own(a)
        factor = np.where(a.value > 0, 1.0, float(slope))
        return self._emit("leaky_relu", (a,), a.value * factor, lambda g: (g * factor,))

    def exp(self, a: Var) -> Var:
        a = self._own(a)
        e = np.exp(a.value)
        return self._emit("exp", (a,), e, lambda g: (g * e,))

    def log(self, a: Var) -> Var:
        a = self._own(a)
        if np.any(a.value <= 0):
            raise ContractError("log requires strictly positive input")
        av = a.value
        return self._emit("log", (a,), np.log(av), lambda g: (g / av,))

    def log1p(self, a: Var) -> Var:
        a = self._own(a)
        if np.any(a.value <= -1):
            raise ContractError("log1p requires input > -1")
        av = a.value
        return self._emit("log1p", (a,), np.log1p(av), lambda g: (g / (1.0 + av),))

    def powf(self, a: Var, exponent: float) -> Var:
        """Element-wise power with a constant float exponent."""
        a = self._own(a)
        c = float(exponent)
        av = a.value
        if c != int(c) and np.any(av < 0):
            raise ContractError(f"powf with non-integer exponent {c} requires non-negative input")
        value = av ** c
        return self._emit("powf", (a,), value, lambda g: (g * c * av ** (c - 1.0),))

    # -- reductions and row ops ---------------------------------------------

    def row_softmax(self, a: Var) -> Var:
        a = self._own(a)
        s = _row_softmax(a.value)

        def vjp(g):
            inner = (g * s).sum(axis=1, keepdims=True)
            return ((g - inner) * s,)

        return self._emit("row_softmax", (a,), s, vjp)

    def row_sum(self, a: Var) -> Var:
        a = self._own(a)
        n, d = a.value.shape
        return self._emit("row_sum", (a,), a.value.sum(axis=1, keepdims=True),
                          lambda g: (np.broadcast_to(g, (n, d)).copy(),))

    def total_sum(self, a: Var) -> Var:
        a = self._own(a)
        shape = a.value.shape
        return self._emit("total_sum", (a,), a.value.sum().reshape(1, 1),
                          lambda g: (np.full(shape, float(g[0, 0])),))

    def mean_rows(self, a: Var) -> Var:
        """Per-row mean as an (n, 1) column."""
        a = self._own(a)
        n, d = a.value.shape
        return self._emit("mean_rows", (a,), a.value.mean(axis=1, keepdims=True),
                          lambda g: (np.broadcast_to(g / d, (n, d)).copy(),))

    # -- sparse neighborhood ops ---------------------------------------------

    def gather_rows(self, a: Var, idx: np.ndarray) -> Var:
        a = self._own(a)
        idx = np.asarray(idx, dtype=np.int64)
        shape = a.value.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return self._emit("gather_rows", (a,), a.value[idx], vjp)

    def segment_softmax(self, scores: Var, offsets: np.ndarray) -> Var:
        """Softmax within contiguous segments of an (E, 1) score column.

        ``offsets`` delimits per-node neighbor runs; every segment must be
        non-empty (layers guarantee this by always adding self-loops).
        """
        scores = self._own(scores)
        sv = scores.value
        if sv.ndim != 2 or sv.shape[1] != 1:
            raise ShapeError(f"segment scores must be (E, 1), got {sv.shape}")
        starts = offsets[:-1]
        lengths = np.diff(offsets)
        seg_max = np.maximum.reduceat(sv, starts, axis=0)
        ex = np.exp(sv - np.repeat(seg_max, lengths, axis=0))
        seg_sum = np.add.reduceat(ex, starts, axis=0)
        w = ex / np.repeat(seg_sum, lengths, axis=0)

        def vjp(g):
            inner = np.add.reduceat(g * w, starts, axis=0)
            return ((g - np.repeat(inner, lengths, axis=0)) * w,)

        return self._emit("segment_softmax", (scores,), w, vjp)

    def neighbor_aggregate(self, weights: Var, feats: Var, adj) -> Var:
        """Weighted neighborhood sum: ``out[i] = sum_e w_e * feats[adj.targets[e]]``.

        ``adj`` is a LoopedAdjacency (graphs module); one slot per directed
        edge including self-loops.
        """
        weights, feats = self._own(weights), self._own(feats)
        wv, fv = weights.value, feats.value
        if wv.shape != (adj.targets.size, 1):
            raise ShapeError(f"edge weights must be ({adj.targets.size}, 1), got {wv.shape}")
        if fv.shape[0] != adj.n:
            raise ShapeError(f"feature rows {fv.shape[0]} != node count {adj.n}")
        starts = adj.offsets[:-1]
        contrib = wv * fv[adj.targets]
        out = np.add.reduceat(contrib, starts, axis=0)

        def vjp(g):
            g_rows = g[adj.sources]
            d_w = (g_rows * fv[adj.targets]).sum(axis=1, keepdims=True)
            scaled = (wv * g_rows)[adj.scatter_perm]
            d_f = np.add.reduceat(scaled, adj.scatter_offsets[:-1], axis=0)
            return (d_w, d_f)

        return self._emit("neighbor_aggregate", (weights, feats), out, vjp)

    # -- losses ---------------------------------------------------------------

    def masked_cross_entropy(self, logits: Var, labels: np.ndarray, mask: np.ndarray) -> Var:
        """Mean softmax cross-entropy over the rows selected by ``mask``."""
        logits = self._own(logits)
        labels = np.asarray(labels, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        lv = logits.value
        if labels.shape[0] != lv.shape[0] or mask.shape[0] != lv.shape[0]:
            raise ShapeError("labels/mask length must match the number of logit rows")
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise DegenerateMaskError("cross-entropy mask selects no rows")
        sel = lv[idx]
        shifted = sel - sel.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        picked = logp[np.arange(idx.size), labels[idx]]
        value = np.array([[-picked.mean()]])

        def vjp(g):
            p = np.exp(logp)
            p[np.arange(idx.size), labels[idx]] -= 1.0
            out = np.zeros_like(lv)
            out[idx] = (float(g[0, 0]) / idx.size) * p
            return (out,)

        return self._emit("masked_cross_entropy", (logits,), value, vjp)

    # -- backward -----------------------------------------------------------

    def backward(self, loss: Var) -> GradientMap:
        """Accumulate gradients of a scalar loss for every recorded Var."""
        loss = self._own(loss)
        if loss.value.size != 1:
            raise ContractError(f"loss must be a 1x1 scalar, got shape {loss.value.shape}")
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
        # vjps may hand back aliased arrays (e.g. the upstream gradient
        # itself); only mutate a buffer in place once this pass owns it.
        owned: set[int] = set()
        for node in reversed(self.nodes):
            g = grads.get(node.out_id)
            if g is None:
                continue
            for vid, piece in zip(node.input_ids, node.vjp(g)):
                if piece is None:
                    continue
                acc = grads.get(vid)
                if acc is None:
                    grads[vid] = piece
                elif vid in owned:
                    acc += piece
                else:
                    grads[vid] = acc + piece
                    owned.add(vid)
        return GradientMap(grads)


class DegenerateMaskError(ContractError):
    """Loss mask selects no nodes."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _row_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def grad_check(f, params: list[np.ndarray], step: float = 1e-5) -> float:
    """Compare tape gradients of ``f`` against central differences.

    ``f(tape, vars)`` must build a scalar Var from the given parameter Vars.
    Returns the worst relative error ``|ad - fd| / max(|fd|, 1e-8)`` over
    every coordinate of every parameter.
    """
    per_param = grad_check_detailed(f, params, step)
    return max(per_param) if per_param else 0.0


def grad_check_detailed(f, params: list[np.ndarray], step: float = 1e-5) -> list[float]:
    """Per-parameter worst relative error of tape gradients vs central differences."""
    if step <= 0:
        raise ContractError("finite-difference step must be positive")
    params = [np.asarray(p, dtype=np.float64) for p in params]

    tape = Tape(check_finite=True)
    pvars = [tape.leaf(p) for p in params]
    loss = f(tape, pvars)
    if loss.value.size != 1:
        raise ContractError("grad_check expects a scalar-valued function")
    grads = tape.backward(loss)
    analytic = [grads[v] for v in pvars]

    def eval_at(values: list[np.ndarray]) -> float:
        t = Tape(check_finite=True)
        out = f(t, [t.leaf(v) for v in values])
        return float(out.value.reshape(()))

    errors = []
    for pi, p in enumerate(params):
        worst = 0.0
        flat = p.ravel()
        for j in range(flat.size):
            orig = flat[j]
            bumped = [q.copy() for q in params]
            bumped[pi].ravel()[j] = orig + step
            hi = eval_at(bumped)
            bumped[pi].ravel()[j] = orig - step
            lo = eval_at(bumped)
            fd = (hi - lo) / (2.0 * step)
            ad = analytic[pi].ravel()[j]
            err = abs(ad - fd) / max(abs(fd), 1e-8)
            if err > worst:
                worst = err
        errors.append(worst)
    return errors
