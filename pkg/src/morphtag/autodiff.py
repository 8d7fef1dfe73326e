"""Reverse-mode automatic differentiation over dense float64 arrays.

Graphs are built define-by-run: every operation creates a `Node` holding its
forward value (a numpy array) and enough context to push gradients back to
its parents.  The op set is intentionally small; structured losses (chain
CRF, factorial CRF, decoder cross-entropy) register their own fused ops via
`register_op` so that a whole dynamic program becomes a single node with a
closed-form gradient.

All values are float64.  Backward walks the graph once in reverse
topological order and accumulates into `Node.grad`.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable

import numpy as np

from morphtag.errors import MorphtagError
from morphtag.kernels import lstm_cell_backward, lstm_cell_forward


class ShapeError(MorphtagError):
    """Raised when an op receives inputs whose shapes do not conform."""


class Node:
    """One vertex of the computation graph.

    `value` is the cached forward result; `grad` is lazily allocated by
    `backward` and always has the same shape as `value`.
    """

    __slots__ = ("op", "value", "parents", "attrs", "ctx", "grad", "is_param", "name")

    def __init__(self, op, value, parents=(), attrs=None, ctx=None, is_param=False, name=None):
        self.op = op
        self.value = value
        self.parents = tuple(parents)
        self.attrs = attrs or {}
        self.ctx = ctx
        self.grad = None
        self.is_param = is_param
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = self.name or self.op
        return f"Node({tag}, shape={self.value.shape})"


def leaf(value, name=None):
    """Wrap a constant array (no gradient of interest) as a graph leaf."""
    return Node("leaf", np.asarray(value, dtype=np.float64), name=name)


def parameter(value, name=None):
    """Wrap a trainable array; `backward` reports gradients for these."""
    return Node("param", np.asarray(value, dtype=np.float64), is_param=True, name=name)


# ---------------------------------------------------------------------------
# op registry


_FORWARD: dict[str, Callable] = {}
_BACKWARD: dict[str, Callable] = {}


def register_op(kind, forward, backward):
    """Register an op kind.

    forward(values, attrs) -> (out_array, ctx)
    backward(grad, values, out, ctx, attrs) -> list of per-parent gradients
    (None entries mean "no gradient for this parent").
    """
    if kind in _FORWARD:
        raise ValueError(f"op kind already registered: {kind}")
    _FORWARD[kind] = forward
    _BACKWARD[kind] = backward


def apply(kind, inputs, **attrs):
    """Build a node by applying a registered op to input nodes."""
    if kind not in _FORWARD:
        known = ", ".join(sorted(_FORWARD))
        raise ShapeError(f"unknown op kind {kind!r}; registered kinds: {known}")
    values = [n.value for n in inputs]
    out, ctx = _FORWARD[kind](values, attrs)
    return Node(kind, out, inputs, attrs, ctx)


def _toposort(root):
    """Iterative DFS post-order; graphs can be deeper than the recursion limit."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root, params: Iterable[Node] | None = None):
    """Backpropagate from a scalar root; return a gradient table.

    The table maps parameter nodes to their gradient arrays.  When `params`
    is given, every listed parameter appears in the table, with an all-zero
    gradient if the root does not depend on it.
    """
    if root.value.shape != ():
        raise ShapeError(f"backward root must be scalar, got shape {root.value.shape}")
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node.grad is None or not node.parents:
            continue
        grads = _BACKWARD[node.op](node.grad, [p.value for p in node.parents], node.value, node.ctx, node.attrs)
        for p, g in zip(node.parents, grads):
            if g is None:
                continue
            if p.grad is None:
                p.grad = np.zeros_like(p.value)
            p.grad += g
    table = {}
    for node in order:
        if node.is_param and node.grad is not None:
            table[node] = node.grad
    if params is not None:
        for p in params:
            if p not in table:
                table[p] = np.zeros_like(p.value)
    return table


# ---------------------------------------------------------------------------
# core ops


def _require(cond, op, *shapes):
    if not cond:
        raise ShapeError(f"{op}: incompatible shapes {[tuple(s) for s in shapes]}")


def _fw_matmul(values, attrs):
    a, b = values
    _require(a.ndim == 2 and b.ndim in (1, 2) and a.shape[1] == b.shape[0], "matmul", a.shape, b.shape)
    return a @ b, None


def _bw_matmul(grad, values, out, ctx, attrs):
    a, b = values
    if b.ndim == 1:
        return [np.outer(grad, b), a.T @ grad]
    return [grad @ b.T, a.T @ grad]


def _fw_add(values, attrs):
    a, b = values
    _require(a.shape == b.shape, "add", a.shape, b.shape)
    return a + b, None


def _bw_add(grad, values, out, ctx, attrs):
    return [grad, grad]


def _fw_mul(values, attrs):
    a, b = values
    _require(a.shape == b.shape, "elementwise-multiply", a.shape, b.shape)
    return a * b, None


def _bw_mul(grad, values, out, ctx, attrs):
    a, b = values
    return [grad * b, grad * a]


def _fw_concat(values, attrs):
    _require(all(v.ndim == 1 for v in values), "concat", *[v.shape for v in values])
    return np.concatenate(values), None


def _bw_concat(grad, values, out, ctx, attrs):
    grads = []
    off = 0
    for v in values:
        grads.append(grad[off:off + v.shape[0]])
        off += v.shape[0]
    return grads


def _fw_tanh(values, attrs):
    return np.tanh(values[0]), None


def _bw_tanh(grad, values, out, ctx, attrs):
    return [grad * (1.0 - out * out)]


def _fw_sigmoid(values, attrs):
    x = values[0]
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, None


def _bw_sigmoid(grad, values, out, ctx, attrs):
    return [grad * out * (1.0 - out)]


def _fw_embedding(values, attrs):
    table = values[0]
    row = attrs["row"]
    _require(table.ndim == 2, "embedding-lookup", table.shape)
    if not 0 <= row < table.shape[0]:
        raise ShapeError(f"embedding-lookup: row {row} out of range for table {table.shape}")
    return table[row].copy(), None


def _bw_embedding(grad, values, out, ctx, attrs):
    g = np.zeros_like(values[0])
    g[attrs["row"]] = grad
    return [g]


def _fw_log_softmax(values, attrs):
    x = values[0]
    _require(x.ndim == 1, "log-softmax", x.shape)
    m = x.max()
    z = x - m
    lse = m + math.log(np.exp(z).sum())
    return x - lse, None


def _bw_log_softmax(grad, values, out, ctx, attrs):
    # d/dx_j (x_i - lse) = delta_ij - softmax_j
    return [grad - np.exp(out) * grad.sum()]


def _fw_logsumexp(values, attrs):
    x = values[0]
    _require(x.ndim == 1, "logsumexp", x.shape)
    m = x.max()
    return np.asarray(m + math.log(np.exp(x - m).sum())), None


def _bw_logsumexp(grad, values, out, ctx, attrs):
    return [grad * np.exp(values[0] - out)]


def _fw_slice(values, attrs):
    x = values[0]
    start, stop = attrs["start"], attrs["stop"]
    _require(x.ndim == 1 and 0 <= start <= stop <= x.shape[0], "slice", x.shape)
    return x[start:stop].copy(), None


def _bw_slice(grad, values, out, ctx, attrs):
    g = np.zeros_like(values[0])
    g[attrs["start"]:attrs["stop"]] = grad
    return [g]


def _fw_sum(values, attrs):
    return np.asarray(values[0].sum()), None


def _bw_sum(grad, values, out, ctx, attrs):
    return [np.full_like(values[0], float(grad))]


def _fw_lstm_cell(values, attrs):
    x, h_prev, c_prev, w, u, b = values
    hdim = h_prev.shape[0]
    ok = (
        x.ndim == 1 and h_prev.ndim == 1 and c_prev.shape == h_prev.shape
        and w.shape == (4 * hdim, x.shape[0]) and u.shape == (4 * hdim, hdim)
        and b.shape == (4 * hdim,)
    )
    _require(ok, "lstm-cell", x.shape, h_prev.shape, c_prev.shape, w.shape, u.shape, b.shape)
    h, c, cache = lstm_cell_forward(x, h_prev, c_prev, w, u, b)
    return np.concatenate([h, c]), cache


def _bw_lstm_cell(grad, values, out, ctx, attrs):
    x, h_prev, c_prev, w, u, b = values
    hdim = h_prev.shape[0]
    dh, dc = grad[:hdim], grad[hdim:]
    return list(lstm_cell_backward(x, h_prev, c_prev, w, u, b, ctx, dh, dc))


register_op("matmul", _fw_matmul, _bw_matmul)
register_op("add", _fw_add, _bw_add)
register_op("elementwise-multiply", _fw_mul, _bw_mul)
register_op("concat", _fw_concat, _bw_concat)
register_op("tanh", _fw_tanh, _bw_tanh)
register_op("sigmoid", _fw_sigmoid, _bw_sigmoid)
register_op("embedding-lookup", _fw_embedding, _bw_embedding)
register_op("log-softmax", _fw_log_softmax, _bw_log_softmax)
register_op("logsumexp", _fw_logsumexp, _bw_logsumexp)
register_op("slice", _fw_slice, _bw_slice)
register_op("sum", _fw_sum, _bw_sum)
register_op("lstm-cell", _fw_lstm_cell, _bw_lstm_cell)


# ---------------------------------------------------------------------------
# functional wrappers


def matmul(a, b):
    return apply("matmul", [a, b])


def add(a, b):
    return apply("add", [a, b])


def mul(a, b):
    return apply("elementwise-multiply", [a, b])


def concat(nodes):
    return apply("concat", list(nodes))


def tanh(x):
    return apply("tanh", [x])


def sigmoid(x):
    return apply("sigmoid", [x])


def embedding(table, row):
    return apply("embedding-lookup", [table], row=int(row))


def log_softmax(x):
    return apply("log-softmax", [x])


def logsumexp(x):
    return apply("logsumexp", [x])


def slice_(x, start, stop):
    return apply("slice", [x], start=int(start), stop=int(stop))


def sum_(x):
    return apply("sum", [x])


def lstm_cell(x, h_prev, c_prev, w, u, b):
    """Fused LSTM cell; returns the (h, c) pair as two slice nodes.

    Gates: i, f, o sigmoid and candidate g tanh, stacked in w/u/b as
    [i; f; g; o]; c = f*c_prev + i*g, h = o*tanh(c).
    """
    hdim = h_prev.value.shape[0]
    hc = apply("lstm-cell", [x, h_prev, c_prev, w, u, b])
    return slice_(hc, 0, hdim), slice_(hc, hdim, 2 * hdim)


# ---------------------------------------------------------------------------
# seeded randomness and initialization


class Rng:
    """Seeded random source; identical seeds give identical draw sequences."""

    def __init__(self, seed):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low, high, shape=None):
        return self.gen.uniform(low, high, shape)

    def permutation(self, n):
        return self.gen.permutation(n)

    def integers(self, low, high, shape=None):
        return self.gen.integers(low, high, size=shape)


def glorot(rng: Rng, shape):
    """Uniform [-a, a] with a = sqrt(6 / (fan_in + fan_out)) for 2-D weights."""
    fan_out, fan_in = shape
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, shape)


# ---------------------------------------------------------------------------
# gradient checking


class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    def __init__(self, max_rel_err, per_param, eps, tol):
        self.max_rel_err = max_rel_err
        self.per_param = per_param  # name -> (max rel err, checked entry count)
        self.eps = eps
        self.tol = tol

    @property
    def ok(self):
        return self.max_rel_err < self.tol

    def __repr__(self):
        worst = ", ".join(f"{k}={v[0]:.3g}" for k, v in sorted(self.per_param.items()))
        return f"GradCheckReport(max_rel_err={self.max_rel_err:.3g}, tol={self.tol:g}, {worst})"


def _rel_err(a, n):
    return abs(a - n) / max(1.0, abs(a), abs(n))


def grad_check(build_loss, params, eps=1e-5, tol=1e-4, max_entries=80, seed=0):
    """Check d(loss)/d(param) for every parameter entry against central differences.

    `build_loss` must rebuild the loss graph from the current parameter
    values on every call.  Parameters larger than `max_entries` are
    subsampled with a seeded choice so the check stays fast but repeatable.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    named = dict(params)
    loss = build_loss()
    table = backward(loss, named.values())
    rng = np.random.Generator(np.random.PCG64(seed))
    per_param = {}
    worst = 0.0
    for name, p in named.items():
        flat = p.value.reshape(-1)
        analytic = table[p].reshape(-1)
        n = flat.shape[0]
        idx = np.arange(n) if n <= max_entries else np.sort(rng.choice(n, size=max_entries, replace=False))
        local = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(build_loss().value)
            flat[i] = orig - eps
            down = float(build_loss().value)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            local = max(local, _rel_err(float(analytic[i]), numeric))
        per_param[name] = (local, len(idx))
        worst = max(worst, local)
    return GradCheckReport(worst, per_param, eps, tol)
