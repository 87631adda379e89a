"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Graphs are built from constructors and (re)evaluated with ``evaluate``::

    x = placeholder("x")
    w = parameter(Parameter("w", np.ones((3, 2), np.float32)))
    loss = reduce_sum(square(matmul(x, w)))
    evaluate(loss, {"x": batch})
    grads = backward(loss)

Values are numpy arrays, float32 by default.  Ops keep whatever float dtype
their inputs carry, so promoting parameters to float64 (as ``grad_check``
can) runs the whole graph in double precision.  Reductions always accumulate
in float64.

Nodes whose inputs are all known at construction time are computed
eagerly, so graphs over constants behave like define-by-run code; anything
downstream of an unbound placeholder waits for ``evaluate``.

The op set is closed: ``OPS`` lists every supported node kind, each with a
forward and a backward rule.

The recurrent cell is a two-gate GRU with packed weights ``W (I, 3H)``,
``U (H, 3H)`` and biases ``bx, bh (3H,)``, gate order ``[r | z | n]``::

    r  = sigmoid(x W_r + bx_r + h U_r + bh_r)
    z  = sigmoid(x W_z + bx_z + h U_z + bh_z)
    n  = tanh(x W_n + bx_n + r * (h U_n + bh_n))
    h' = (1 - z) * n + z * h
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

DTYPE = np.float32

OPS = (
    "input", "parameter", "add", "mul", "matmul", "conv1d",
    "recurrent-cell-step", "tanh", "sigmoid", "exp", "log", "softmax",
    "reduce-sum", "reduce-mean", "slice", "concat", "sqrt", "square",
    "cross-entropy-loss", "transpose", "reshape",
)


class ShapeError(ValueError):
    pass


class UnboundInputError(KeyError):
    pass


class GradientError(RuntimeError):
    pass


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        self.value = np.asarray(self.value)
        if not np.issubdtype(self.value.dtype, np.floating):
            self.value = self.value.astype(DTYPE)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)


_ids = itertools.count()


class Node:
    __slots__ = ("op", "parents", "attrs", "name", "value", "grad", "cache", "uid")

    def __init__(self, op: str, parents=(), name: str | None = None, **attrs):
        self.op = op
        self.parents = tuple(parents)
        self.attrs = attrs
        self.name = name
        self.value = None
        self.grad = None
        self.cache = None
        self.uid = next(_ids)
        # eager when everything upstream is already known
        if op == "input":
            self.value = attrs.get("default")
        elif op == "parameter":
            self.value = attrs["param"].value
        elif all(p.value is not None for p in self.parents):
            self.value = np.asarray(RULES[op][0](self, *(p.value for p in self.parents)))

    @property
    def shape(self):
        return None if self.value is None else self.value.shape

    def __repr__(self):
        shape = "?" if self.value is None else self.value.shape
        return f"Node({self.op}, name={self.name!r}, shape={shape})"


# --------------------------------------------------------------------------
# graph construction
# --------------------------------------------------------------------------


def placeholder(name: str, requires_grad: bool = False) -> Node:
    """Input node bound by name at evaluation time."""
    return Node("input", name=name, requires_grad=requires_grad)


def constant(value, name: str | None = None) -> Node:
    """Input node with a fixed value; never receives gradients."""
    value = np.asarray(value)
    if not np.issubdtype(value.dtype, np.floating):
        value = value.astype(DTYPE)
    return Node("input", name=name, default=value, requires_grad=False)


def parameter(p: Parameter) -> Node:
    return Node("parameter", name=p.name, param=p)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(np.asarray(x, dtype=DTYPE))


def add(a, b) -> Node:
    return Node("add", (_as_node(a), _as_node(b)))


def mul(a, b) -> Node:
    return Node("mul", (_as_node(a), _as_node(b)))


def matmul(a, b) -> Node:
    return Node("matmul", (_as_node(a), _as_node(b)))


def conv1d(x, w, stride: int = 1) -> Node:
    """Valid (unpadded) strided convolution: x (B, Cin, L), w (Cout, Cin, K)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return Node("conv1d", (_as_node(x), _as_node(w)), stride=stride)


def gru_cell(x, h, W, U, bx, bh) -> Node:
    return Node("recurrent-cell-step", tuple(_as_node(v) for v in (x, h, W, U, bx, bh)))


def tanh(x) -> Node:
    return Node("tanh", (_as_node(x),))


def sigmoid(x) -> Node:
    return Node("sigmoid", (_as_node(x),))


def exp(x) -> Node:
    return Node("exp", (_as_node(x),))


def log(x) -> Node:
    return Node("log", (_as_node(x),))


def sqrt(x) -> Node:
    return Node("sqrt", (_as_node(x),))


def square(x) -> Node:
    return Node("square", (_as_node(x),))


def softmax(x, axis: int = -1) -> Node:
    return Node("softmax", (_as_node(x),), axis=axis)


def reduce_sum(x, axis=None, keepdims: bool = False) -> Node:
    return Node("reduce-sum", (_as_node(x),), axis=axis, keepdims=keepdims)


def reduce_mean(x, axis=None, keepdims: bool = False) -> Node:
    return Node("reduce-mean", (_as_node(x),), axis=axis, keepdims=keepdims)


def slice_(x, axis: int, start: int, stop: int | None = None) -> Node:
    """``x[..., start:stop, ...]`` along ``axis``; ``stop=None`` selects a
    single index and drops the axis."""
    return Node("slice", (_as_node(x),), axis=axis, start=start, stop=stop)


def concat(xs: Iterable, axis: int = 0, stack: bool = False) -> Node:
    """Join along an existing axis, or along a new one when ``stack``."""
    xs = tuple(_as_node(x) for x in xs)
    if not xs:
        raise ValueError("concat needs at least one input")
    return Node("concat", xs, axis=axis, stack=stack)


def transpose(x, axes: tuple[int, ...]) -> Node:
    return Node("transpose", (_as_node(x),), axes=tuple(axes))


def reshape(x, shape: tuple[int, ...]) -> Node:
    return Node("reshape", (_as_node(x),), shape=tuple(shape))


def cross_entropy(logits, labels) -> Node:
    """Mean softmax cross-entropy of ``logits (B, C)`` against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    return Node("cross-entropy-loss", (_as_node(logits),), labels=labels)


def sub(a, b) -> Node:
    return add(a, mul(b, np.asarray(-1.0, dtype=DTYPE)))


# --------------------------------------------------------------------------
# forward / backward rules
# --------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_check(node, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{node.op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def _f_add(node, a, b):
    _broadcast_check(node, a, b)
    return a + b


def _b_add(node, g, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _f_mul(node, a, b):
    _broadcast_check(node, a, b)
    return a * b


def _b_mul(node, g, a, b):
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _f_matmul(node, a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        return np.matmul(a, b)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None


def _b_matmul(node, g, a, b):
    ga = np.matmul(g, np.swapaxes(b, -1, -2))
    gb = np.matmul(np.swapaxes(a, -1, -2), g)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def _im2col(x, k, stride):
    cols = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)[:, :, ::stride, :]
    b, cin, t, _ = cols.shape
    return np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(b, t, cin * k)


def _f_conv1d(node, x, w):
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {w.shape}")
    if x.shape[2] < w.shape[2]:
        raise ShapeError(f"conv1d: input length {x.shape[2]} shorter than kernel {w.shape}")
    cols = _im2col(x, w.shape[2], node.attrs["stride"])
    node.cache = cols
    out = cols @ w.reshape(w.shape[0], -1).T
    return np.ascontiguousarray(out.transpose(0, 2, 1))


def _b_conv1d(node, g, x, w):
    stride = node.attrs["stride"]
    cols = node.cache
    cout, cin, k = w.shape
    g2 = g.transpose(0, 2, 1)  # (B, T, Cout)
    t = g2.shape[1]
    gw = (g2.reshape(-1, cout).T @ cols.reshape(-1, cin * k)).reshape(w.shape)
    dcols = (g2 @ w.reshape(cout, -1)).reshape(g2.shape[0], t, cin, k)
    gx = np.zeros_like(x, dtype=dcols.dtype)
    if t <= k:
        for i in range(t):
            gx[:, :, i * stride:i * stride + k] += dcols[:, i]
    else:
        span = stride * (t - 1) + 1
        dcols = dcols.transpose(0, 2, 1, 3)  # (B, Cin, T, K)
        for j in range(k):
            gx[:, :, j:j + span:stride] += dcols[..., j]
    return gx, gw


def _sig(v):
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def _f_gru(node, x, h, W, U, bx, bh):
    hid = h.shape[-1]
    if (x.ndim != 2 or h.ndim != 2 or W.shape != (x.shape[1], 3 * hid)
            or U.shape != (hid, 3 * hid) or bx.shape != (3 * hid,) or bh.shape != (3 * hid,)
            or h.shape[0] not in (1, x.shape[0])):
        raise ShapeError(
            f"recurrent-cell-step: x {x.shape}, h {h.shape}, W {W.shape}, U {U.shape}, "
            f"bx {bx.shape}, bh {bh.shape} are inconsistent")
    gx = x @ W + bx
    gh = h @ U + bh
    r = _sig(gx[:, :hid] + gh[:, :hid])
    z = _sig(gx[:, hid:2 * hid] + gh[:, hid:2 * hid])
    hn = gh[:, 2 * hid:]
    n = np.tanh(gx[:, 2 * hid:] + r * hn)
    node.cache = (r, z, n, hn)
    return (1.0 - z) * n + z * h


def _b_gru(node, g, x, h, W, U, bx, bh):
    r, z, n, hn = node.cache
    h0 = h
    h = np.broadcast_to(h, g.shape)
    dn = g * (1.0 - z) * (1.0 - n * n)
    dz = g * (h - n) * z * (1.0 - z)
    dr = dn * hn * r * (1.0 - r)
    dgx = np.concatenate([dr, dz, dn], axis=1)
    dgh = np.concatenate([dr, dz, dn * r], axis=1)
    dx = dgx @ W.T
    dh = g * z + dgh @ U.T
    return dx, _unbroadcast(dh, h0.shape), x.T @ dgx, h.T @ dgh, dgx.sum(axis=0), dgh.sum(axis=0)


def _f_softmax(node, x):
    axis = node.attrs["axis"]
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)


def _b_softmax(node, g, x):
    y = node.value
    axis = node.attrs["axis"]
    dot = (g * y).sum(axis=axis, keepdims=True, dtype=np.float64).astype(y.dtype)
    return (y * (g - dot),)


def _f_sum(node, x):
    a = node.attrs
    return np.asarray(x.sum(axis=a["axis"], keepdims=a["keepdims"], dtype=np.float64), dtype=x.dtype)


def _reduced_count(shape, axis):
    if axis is None:
        return int(np.prod(shape))
    axes = axis if isinstance(axis, tuple) else (axis,)
    return int(np.prod([shape[ax] for ax in axes]))


def _expand_grad(node, g, x):
    a = node.attrs
    if a["axis"] is not None and not a["keepdims"]:
        g = np.expand_dims(g, a["axis"])
    return np.broadcast_to(g, x.shape)


def _b_sum(node, g, x):
    return (np.array(_expand_grad(node, g, x)),)


def _f_mean(node, x):
    a = node.attrs
    return np.asarray(x.mean(axis=a["axis"], keepdims=a["keepdims"], dtype=np.float64), dtype=x.dtype)


def _b_mean(node, g, x):
    n = _reduced_count(x.shape, node.attrs["axis"])
    return (_expand_grad(node, g, x) / np.asarray(n, dtype=g.dtype),)


def _slicer(node, ndim):
    a = node.attrs
    axis = a["axis"] % ndim
    idx = [slice(None)] * ndim
    idx[axis] = a["start"] if a["stop"] is None else slice(a["start"], a["stop"])
    return tuple(idx)


def _f_slice(node, x):
    a = node.attrs
    n = x.shape[a["axis"]]
    if a["stop"] is None and not -n <= a["start"] < n:
        raise ShapeError(f"slice: index {a['start']} out of range for axis of length {n} in {x.shape}")
    return x[_slicer(node, x.ndim)]


def _b_slice(node, g, x):
    gx = np.zeros_like(x, dtype=g.dtype)
    gx[_slicer(node, x.ndim)] = g
    return (gx,)


def _f_concat(node, *xs):
    try:
        if node.attrs["stack"]:
            return np.stack(xs, axis=node.attrs["axis"])
        return np.concatenate(xs, axis=node.attrs["axis"])
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from None


def _b_concat(node, g, *xs):
    axis = node.attrs["axis"]
    if node.attrs["stack"]:
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def _f_transpose(node, x):
    return np.ascontiguousarray(np.transpose(x, node.attrs["axes"]))


def _b_transpose(node, g, x):
    return (np.transpose(g, np.argsort(node.attrs["axes"])),)


def _f_reshape(node, x):
    try:
        return x.reshape(node.attrs["shape"])
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {node.attrs['shape']}") from None


def _b_reshape(node, g, x):
    return (g.reshape(x.shape),)


def _f_xent(node, z):
    labels = node.attrs["labels"]
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ShapeError(f"cross-entropy-loss: logits {z.shape} vs labels {labels.shape}")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ShapeError(f"cross-entropy-loss: labels out of range for {z.shape[1]} classes")
    z64 = z.astype(np.float64)
    m = z64.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z64 - m).sum(axis=1))
    node.cache = np.exp(z64 - (m + np.log(np.exp(z64 - m).sum(axis=1, keepdims=True))))
    return np.asarray((lse - z64[np.arange(len(labels)), labels]).mean(), dtype=z.dtype)


def _b_xent(node, g, z):
    labels = node.attrs["labels"]
    p = node.cache.copy()
    p[np.arange(len(labels)), labels] -= 1.0
    return ((p * (float(g) / len(labels))).astype(z.dtype),)


def _f_sqrt(node, x):
    return np.sqrt(x)


def _b_sqrt(node, g, x):
    y = node.value
    # subgradient 0 at the origin keeps zero-energy spectra finite
    safe = np.where(y > 0, y, 1.0)
    return (np.where(y > 0, g / (2.0 * safe), 0.0).astype(g.dtype),)


_UNARY = {
    "tanh": (np.tanh, lambda node, g, x: (g * (1.0 - node.value ** 2),)),
    "sigmoid": (_sig, lambda node, g, x: (g * node.value * (1.0 - node.value),)),
    "exp": (np.exp, lambda node, g, x: (g * node.value,)),
    "log": (np.log, lambda node, g, x: (g / x,)),
    "square": (np.square, lambda node, g, x: (2.0 * g * x,)),
}

RULES: dict[str, tuple[Callable, Callable]] = {
    "add": (_f_add, _b_add),
    "mul": (_f_mul, _b_mul),
    "matmul": (_f_matmul, _b_matmul),
    "conv1d": (_f_conv1d, _b_conv1d),
    "recurrent-cell-step": (_f_gru, _b_gru),
    "softmax": (_f_softmax, _b_softmax),
    "reduce-sum": (_f_sum, _b_sum),
    "reduce-mean": (_f_mean, _b_mean),
    "slice": (_f_slice, _b_slice),
    "concat": (_f_concat, _b_concat),
    "transpose": (_f_transpose, _b_transpose),
    "reshape": (_f_reshape, _b_reshape),
    "cross-entropy-loss": (_f_xent, _b_xent),
    "sqrt": (_f_sqrt, _b_sqrt),
}
for _op, (_fn, _bw) in _UNARY.items():
    RULES[_op] = ((lambda fn: lambda node, x: fn(x))(_fn), _bw)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def topo_order(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.uid in seen:
            continue
        seen.add(node.uid)
        stack.append((node, True))
        for p in reversed(node.parents):
            if p.uid not in seen:
                stack.append((p, False))
    return order


def evaluate(root: Node, bindings: dict[str, np.ndarray] | None = None) -> np.ndarray:
    """Compute ``root`` and cache every intermediate value on its node."""
    bindings = bindings or {}
    for node in topo_order(root):
        node.grad = None
        if node.op == "input":
            if node.name in bindings:
                value = np.asarray(bindings[node.name])
                if not np.issubdtype(value.dtype, np.floating):
                    value = value.astype(DTYPE)
            elif node.attrs.get("default") is not None:
                value = node.attrs["default"]
            else:
                raise UnboundInputError(f"input {node.name!r} is not bound")
        elif node.op == "parameter":
            value = node.attrs["param"].value
        else:
            forward = RULES[node.op][0]
            value = np.asarray(forward(node, *(p.value for p in node.parents)))
        node.value = value
    return root.value


def _requires_grad(order: list[Node]) -> set[int]:
    live = set()
    for node in order:
        if node.op == "parameter":
            flag = node.attrs["param"].trainable
        elif node.op == "input":
            flag = node.attrs.get("requires_grad", False)
        else:
            flag = any(p.uid in live for p in node.parents)
        if flag:
            live.add(node.uid)
    return live


def backward(loss: Node, params: Iterable[Parameter] = ()) -> dict[str, np.ndarray]:
    """Reverse pass from a scalar ``loss``.

    Returns gradients keyed by parameter name for every trainable parameter
    reachable from ``loss``; any extra ``params`` that are unreachable get
    zeros.  Frozen parameters are never reported.  Input nodes created with
    ``requires_grad=True`` have their gradient left on ``node.grad``.
    """
    if loss.value is None:
        raise GradientError("loss has not been evaluated")
    if loss.value.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order = topo_order(loss)
    live = _requires_grad(order)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    grads: dict[str, np.ndarray] = {}
    for node in reversed(order):
        if node.grad is None or node.uid not in live:
            continue
        if node.op == "parameter":
            name = node.attrs["param"].name
            grads[name] = grads[name] + node.grad if name in grads else node.grad
            continue
        if node.op == "input":
            continue
        if not any(p.uid in live for p in node.parents):
            continue
        pgrads = RULES[node.op][1](node, node.grad, *(p.value for p in node.parents))
        for p, pg in zip(node.parents, pgrads):
            if p.uid not in live:
                continue
            pg = np.asarray(pg, dtype=p.value.dtype).reshape(p.value.shape)
            p.grad = pg if p.grad is None else p.grad + pg
    for p in params:
        if p.trainable and p.name not in grads:
            grads[p.name] = np.zeros_like(p.value)
    return grads


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Iterable[Parameter], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on the trainable parameters.

    Frozen parameters and parameters without a gradient are left untouched.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        if not p.trainable or p.name not in grads:
            continue
        g = np.asarray(grads[p.name], dtype=np.float64)
        if g.shape != p.value.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} does not match parameter {p.name!r} {p.value.shape}")
        m = state.m.get(p.name)
        v = state.v.get(p.name)
        if m is None:
            m = np.zeros(p.value.shape)
            v = np.zeros(p.value.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[p.name], state.v[p.name] = m, v
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.value = (p.value - update).astype(p.value.dtype)
    return state


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------


def grad_check(
    build_loss: Callable[[list[Parameter]], Node],
    params: list[Parameter],
    epsilon: float = 1e-3,
    n_samples: int | None = None,
    rng: np.random.Generator | None = None,
    bindings: dict | None = None,
    dtype=None,
) -> float:
    """Max relative error between backprop and central differences.

    Every entry of every parameter is checked unless ``n_samples`` is given,
    in which case that many entries are drawn uniformly (with ``rng``).
    ``dtype`` temporarily casts the parameters (e.g. to float64) for the check.
    """
    if not 1e-5 <= epsilon <= 1e-2:
        raise ValueError("epsilon must lie in [1e-5, 1e-2]")
    saved = [p.value for p in params]
    if dtype is not None:
        for p in params:
            p.value = p.value.astype(dtype)
    try:
        loss = build_loss(params)

        def f() -> float:
            value = float(evaluate(loss, bindings))
            if not np.isfinite(value):
                raise GradientError("loss is not finite")
            return value

        f()
        analytic = backward(loss, params)
        entries = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
        if n_samples is not None and n_samples < len(entries):
            rng = rng or np.random.default_rng(0)
            pick = rng.choice(len(entries), size=n_samples, replace=False)
            entries = [entries[k] for k in sorted(pick)]
        worst = 0.0
        for i, j in entries:
            p = params[i]
            flat = p.value.reshape(-1)
            orig = flat[j].copy()
            flat[j] = orig + epsilon
            up = f()
            flat[j] = orig - epsilon
            down = f()
            flat[j] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = float(analytic[p.name].reshape(-1)[j])
            worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
        return worst
    finally:
        for p, v in zip(params, saved):
            p.value = v
