"""Minimal dense-tensor math with reverse-mode automatic differentiation.

Everything is 64-bit and runs on a dynamic tape: each primitive records a
node with a backward closure, and `backward` replays the tape in reverse
topological order. Tensors are immutable after creation; a graph belongs to
one logical thread.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "forward_op",
    "backward",
    "grad_check",
    "matmul",
    "add",
    "mul",
    "relu",
    "sigmoid",
    "tanh",
    "sin",
    "cos",
    "reduce_mean",
    "reduce_sum",
    "max_over_axis",
    "concat",
    "scale",
    "sub",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to a primitive's rule."""


# When set to a primitive name, that primitive's backward rule is corrupted.
# Used only by the gradcheck fault-injection negative test / CLI flag.
_FAULT_INJECT: str | None = None

# Optional per-op finiteness check; enabled in tests, off in hot loops.
CHECK_FINITE = False


class Tensor:
    """A contiguous row-major float64 array plus optional tape linkage.

    `leaf=True` marks a trainable leaf; anything produced by a primitive
    carries its parents and a backward closure, which together form the
    compute graph.
    """

    __slots__ = ("data", "leaf", "_parents", "_backward", "_op")

    def __init__(self, data, leaf: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = np.ascontiguousarray(arr)
        self.leaf = leaf
        self._parents: tuple = ()
        self._backward = None
        self._op = None

    @property
    def shape(self):
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A constant copy with no tape linkage."""
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, leaf={self.leaf})"


def _node(data: np.ndarray, parents, op: str, backward_fn) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by primitive '{op}'")
    out = Tensor(data)
    out._parents = tuple(parents)
    out._op = op
    out._backward = backward_fn
    return out


def _faulty(op: str) -> bool:
    return _FAULT_INJECT == op


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def bwd(g, grads):
        ga = g @ b.data.T
        gb = a.data.T @ g
        if _faulty("matmul"):
            gb = gb * 1.01
        grads[0] = ga
        grads[1] = gb

    return _node(out_data, (a, b), "matmul", bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; `b` may broadcast over `a`'s leading dims (bias-style)."""
    if a.shape == b.shape:
        reduce_axes = ()
    elif a.shape[-b.data.ndim:] == b.shape:
        reduce_axes = tuple(range(a.data.ndim - b.data.ndim))
    else:
        raise ShapeError(f"add shapes do not conform: {a.shape} + {b.shape}")
    out_data = a.data + b.data

    def bwd(g, grads):
        grads[0] = g
        gb = g.sum(axis=reduce_axes) if reduce_axes else g
        if _faulty("add"):
            gb = gb + 0.01
        grads[1] = gb

    return _node(out_data, (a, b), "add", bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"elementwise-mul shapes differ: {a.shape} vs {b.shape}")
    out_data = a.data * b.data

    def bwd(g, grads):
        grads[0] = g * b.data
        grads[1] = g * a.data if not _faulty("elementwise-mul") else g * a.data * 1.01

    return _node(out_data, (a, b), "elementwise-mul", bwd)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)
    mask = (x.data > 0.0).astype(np.float64)

    def bwd(g, grads):
        grads[0] = g * mask if not _faulty("relu") else g * (mask + 0.01)

    return _node(out_data, (x,), "relu", bwd)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out_data = _stable_sigmoid(x.data)

    def bwd(g, grads):
        d = out_data * (1.0 - out_data)
        grads[0] = g * d if not _faulty("sigmoid") else g * d * 1.01

    return _node(out_data, (x,), "sigmoid", bwd)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def bwd(g, grads):
        d = 1.0 - out_data * out_data
        grads[0] = g * d if not _faulty("tanh") else g * d * 1.01

    return _node(out_data, (x,), "tanh", bwd)


def sin(x: Tensor) -> Tensor:
    out_data = np.sin(x.data)
    cos_x = np.cos(x.data)

    def bwd(g, grads):
        grads[0] = g * cos_x if not _faulty("sin") else g * cos_x * 1.01

    return _node(out_data, (x,), "sin", bwd)


def cos(x: Tensor) -> Tensor:
    out_data = np.cos(x.data)
    sin_x = np.sin(x.data)

    def bwd(g, grads):
        grads[0] = -g * sin_x if not _faulty("cos") else g * sin_x

    return _node(out_data, (x,), "cos", bwd)


def reduce_mean(x: Tensor) -> Tensor:
    n = x.data.size
    out_data = np.array([x.data.mean()])

    def bwd(g, grads):
        scale_ = (1.0 / n) if not _faulty("reduce-mean") else (1.0 / (n + 1))
        grads[0] = np.full(x.data.shape, g.reshape(-1)[0] * scale_)

    return _node(out_data, (x,), "reduce-mean", bwd)


def reduce_sum(x: Tensor) -> Tensor:
    out_data = np.array([x.data.sum()])

    def bwd(g, grads):
        v = g.reshape(-1)[0] if not _faulty("reduce-sum") else g.reshape(-1)[0] * 1.01
        grads[0] = np.full(x.data.shape, v)

    return _node(out_data, (x,), "reduce-sum", bwd)


def max_over_axis(x: Tensor, axis: int) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ShapeError(f"max-over-axis axis {axis} out of range for shape {x.shape}")
    out_data = x.data.max(axis=axis)
    # gradient routed to the first argmax along the axis
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)

    def bwd(g, grads):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis)
        if _faulty("max-over-axis"):
            gx = gx * 1.01
        grads[0] = gx

    return _node(out_data, (x,), "max-over-axis", bwd)


def concat(parts, axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat of zero tensors")
    ndim = parts[0].data.ndim
    for p in parts[1:]:
        if p.data.ndim != ndim:
            raise ShapeError(
                f"concat rank mismatch: {[q.shape for q in parts]}"
            )
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g, grads):
        pieces = np.split(g, splits, axis=axis)
        for i, piece in enumerate(pieces):
            grads[i] = piece * 1.01 if _faulty("concat") else piece

    return _node(out_data, parts, "concat", bwd)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out_data = x.data * c

    def bwd(g, grads):
        grads[0] = g * c if not _faulty("scale-by-constant") else g * (c + 0.01)

    return _node(out_data, (x,), "scale-by-constant", bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Composite: a + (-1)*b."""
    return add(a, scale(b, -1.0))


def reshape(x: Tensor, shape) -> Tensor:
    """Internal view change; gradient is reshaped back. Not a public primitive."""
    shape = tuple(int(s) for s in shape)
    out_data = x.data.reshape(shape)
    in_shape = x.data.shape

    def bwd(g, grads):
        grads[0] = g.reshape(in_shape)

    return _node(out_data, (x,), "reshape", bwd)


def split(x: Tensor, sizes, axis: int = 0):
    """Internal inverse of concat; gradients scatter back into place."""
    sizes = [int(s) for s in sizes]
    if sum(sizes) != x.data.shape[axis]:
        raise ShapeError(
            f"split sizes {sizes} do not cover axis {axis} of shape {x.shape}")
    offs = np.cumsum([0] + sizes)
    outs = []
    for i in range(len(sizes)):
        sl = [slice(None)] * x.data.ndim
        sl[axis] = slice(int(offs[i]), int(offs[i + 1]))
        sl = tuple(sl)

        def bwd(g, grads, sl=sl):
            gx = np.zeros_like(x.data)
            gx[sl] = g
            grads[0] = gx

        outs.append(_node(x.data[sl].copy(), (x,), "split", bwd))
    return outs


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "elementwise-mul": mul,
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "sin": sin,
    "cos": cos,
    "reduce-mean": reduce_mean,
    "reduce-sum": reduce_sum,
    "max-over-axis": max_over_axis,
    "concat": concat,
    "scale-by-constant": scale,
}


def forward_op(name: str, inputs, **kwargs) -> Tensor:
    """Dispatch a primitive by name, recording it on the graph."""
    if name not in _PRIMITIVES:
        raise ValueError(f"unknown primitive: {name!r}")
    fn = _PRIMITIVES[name]
    if name == "concat":
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(scalar_output: Tensor, leaves) -> dict:
    """Reverse-mode gradients of a scalar w.r.t. the given leaf tensors.

    Returns {id(leaf): ndarray}; unused leaves get zero gradients of
    matching shape. Visits each graph node exactly once (reverse topological
    order found by iterative DFS, so deep tapes do not hit the recursion
    limit).
    """
    if scalar_output.data.size != 1:
        raise ShapeError(
            f"backward requires a scalar output, got shape {scalar_output.shape}"
        )
    leaves = list(leaves)

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(scalar_output, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    leaf_ids = {id(l) for l in leaves}
    if scalar_output._backward is None and not scalar_output.leaf:
        raise ValueError("output was not produced on a graph")

    grad: dict[int, np.ndarray] = {id(scalar_output): np.ones_like(scalar_output.data)}
    for node in reversed(topo):
        g = grad.get(id(node))
        if g is None or node._backward is None:
            continue
        pgrads: dict[int, np.ndarray] = {}
        node._backward(g, pgrads)
        for i, p in enumerate(node._parents):
            pg = pgrads.get(i)
            if pg is None:
                continue
            if id(p) in grad:
                grad[id(p)] = grad[id(p)] + pg
            else:
                grad[id(p)] = pg
        if id(node) not in leaf_ids:
            del grad[id(node)]

    out = {}
    for leaf in leaves:
        out[id(leaf)] = grad.get(id(leaf), np.zeros_like(leaf.data))
    return out


def grads_of(scalar_output: Tensor, leaves) -> list[np.ndarray]:
    """Gradient arrays in the order of `leaves` (convenience wrapper)."""
    g = backward(scalar_output, leaves)
    return [g[id(l)] for l in leaves]


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(f, leaves, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f(leaves) -> scalar Tensor`. Relative error per element is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    leaves = list(leaves)
    out = f(leaves)
    if out.data.size != 1:
        raise ShapeError(f"grad_check function must be scalar, got {out.shape}")
    analytic = grads_of(out, leaves)

    worst = 0.0
    for li, leaf in enumerate(leaves):
        flat = leaf.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = f(leaves).item()
            flat[i] = orig - epsilon
            fm = f(leaves).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * epsilon)
            a = analytic[li].reshape(-1)[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst
