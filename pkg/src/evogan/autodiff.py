"""Dense 2-D tensors with reverse-mode automatic differentiation.

Every value is a float64 matrix; batches are rows. Operations build a graph
of nodes, and ``backward`` walks that graph once in reverse topological
order. Leaf gradients are overwritten (not accumulated) on each call.

Subgradient conventions at kinks: relu'(0) = 0, |x|'(0) = 0, and
``max_const``/``min_const`` give derivative 0 when the input equals the
constant. ``row_max`` routes its adjoint to the lowest-index maximizer.
"""

import itertools

import numpy as np

__all__ = [
    "ShapeError",
    "DomainError",
    "Tensor",
    "Tape",
    "as_tensor",
    "detach",
    "matmul",
    "affine",
    "transpose",
    "elementwise",
    "add",
    "sub",
    "mul",
    "relu",
    "leaky_relu",
    "max_const",
    "min_const",
    "absolute",
    "reduce",
    "row_max",
    "row_argmax",
    "l2_norm",
    "take_rows",
    "pick",
    "backward",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


_node_ids = itertools.count()


class Tensor:
    """A float64 matrix that may participate in gradient computation.

    Parameters
    ----------
    values : array_like
        Scalars become 1x1, vectors become a single row. More than two
        dimensions is rejected.
    requires_grad : bool
        Mark as a differentiable leaf.
    """

    __slots__ = ("values", "grad", "requires_grad", "node_id", "_parents", "_backward", "op")

    def __init__(self, values, requires_grad=False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim > 2:
            raise ShapeError(f"only 2-D tensors are supported, got ndim={arr.ndim}")
        self.values = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    @classmethod
    def _result(cls, values, parents, backward_fn, op):
        # Internal constructor: no copy, no validation.
        out = cls.__new__(cls)
        out.values = values
        out.grad = None
        out.node_id = next(_node_ids)
        out.op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_leaf(self):
        return self._backward is None

    def item(self):
        if self.values.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def numpy(self):
        return self.values

    def backward(self):
        backward(self)

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def detach(t):
    """Return a constant tensor sharing ``t``'s values."""
    out = Tensor.__new__(Tensor)
    out.values = t.values
    out.grad = None
    out.requires_grad = False
    out.node_id = next(_node_ids)
    out._parents = ()
    out._backward = None
    out.op = "detach"
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    (n1, m1), (n2, m2) = a.shape, b.shape
    if (n1 == n2 or n1 == 1 or n2 == 1) and (m1 == m2 or m1 == 1 or m2 == 1):
        return
    raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def _bw(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return Tensor._result(av @ bv, (a, b), _bw, "matmul")


def affine(x, weight, bias, slope=None):
    """Fused dense layer ``act(x @ weight + bias)``.

    ``slope`` None gives a linear layer; otherwise the activation is a leaky
    relu with that negative-side slope (0 for plain relu).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.shape[1] != weight.shape[0] or bias.shape != (1, weight.shape[1]):
        raise ShapeError(f"affine: x {x.shape}, weight {weight.shape}, bias {bias.shape}")
    xv, wv = x.values, weight.values
    z = xv @ wv
    z += bias.values
    if slope is None:
        out = z
    elif 0.0 <= slope <= 1.0:
        out = np.maximum(z, slope * z)
    else:
        out = np.where(z > 0, z, slope * z)

    def _bw(g):
        if slope is not None:
            g = np.where(z > 0, g, slope * g)
        return (g @ wv.T if x.requires_grad else None,
                xv.T @ g if weight.requires_grad else None,
                g.sum(axis=0, keepdims=True) if bias.requires_grad else None)

    return Tensor._result(out, (x, weight, bias), _bw, "affine")


def transpose(a):
    a = as_tensor(a)
    return Tensor._result(a.values.T, (a,), lambda g: (g.T,), "transpose")


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor._result(a.values + b.values, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor._result(a.values - b.values, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        c = float(b)
        return Tensor._result(a.values * c, (a,), lambda g: (g * c,), "scale")
    if not isinstance(a, Tensor) and np.isscalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.values, b.values

    def _bw(g):
        return (_unbroadcast(g * bv, av.shape) if a.requires_grad else None,
                _unbroadcast(g * av, bv.shape) if b.requires_grad else None)

    return Tensor._result(av * bv, (a, b), _bw, "mul")


def relu(a):
    a = as_tensor(a)
    mask = a.values > 0
    return Tensor._result(np.where(mask, a.values, 0.0), (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, alpha=0.2):
    a = as_tensor(a)
    av = a.values
    out = np.maximum(av, alpha * av) if 0.0 <= alpha <= 1.0 else np.where(av > 0, av, alpha * av)

    def _bw(g):
        return (np.where(av > 0, g, alpha * g),)

    return Tensor._result(out, (a,), _bw, "leaky_relu")


def max_const(a, c=0.0):
    """Elementwise max(a, c); derivative 0 where a <= c."""
    a = as_tensor(a)
    mask = a.values > c
    return Tensor._result(np.where(mask, a.values, c), (a,), lambda g: (g * mask,), "max_const")


def min_const(a, c):
    """Elementwise min(a, c); derivative 0 where a >= c."""
    a = as_tensor(a)
    mask = a.values < c
    return Tensor._result(np.where(mask, a.values, c), (a,), lambda g: (g * mask,), "min_const")


def absolute(a):
    a = as_tensor(a)
    sign = np.sign(a.values)
    return Tensor._result(np.abs(a.values), (a,), lambda g: (g * sign,), "abs")


_UNARY = {
    "relu": relu,
    "abs": absolute,
}


def elementwise(kind, a, b=None, param=None):
    """Dispatch an elementwise operation by name.

    ``kind`` is one of add, sub, mul (binary, need ``b``), relu, abs,
    leaky_relu (``param`` = slope, default 0.2), max_const and min_const
    (``param`` = the constant).
    """
    if kind in ("add", "sub", "mul"):
        if b is None:
            raise ShapeError(f"{kind} needs two operands")
        return {"add": add, "sub": sub, "mul": mul}[kind](a, b)
    if kind in _UNARY:
        return _UNARY[kind](a)
    if kind == "leaky_relu":
        return leaky_relu(a, 0.2 if param is None else param)
    if kind == "max_const":
        return max_const(a, 0.0 if param is None else param)
    if kind == "min_const":
        if param is None:
            raise DomainError("min_const needs a constant")
        return min_const(a, param)
    raise DomainError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# reductions and indexing


def _sum(a, axis):
    shape = a.shape
    if axis is None:
        out = np.array([[a.values.sum()]])
    else:
        out = a.values.sum(axis=axis, keepdims=True)
    return Tensor._result(out, (a,), lambda g: (np.broadcast_to(g, shape),), "sum")


def _mean(a, axis):
    shape = a.shape
    count = a.values.size if axis is None else shape[axis]
    if axis is None:
        out = np.array([[a.values.mean()]])
    else:
        out = a.values.mean(axis=axis, keepdims=True)
    return Tensor._result(out, (a,), lambda g: (np.broadcast_to(g / count, shape),), "mean")


def row_max(a):
    """Per-row maximum as an n x 1 tensor."""
    a = as_tensor(a)
    if a.shape[1] == 0:
        raise DomainError("row_max over an empty axis")
    idx = np.argmax(a.values, axis=1)
    rows = np.arange(a.shape[0])
    out = a.values[rows, idx][:, None]
    shape = a.shape

    def _bw(g):
        full = np.zeros(shape)
        full[rows, idx] = g[:, 0]
        return (full,)

    return Tensor._result(out, (a,), _bw, "row_max")


def row_argmax(a):
    """Per-row maximizer as 1-indexed integer labels, lowest index on ties.

    Not differentiable; returns a plain integer array.
    """
    vals = a.values if isinstance(a, Tensor) else np.atleast_2d(np.asarray(a, dtype=np.float64))
    if vals.shape[1] == 0:
        raise DomainError("row_argmax over an empty axis")
    return np.argmax(vals, axis=1) + 1


def reduce(kind, a, axis=None):
    """Reduce ``a`` by ``kind`` in {sum, mean, row_max, row_argmax}.

    ``axis`` applies to sum and mean (None, 0 or 1); results keep 2-D shape.
    """
    a = as_tensor(a)
    if axis not in (None, 0, 1):
        raise DomainError(f"invalid axis {axis!r}")
    if kind in ("sum", "mean"):
        if a.values.size == 0 or (axis is not None and a.shape[axis] == 0):
            raise DomainError(f"{kind} over an empty axis")
        return _sum(a, axis) if kind == "sum" else _mean(a, axis)
    if kind == "row_max":
        return row_max(a)
    if kind == "row_argmax":
        return row_argmax(a)
    raise DomainError(f"unknown reduction {kind!r}")


def l2_norm(a):
    """Euclidean norm of all entries; the gradient at the zero vector is zero."""
    a = as_tensor(a)
    av = a.values
    norm = float(np.sqrt(np.sum(av * av)))

    def _bw(g):
        if norm == 0.0:
            return (np.zeros_like(av),)
        return (av * (g[0, 0] / norm),)

    return Tensor._result(np.array([[norm]]), (a,), _bw, "l2_norm")


def take_rows(a, index):
    """Gather rows ``a[index]``; repeated indices accumulate in the adjoint."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    shape = a.shape

    def _bw(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._result(a.values[index], (a,), _bw, "take_rows")


def pick(a, columns):
    """Select one entry per row, ``a[i, columns[i]]`` (0-indexed), as n x 1."""
    a = as_tensor(a)
    columns = np.asarray(columns, dtype=np.intp)
    if columns.shape != (a.shape[0],):
        raise ShapeError(f"pick: need {a.shape[0]} column indices, got {columns.shape}")
    rows = np.arange(a.shape[0])
    shape = a.shape

    def _bw(g):
        full = np.zeros(shape)
        full[rows, columns] = g[:, 0]
        return (full,)

    return Tensor._result(a.values[rows, columns][:, None], (a,), _bw, "pick")


# ---------------------------------------------------------------------------
# reverse sweep


class Tape:
    """Differentiable nodes reachable from ``output``, in topological order."""

    def __init__(self, output):
        self.output = output
        self.nodes = self._toposort(output)

    @staticmethod
    def _toposort(root):
        order = []
        if not root.requires_grad:
            return order
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in visited:
                continue
            visited.add(node.node_id)
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and parent.node_id not in visited:
                    stack.append((parent, False))
        return order

    def __len__(self):
        return len(self.nodes)

    def run(self, seed):
        adjoints = {self.output.node_id: seed}
        for node in reversed(self.nodes):
            g = adjoints.pop(node.node_id, None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = np.array(g, dtype=np.float64)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = adjoints.get(parent.node_id)
                adjoints[parent.node_id] = pg if prev is None else prev + pg


def backward(loss):
    """Populate ``.grad`` of every differentiable leaf feeding ``loss``."""
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    Tape(loss).run(np.ones((1, 1)))
