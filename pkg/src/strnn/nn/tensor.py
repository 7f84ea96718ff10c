"""Tape-based reverse-mode automatic differentiation over float64 numpy arrays.

Every operation on a :class:`Tensor` that requires gradients records a node
holding its parents and a closure mapping the output gradient to parent
gradients.  :func:`backward` walks the recorded graph in reverse topological
order.  Under :func:`no_grad` nothing is recorded, which is what inference
and frozen sub-networks use.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    prev = _GRAD_ENABLED[0]
    _GRAD_ENABLED[0] = False
    try:
        yield
    finally:
        _GRAD_ENABLED[0] = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED[0]


class Tensor:
    """An n-dimensional float64 array that can take part in differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # -- graph ----------------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        backward(self, grad)

    # -- operators (implemented in terms of the op functions below) ----------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        return power(self, p)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _wrap(data: np.ndarray) -> Tensor:
    # Fast path constructor for arrays that are already float64.
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.requires_grad = False
    t._parents = ()
    t._backward = None
    t.name = None
    return t


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Create the output tensor of an op, recording it when gradients are needed.

    ``backward_fn(g)`` must return one gradient (or ``None``) per parent.
    """
    out = _wrap(data)
    if _GRAD_ENABLED[0]:
        for p in parents:
            if p.requires_grad:
                out.requires_grad = True
                out._parents = tuple(parents)
                out._backward = backward_fn
                break
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


class SliceGrad:
    """Gradient that is nonzero only on a basic-index region of its parent."""

    __slots__ = ("idx", "g", "shape")

    def __init__(self, idx, g: np.ndarray, shape: tuple[int, ...]):
        self.idx, self.g, self.shape = idx, g, shape

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=DTYPE)
        out[self.idx] = self.g
        return out


class OuterGrad:
    """Weight gradient ``a.T @ b`` whose evaluation is deferred.

    Recurrent unrolling produces one small outer product per step for the
    same weight matrix; stacking them into a single product is much cheaper
    than summing many small ones.
    """

    __slots__ = ("a", "b")

    def __init__(self, a: np.ndarray, b: np.ndarray):
        self.a, self.b = a, b


class _Deferred:
    __slots__ = ("a", "b")

    def __init__(self):
        self.a: list[np.ndarray] = []
        self.b: list[np.ndarray] = []

    def value(self) -> np.ndarray:
        if len(self.a) == 1:
            return self.a[0].T @ self.b[0]
        return np.concatenate(self.a).T @ np.concatenate(self.b)


def backward(loss: Tensor, grad: np.ndarray | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if grad is None:
        if loss.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(grad, dtype=DTYPE)}
    deferred: dict[int, _Deferred] = {}
    # Keys whose buffers were allocated here and may be updated in place.
    owned: set[int] = set()
    for node in reversed(order):
        key = id(node)
        g = grads.pop(key, None)
        d = deferred.pop(key, None)
        if d is not None:
            dv = d.value()
            g = dv if g is None else g + dv
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node._parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if isinstance(pg, OuterGrad):
                d = deferred.get(key)
                if d is None:
                    d = deferred[key] = _Deferred()
                d.a.append(pg.a)
                d.b.append(pg.b)
                continue
            buf = grads.get(key)
            if isinstance(pg, SliceGrad):
                if buf is None:
                    buf = np.zeros(pg.shape, dtype=DTYPE)
                    owned.add(key)
                elif key not in owned:
                    buf = buf.copy()
                    owned.add(key)
                buf[pg.idx] += pg.g
                grads[key] = buf
            elif buf is None:
                grads[key] = pg
            elif key in owned:
                buf += pg
            else:
                grads[key] = buf + pg
                owned.add(key)


def grad(loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Return gradients of ``loss`` for ``params``; unreachable ones get zeros.

    Existing ``.grad`` values are cleared first.
    """
    params = list(params)
    for p in params:
        p.grad = None
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


# ---------------------------------------------------------------------------
# elementary ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return make_node(ad * bd, (a, b),
                     lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd
    return make_node(out, (a, b),
                     lambda g: (_unbroadcast(g / bd, ad.shape),
                                _unbroadcast(-g * out / bd, bd.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_node(-a.data, (a,), lambda g: (-g,))


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_node(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_node(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make_node(out, (a,), lambda g: (g * 0.5 / out,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,))


def sin(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_node(np.sin(ad), (a,), lambda g: (g * np.cos(ad),))


def cos(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_node(np.cos(ad), (a,), lambda g: (-g * np.sin(ad),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return make_node(out, (a,), lambda g: (g * out * (1.0 - out),))


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    out = _elu(a.data, alpha)
    pos = a.data > 0
    return make_node(out, (a,), lambda g: (g * np.where(pos, 1.0, out + alpha),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _elu(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def matmul(a, b) -> Tensor:
    """``a @ b`` where ``b`` is 2-D and ``a`` has any number of leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_node(ad @ bd, (a, b), bw)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_node(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return make_node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else tuple(np.argsort(axes))
    return make_node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    items = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (slice, int, type(Ellipsis))) or i is None for i in items)

    def bw(g):
        if basic:
            return (SliceGrad(idx, g, shape),)
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, idx, g)
        return (out,)

    return make_node(a.data[idx], (a,), bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return make_node(data, tensors, bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return make_node(data, tensors, bw)


def take(a, indices, axis: int = -1) -> Tensor:
    """Gather distinct ``indices`` along ``axis``."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    shape = a.shape

    def bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        if len(np.unique(idx)) == len(idx):
            sl = [slice(None)] * len(shape)
            sl[axis] = idx
            out[tuple(sl)] = g
        else:
            np.add.at(np.moveaxis(out, axis, -1), (Ellipsis, idx), np.moveaxis(g, axis, -1))
        return (out,)

    return make_node(np.take(a.data, idx, axis=axis), (a,), bw)
