"""Minimal define-by-run reverse-mode autodiff over float64 numpy arrays.

Every op builds a fresh node holding its parents and a vector-Jacobian
product closure; ``gradients`` walks the graph once in reverse topological
order.  Values are checked for finiteness on construction, so a NaN or Inf
anywhere surfaces as :class:`NonFiniteError` at the op that produced it.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """A tensor value became NaN or infinite."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjp=None, op: str = ""):
        arr = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite value produced by {op or 'constructor'}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._vjp = _vjp
        self.op = op

    # -- basic protocol -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.item())

    def __float__(self) -> float:
        return self.item()

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- graph construction --------------------------------------------
    @staticmethod
    def _make(data: np.ndarray, parents: tuple, vjp: Callable, op: str) -> "Tensor":
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        if track:
            return Tensor(data, True, parents, vjp, op)
        return Tensor(data, op=op)

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(
            a.data + b.data, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(
            a.data - b.data, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(
            a.data * b.data, (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out = a.data / b.data
        return Tensor._make(
            out, (a, b),
            lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
            "div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, k: float):
        if isinstance(k, Tensor):
            raise TypeError("only scalar exponents are supported")
        a = self
        return Tensor._make(a.data ** k, (a,), lambda g: (g * k * a.data ** (k - 1),), "pow")

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")

    def __getitem__(self, idx):
        a = self

        def vjp(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(a.data[idx], (a,), vjp, "getitem")

    # -- reductions -----------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        a = self
        return Tensor._make(a.data.reshape(*shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")

    # -- elementwise ----------------------------------------------------
    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        a = self
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(a.data)  # non-finite results raise NonFiniteError below
        return Tensor._make(out, (a,), lambda g: (g / a.data,), "log")

    def relu(self):
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), lambda g: (g * mask,), "relu")

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def clamp_min(self, lo: float):
        """max(x, lo); gradient passes only where x > lo."""
        mask = self.data > lo
        return Tensor._make(np.where(mask, self.data, lo), (self,), lambda g: (g * mask,), "clamp_min")

    def square(self):
        a = self
        return Tensor._make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")

    # -- autodiff -------------------------------------------------------
    def backward(self) -> None:
        """Populate ``.grad`` on every grad-tracking leaf reachable from this scalar."""
        leaves = [t for t in _topo(self) if not t._parents and t.requires_grad]
        grads = gradients(self, leaves)
        for t, g in zip(leaves, grads):
            t.grad = g if t.grad is None else t.grad + g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
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
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def gradients(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """d loss / d t for each t in ``wrt``; tensors not in the graph get zeros."""
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("graph not recorded: loss does not depend on any grad-tracking tensor")
    acc: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo(loss)):
        g = acc.get(id(node))
        if g is None or node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            acc[key] = pg if key not in acc else acc[key] + pg
    return [acc.get(id(t), np.zeros_like(t.data)) for t in wrt]


def finite_diff_check(fn: Callable[[np.ndarray], float], point, h: float = 1e-6,
                      grad: np.ndarray | None = None, floor: float = 1e-5) -> float:
    """Max per-coordinate relative error between reverse-mode and central differences.

    ``fn`` maps an ndarray to a scalar Tensor (or float).  If ``grad`` is not
    given, it is obtained by differentiating ``fn`` at ``point``.  The
    denominator is ``max(|analytic|, |numeric|, floor * scale)`` with
    ``scale = max(1, |fn(point)|, max|analytic|)``.  Central differences carry
    roundoff of order ``eps_mach * |f| / h``, so near-zero coordinates are
    compared against that noise level rather than against themselves.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x0 = np.array(point, dtype=np.float64)
    if grad is None:
        xt = Tensor(x0, requires_grad=True)
        out = fn(xt)
        if isinstance(out, Tensor) and out.requires_grad:
            (grad,) = gradients(out, [xt])
        else:
            grad = np.zeros_like(x0)

    def f(x):
        with no_grad():
            return float(fn(Tensor(x)))

    f0 = f(x0)
    num = np.zeros_like(x0)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[i] += h
        xm[i] -= h
        num.reshape(-1)[i] = (f(xp.reshape(x0.shape)) - f(xm.reshape(x0.shape))) / (2 * h)
    scale = max(1.0, abs(f0), float(np.max(np.abs(grad))) if x0.size else 0.0)
    denom = np.maximum(np.maximum(np.abs(grad), np.abs(num)), floor * scale)
    return float(np.max(np.abs(grad - num) / denom)) if x0.size else 0.0

