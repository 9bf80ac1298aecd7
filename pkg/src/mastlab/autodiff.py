"""Dense-array math with reverse-mode automatic differentiation.

The tape is implicit: every differentiable operation links its output node to
its input nodes, and ``backward`` walks that record once in reverse
topological order, then clears it.  Graphs are rebuilt from scratch on every
forward pass, which keeps a varying loss structure (the number of active
subspace terms changes across the curriculum) trivially correct.

Broadcasting is deliberately restricted to scalar-vs-tensor and equal shapes;
row expansion and column extraction are explicit primitives with their own
gradient rules.  Two float widths are supported globally: 32-bit for training
throughput and 64-bit for finite-difference headroom in gradient checks.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from .errors import ContractError, DimensionError, DomainError

_DTYPE = np.float32
_GRAD_ENABLED = True
_DEBUG_VALIDATION = False


def set_float_width(bits: int) -> None:
    """Select the global float width (32 or 64) for newly created tensors."""
    global _DTYPE
    if bits == 32:
        _DTYPE = np.float32
    elif bits == 64:
        _DTYPE = np.float64
    else:
        raise ContractError(f"float width must be 32 or 64, got {bits}")


def get_float_width() -> int:
    return 64 if _DTYPE == np.float64 else 32


def default_dtype():
    return _DTYPE


@contextlib.contextmanager
def float_width(bits: int):
    prev = get_float_width()
    set_float_width(bits)
    try:
        yield
    finally:
        set_float_width(prev)


def set_debug_validation(enabled: bool) -> None:
    """Toggle strict mode: finiteness checks on creation plus domain checks."""
    global _DEBUG_VALIDATION
    _DEBUG_VALIDATION = bool(enabled)


def debug_validation() -> bool:
    return _DEBUG_VALIDATION


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation-mode forwards)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense float array with an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else _DTYPE)
        if _DEBUG_VALIDATION and not np.all(np.isfinite(arr)):
            raise DomainError("tensor holds non-finite values")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._prev: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def _accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are wrapped as constant tensors.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=_DTYPE))


def _make(data, parents, backward) -> Tensor:
    if _DEBUG_VALIDATION and not np.all(np.isfinite(data)):
        raise DomainError("operation produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out._prev = tuple(parents) if needs else ()
    out._backward = backward if needs else None
    return out


def _check_binary_shapes(a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise DimensionError(
        f"shapes {a.shape} and {b.shape} are neither equal nor scalar-broadcastable"
    )


def _reduce_to(g, shape) -> np.ndarray:
    # Collapse an upstream gradient onto a scalar operand.
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_binary_shapes(a, b)
    out_data = a.data + b.data

    def backward(out):
        g = out.grad
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_binary_shapes(a, b)
    out_data = a.data - b.data

    def backward(out):
        g = out.grad
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_binary_shapes(a, b)
    out_data = a.data * b.data

    def backward(out):
        g = out.grad
        if a.requires_grad:
            a._accumulate(_reduce_to(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_binary_shapes(a, b)
    if _DEBUG_VALIDATION and np.any(b.data == 0):
        raise DomainError("division by zero")
    out_data = a.data / b.data

    def backward(out):
        g = out.grad
        inv = 1.0 / b.data
        if a.requires_grad:
            a._accumulate(_reduce_to(g * inv, a.shape))
        if b.requires_grad:
            b._accumulate(_reduce_to(-g * a.data * inv * inv, b.shape))

    return _make(out_data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(out):
        if a.requires_grad:
            a._accumulate(-out.grad)

    return _make(-a.data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * (a.data > 0))

    return _make(out_data, (a,), backward)


def maximum(a: Tensor, floor: float) -> Tensor:
    """Elementwise max with a python scalar; subgradient 0 at the hinge."""
    out_data = np.maximum(a.data, floor)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * (a.data > floor))

    return _make(out_data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    if _DEBUG_VALIDATION and np.any(a.data < 0):
        raise DomainError("sqrt of negative value")
    out_data = np.sqrt(a.data)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * 0.5 / out.data)

    return _make(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    if _DEBUG_VALIDATION and np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    out_data = np.log(a.data)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad / a.data)

    return _make(out_data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * out.data)

    return _make(out_data, (a,), backward)


def square(a: Tensor) -> Tensor:
    out_data = a.data * a.data

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad * 2.0 * a.data)

    return _make(out_data, (a,), backward)


def power(a: Tensor, p) -> Tensor:
    """a**p for strictly positive a; p may be a scalar tensor (learnable)."""
    p_t = p if isinstance(p, Tensor) else None
    p_val = float(p_t.data) if p_t is not None else float(p)
    if p_t is not None and p_t.size != 1:
        raise ContractError("exponent tensor must be scalar")
    if _DEBUG_VALIDATION and np.any(a.data <= 0):
        raise DomainError("power requires a strictly positive base")
    out_data = a.data**p_val
    parents = (a, p_t) if p_t is not None else (a,)

    def backward(out):
        g = out.grad
        if a.requires_grad:
            a._accumulate(g * p_val * a.data ** (p_val - 1.0))
        if p_t is not None and p_t.requires_grad:
            p_t._accumulate(np.sum(g * out.data * np.log(a.data)).reshape(p_t.shape))

    return _make(out_data, parents, backward)


# ---------------------------------------------------------------------------
# structural primitives


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad.reshape(a.shape))

    return _make(out_data, (a,), backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    out_data = a.data.T.copy()

    def backward(out):
        if a.requires_grad:
            a._accumulate(out.grad.T)

    return _make(out_data, (a,), backward)


def expand_rows(v: Tensor, n: int) -> Tensor:
    """Tile a (d,) vector into an (n, d) matrix; gradient sums over rows."""
    if v.ndim != 1:
        raise DimensionError(f"expand_rows expects a vector, got shape {v.shape}")
    out_data = np.broadcast_to(v.data, (n, v.shape[0])).copy()

    def backward(out):
        if v.requires_grad:
            v._accumulate(out.grad.sum(axis=0))

    return _make(out_data, (v,), backward)


def column(m: Tensor, k: int) -> Tensor:
    """Extract column k of a matrix; gradient scatters back into that column."""
    if m.ndim != 2:
        raise DimensionError(f"column expects a matrix, got shape {m.shape}")
    if not 0 <= k < m.shape[1]:
        raise ContractError(f"column index {k} out of range for shape {m.shape}")
    out_data = m.data[:, k].copy()

    def backward(out):
        if m.requires_grad:
            g = np.zeros_like(m.data)
            g[:, k] = out.grad
            m._accumulate(g)

    return _make(out_data, (m,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul expects matrices")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(out):
        g = out.grad
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), backward)


# ---------------------------------------------------------------------------
# reductions


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def _check_nonempty(a: Tensor, axes) -> int:
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    if count == 0:
        raise DomainError("reduction over an empty axis")
    return count


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    axes = _norm_axes(axis, a.ndim)
    _check_nonempty(a, axes)
    out_data = a.data.sum(axis=axes)

    def backward(out):
        if a.requires_grad:
            g = np.expand_dims(out.grad, axes) if out.grad.ndim else out.grad
            a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _make(out_data, (a,), backward)


def mean(a: Tensor, axis=None) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = _check_nonempty(a, axes)
    out_data = a.data.mean(axis=axes)

    def backward(out):
        if a.requires_grad:
            g = np.expand_dims(out.grad, axes) if out.grad.ndim else out.grad
            a._accumulate(np.broadcast_to(g, a.shape) / count)

    return _make(out_data, (a,), backward)


def var(a: Tensor, axis=None) -> Tensor:
    """Population variance (denominator n) along the given axes."""
    axes = _norm_axes(axis, a.ndim)
    count = _check_nonempty(a, axes)
    mu = a.data.mean(axis=axes, keepdims=True)
    centered = a.data - mu
    out_data = (centered * centered).mean(axis=axes)

    def backward(out):
        if a.requires_grad:
            g = np.expand_dims(out.grad, axes) if out.grad.ndim else out.grad
            a._accumulate(np.broadcast_to(g, a.shape) * 2.0 * centered / count)

    return _make(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# convolution


def conv2d(inp: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Valid-padding cross-correlation over (n, c, h, w) with square stride."""
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    if inp.ndim != 4 or kernel.ndim != 4:
        raise DimensionError("conv2d expects 4-d input and kernel")
    n, c, h, w = inp.shape
    c_out, c_k, kh, kw = kernel.shape
    if c_k != c:
        raise DimensionError(f"kernel channels {c_k} do not match input channels {c}")
    if kh > h or kw > w:
        raise DimensionError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1

    wins = np.lib.stride_tricks.sliding_window_view(inp.data, (kh, kw), axis=(2, 3))
    wins = wins[:, :, ::stride, ::stride]  # (n, c, oh, ow, kh, kw)
    cols = wins.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    w_mat = kernel.data.reshape(c_out, c * kh * kw)
    out_mat = cols @ w_mat.T
    if bias is not None:
        if bias.shape != (c_out,):
            raise DimensionError(f"bias shape {bias.shape} does not match {c_out} filters")
        out_mat = out_mat + bias.data
    out_data = out_mat.reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2)

    parents = (inp, kernel) if bias is None else (inp, kernel, bias)

    def backward(out):
        g_mat = out.grad.transpose(0, 2, 3, 1).reshape(n * oh * ow, c_out)
        if kernel.requires_grad:
            kernel._accumulate((g_mat.T @ cols).reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g_mat.sum(axis=0))
        if inp.requires_grad:
            dcols = (g_mat @ w_mat).reshape(n, oh, ow, c, kh, kw)
            dinp = np.zeros_like(inp.data)
            for i in range(kh):
                for j in range(kw):
                    dinp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            inp._accumulate(dinp)

    return _make(out_data, parents, backward)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Populate gradients of every requires_grad leaf, then clear the tape."""
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node)
    for node in topo:
        node._prev = ()
        node._backward = None


# small composite helpers used throughout the package


def dot_rows(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise dot product of two (n, d) matrices, returning (n,)."""
    return sum(mul(a, b), axis=1)


def softmax_cross_entropy(logits: Tensor, onehot: np.ndarray) -> Tensor:
    """Mean cross-entropy of row softmax against one-hot labels."""
    shift = Tensor(logits.data.max(axis=1, keepdims=True) * np.ones_like(logits.data))
    z = sub(logits, shift)
    lse = log(sum(exp(z), axis=1))
    picked = sum(mul(z, Tensor(onehot)), axis=1)
    return mean(sub(lse, picked))
