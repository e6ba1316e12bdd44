"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ndarray and records the operations applied
to it; ``backward()`` on a scalar walks the recorded graph once in
reverse topological order.  The op set is exactly what the models in
this package need: broadcast arithmetic, matmul, reductions, a few
pointwise nonlinearities, reshaping, im2col convolution, pooling,
nearest-neighbour upsampling, and concatenation.

Gradients only flow into tensors created with ``requires_grad=True``
and into results derived from them; everything else is treated as a
constant and excluded from the graph.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return (f"Tensor(shape={self.shape}, "
                f"requires_grad={self.requires_grad})")

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar, shape is {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, cut loose from the graph."""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from a scalar; accumulates into ``.grad``.

        The graph is released as it is consumed, so a second call only
        reaches nodes the first sweep never visited.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar value")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor with no graph")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is None:
                continue
            node._backward()
            # each closure holds its own output, so a finished graph is
            # all reference cycles; dropping the links here frees saved
            # activations by refcount instead of waiting on the cycle
            # collector, which ignores how large the arrays are
            node._backward = None
            node._parents = ()

    # ---- graph construction helper -------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple["Tensor", ...],
                 backward_fn) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
        return out

    # ---- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out_data = self.data + other.data

        def backward():
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(out.grad, other.shape))

        out = Tensor._from_op(out_data, (self, other), backward)
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out_data = self.data * other.data

        def backward():
            if self.requires_grad:
                self._accumulate(
                    _unbroadcast(out.grad * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(out.grad * self.data, other.shape))

        out = Tensor._from_op(out_data, (self, other), backward)
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self * other ** -1.0

    def __rtruediv__(self, other):
        return Tensor(other) * self ** -1.0

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        c = float(exponent)
        out_data = self.data ** c

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad * c * self.data ** (c - 1.0))

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out_data = self.data @ other.data

        def backward():
            if self.requires_grad:
                g = out.grad @ np.swapaxes(other.data, -1, -2)
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                g = np.swapaxes(self.data, -1, -2) @ out.grad
                other._accumulate(_unbroadcast(g, other.shape))

        out = Tensor._from_op(out_data, (self, other), backward)
        return out

    # ---- reductions and shape ops ----------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward():
            if not self.requires_grad:
                return
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape).copy())

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad.reshape(self.shape))

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        out_data = self.data.transpose(axes)

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad.transpose(inverse))

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    # ---- pointwise nonlinearities -----------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad * out_data)

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    def log(self):
        out_data = np.log(self.data)

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad / self.data)

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad * 0.5 / out_data)

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    def sigmoid(self):
        x = self.data
        out_data = np.empty_like(x)
        pos = x >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out_data[~pos] = ex / (1.0 + ex)

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad * out_data * (1.0 - out_data))

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad * (1.0 - out_data ** 2))

        out = Tensor._from_op(out_data, (self,), backward)
        return out

    def silu(self):
        """x * sigmoid(x), the activation used throughout the models."""
        return self * self.sigmoid()

    def abs(self):
        out_data = np.abs(self.data)

        def backward():
            if self.requires_grad:
                self._accumulate(out.grad * np.sign(self.data))

        out = Tensor._from_op(out_data, (self,), backward)
        return out


# ---- structured ops ---------------------------------------------------


def _im2col_indices(channels, height, width, kernel, stride, padding):
    h_out = (height + 2 * padding - kernel) // stride + 1
    w_out = (width + 2 * padding - kernel) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ValueError("kernel does not fit the padded input")
    i0 = np.tile(np.repeat(np.arange(kernel), kernel), channels)
    j0 = np.tile(np.arange(kernel), kernel * channels)
    i1 = stride * np.repeat(np.arange(h_out), w_out)
    j1 = stride * np.tile(np.arange(w_out), h_out)
    rows = i0[:, None] + i1[None, :]
    cols = j0[:, None] + j1[None, :]
    chan = np.repeat(np.arange(channels), kernel * kernel)[:, None]
    return chan, rows, cols, h_out, w_out


def conv2d(x: Tensor, weight: Tensor, stride: int = 1,
           padding: int = 1) -> Tensor:
    """NCHW cross-correlation with an (F, C, K, K) kernel, no bias."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects NCHW input and FCKK weight")
    n, c, h, w = x.shape
    f, c_w, k, k2 = weight.shape
    if c != c_w or k != k2:
        raise ValueError(
            f"weight {weight.shape} incompatible with input {x.shape}")
    chan, rows, cols_idx, h_out, w_out = _im2col_indices(
        c, h, w, k, stride, padding)
    x_pad = np.pad(x.data,
                   ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = x_pad[:, chan, rows, cols_idx]  # (n, c*k*k, h_out*w_out)
    w_flat = weight.data.reshape(f, -1)
    out_data = (w_flat @ cols).reshape(n, f, h_out, w_out)

    def backward():
        g = out.grad.reshape(n, f, -1)
        if weight.requires_grad:
            dw = np.einsum("nfl,ncl->fc", g, cols).reshape(weight.shape)
            weight._accumulate(dw)
        if x.requires_grad:
            dcols = np.einsum("fc,nfl->ncl", w_flat, g)
            dx_pad = np.zeros_like(x_pad)
            np.add.at(dx_pad,
                      (np.arange(n)[:, None, None], chan, rows, cols_idx),
                      dcols)
            if padding:
                dx_pad = dx_pad[:, :, padding:-padding, padding:-padding]
            x._accumulate(dx_pad)

    out = Tensor._from_op(out_data, (x, weight), backward)
    return out


def avg_pool2d(x: Tensor, kernel: int) -> Tensor:
    """Non-overlapping mean pooling; spatial dims must divide by kernel."""
    n, c, h, w = x.shape
    if h % kernel or w % kernel:
        raise ValueError(f"input {h}x{w} not divisible by kernel {kernel}")
    hk, wk = h // kernel, w // kernel
    out_data = x.data.reshape(n, c, hk, kernel, wk, kernel).mean(axis=(3, 5))

    def backward():
        if x.requires_grad:
            g = out.grad / (kernel * kernel)
            g = np.repeat(np.repeat(g, kernel, axis=2), kernel, axis=3)
            x._accumulate(g)

    out = Tensor._from_op(out_data, (x,), backward)
    return out


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Repeat each pixel ``factor`` times along both spatial axes."""
    n, c, h, w = x.shape
    out_data = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def backward():
        if x.requires_grad:
            g = out.grad.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5))
            x._accumulate(g)

    out = Tensor._from_op(out_data, (x,), backward)
    return out


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate along ``axis``; gradient splits back to the inputs."""
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * out_data.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(out.grad[tuple(index)])

    out = Tensor._from_op(out_data, tuple(tensors), backward)
    return out
