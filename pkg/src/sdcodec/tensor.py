"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps an ndarray plus, for op results, its parent tensors and a
vector-Jacobian closure. The graph is the implicit DAG of parent links;
`backward` on a scalar walks it in reverse topological order exactly once
and then marks it spent, so a second backward without a fresh forward
raises StaleGraph. Leaves created with requires_grad=True accumulate into
`.grad`.

Ops propagate the input dtype (float32 for training, float64 for the
finite-difference oracles in the tests). Forward passes are deterministic:
identical inputs and parameters give bit-identical outputs.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NotAScalar, ShapeMismatch, SignalTooShort, StaleGraph

Array = np.ndarray


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[Array] = None
        self._parents: tuple = ()
        self._vjp: Optional[Callable] = None
        self._spent = False

    # -- introspection --------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flags = "param" if self.requires_grad else ("node" if self._parents else "const")
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, {flags})"

    # -- graph ----------------------------------------------------------

    @property
    def needs_grad(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # -- operators --------------------------------------------------------

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

    def __neg__(self):
        return neg(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Wrap operands; bare python scalars adopt the partner's dtype."""
    if isinstance(a, Tensor) and isinstance(b, (int, float)):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor) and isinstance(a, (int, float)):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return _as_tensor(a), _as_tensor(b)


_grad_enabled = True


class no_grad:
    """Context manager suppressing graph recording (pure inference)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _make(data: Array, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Record an op result; collapses to a constant when no parent needs grad."""
    if not _grad_enabled or not any(p.needs_grad for p in parents):
        return Tensor(data)
    out = Tensor(data)
    out._parents = tuple(parents)
    out._vjp = vjp
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad for every requires_grad leaf reachable from a scalar."""
    if loss.data.size != 1:
        raise NotAScalar(f"backward needs a scalar, got shape {loss.data.shape}")
    order = _topo_order(loss)
    for node in order:
        if node._parents and node._spent:
            raise StaleGraph("graph already consumed by a previous backward; re-run the forward pass")
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._parents:
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.needs_grad:
                    continue
                if parent._parents:
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
                elif parent.requires_grad:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
        elif node.requires_grad and node is loss:
            node.grad = g.copy() if node.grad is None else node.grad + g
    for node in order:
        if node._parents:
            node._spent = True


def _unbroadcast(g: Array, shape: tuple) -> Array:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise arithmetic --------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def abs_(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    inv = 1.0 / a.data
    return _make(np.log(a.data), (a,), lambda g: (g * inv,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def leaky_relu(a, slope: float = 0.1) -> Tensor:
    a = _as_tensor(a)
    scale = np.where(a.data >= 0, 1.0, slope).astype(a.data.dtype)
    return _make(a.data * scale, (a,), lambda g: (g * scale,))


def snake(x, alpha) -> Tensor:
    """Periodic-friendly activation x + sin^2(alpha*x)/alpha, per-channel alpha.

    x: [batch, channels, time]; alpha: [channels], must stay positive.
    """
    x, alpha = _as_tensor(x), _as_tensor(alpha)
    a3 = alpha.data.reshape(1, -1, 1)
    if x.data.ndim != 3 or a3.shape[1] not in (1, x.data.shape[1]):
        raise ShapeMismatch(f"snake: x {x.data.shape} vs alpha {alpha.data.shape}")
    s = np.sin(a3 * x.data)
    c = np.cos(a3 * x.data)
    out = x.data + (s * s) / a3

    def vjp(g):
        gx = g * (1.0 + 2.0 * s * c)
        ga = g * (2.0 * x.data * s * c / a3 - (s * s) / (a3 * a3))
        return gx, ga.sum(axis=(0, 2)).reshape(alpha.data.shape)

    return _make(out, (x, alpha), vjp)


# -- reductions / shaping ------------------------------------------------------

def sum_(a) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape

    def vjp(g):
        return (np.broadcast_to(g, shape).astype(a.data.dtype, copy=True),)

    return _make(np.asarray(a.data.sum()), (a,), vjp)


def mean_(a) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape
    n = a.data.size

    def vjp(g):
        return (np.broadcast_to(g / n, shape).astype(a.data.dtype, copy=True),)

    return _make(np.asarray(a.data.mean()), (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def swap_last2(a) -> Tensor:
    a = _as_tensor(a)
    return _make(np.ascontiguousarray(a.data.swapaxes(-1, -2)), (a,),
                 lambda g: (g.swapaxes(-1, -2),))


def slice_last(a, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)
    length = a.data.shape[-1]

    def vjp(g):
        pad = [(0, 0)] * (g.ndim - 1) + [(start, length - stop)]
        return (np.pad(g, pad),)

    return _make(a.data[..., start:stop].copy(), (a,), vjp)


def pad_last(a, left: int, right: int) -> Tensor:
    a = _as_tensor(a)
    pad = [(0, 0)] * (a.data.ndim - 1) + [(left, right)]
    length = a.data.shape[-1]

    def vjp(g):
        return (g[..., left : left + length],)

    return _make(np.pad(a.data, pad), (a,), vjp)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), vjp)


def gather_rows(table, idx: Array) -> Tensor:
    """table[idx] for a [K, D] table and integer index vector."""
    table = _as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    k = table.data.shape[0]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise ShapeMismatch(f"gather_rows: index out of range for table of {k} rows")
    return _make(table.data[idx], (table,), vjp)


def straight_through(x, values: Array) -> Tensor:
    """Forward takes `values` verbatim; backward passes gradient to x unchanged."""
    x = _as_tensor(x)
    data = np.asarray(values, dtype=x.data.dtype)
    if data.shape != x.data.shape:
        raise ShapeMismatch(f"straight_through: {data.shape} vs {x.data.shape}")
    return _make(data.copy(), (x,), lambda g: (g,))


# -- signal framing and spectra ------------------------------------------------

def frame_signal(a, size: int, hop: int) -> Tensor:
    """[batch, time] -> [batch*frames, size] with hop-spaced frame starts."""
    a = _as_tensor(a)
    batch, length = a.data.shape
    if length < size:
        raise SignalTooShort(f"signal of {length} samples is shorter than one {size}-sample frame")
    nf = 1 + (length - size) // hop
    windows = sliding_window_view(a.data, size, axis=1)[:, ::hop, :]
    out = windows.reshape(batch * nf, size).copy()

    def vjp(g):
        g3 = g.reshape(batch, nf, size)
        gx = np.zeros_like(a.data)
        if size % hop == 0:
            # overlapping windows split into size//hop disjoint interleaves
            overlap = size // hop
            for j in range(overlap):
                sel = g3[:, j::overlap, :]
                nj = sel.shape[1]
                if nj == 0:
                    continue
                region = gx[:, j * hop : j * hop + nj * size]
                region += sel.reshape(batch, nj * size)
        else:
            for f in range(nf):
                gx[:, f * hop : f * hop + size] += g3[:, f, :]
        return (gx,)

    return _make(out, (a,), vjp)


def rfft_mag(a) -> Tensor:
    """Magnitude of the real FFT along the last axis; zero bins get zero grad."""
    a = _as_tensor(a)
    n = a.data.shape[-1]
    spec = np.fft.rfft(a.data, axis=-1)
    mag = np.abs(spec)

    def vjp(g):
        safe = np.maximum(mag, np.finfo(mag.dtype).tiny)
        phase_scaled = g * spec / safe
        full = np.zeros(a.data.shape[:-1] + (n,), dtype=complex)
        full[..., : mag.shape[-1]] = phase_scaled
        gx = np.real(np.fft.ifft(full, axis=-1)) * n
        return (gx.astype(a.data.dtype),)

    return _make(mag.astype(a.data.dtype), (a,), vjp)


# -- convolution ------------------------------------------------------------

def _conv_windows(x_pad: Array, k: int, stride: int) -> Array:
    return sliding_window_view(x_pad, k, axis=2)[:, :, ::stride, :]


def conv1d(x, w, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of [B, Cin, T] with [Cout, Cin, K] -> [B, Cout, Tout]."""
    x, w = _as_tensor(x), _as_tensor(w)
    b = _as_tensor(bias) if bias is not None else None
    bsz, cin, t = x.data.shape
    cout, cin_w, k = w.data.shape
    if cin != cin_w:
        raise ShapeMismatch(f"conv1d: input has {cin} channels, weight expects {cin_w}")
    t_out = (t + 2 * padding - k) // stride + 1
    if t + 2 * padding < k or t_out < 1:
        raise ShapeMismatch(f"conv1d: length {t} too short for kernel {k} at padding {padding}")
    x_pad = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    windows = _conv_windows(x_pad, k, stride)
    out = np.ascontiguousarray(
        np.tensordot(windows, w.data, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
    )
    if b is not None:
        out += b.data.reshape(1, cout, 1)

    def vjp(g):
        gw = np.tensordot(g, windows, axes=([0, 2], [0, 2]))
        g2 = np.tensordot(g, w.data, axes=([1], [0]))  # [B, Tout, Cin, K]
        gx_pad = np.zeros_like(x_pad)
        for kk in range(k):
            gx_pad[:, :, kk : kk + stride * t_out : stride] += g2[:, :, :, kk].transpose(0, 2, 1)
        gx = gx_pad[:, :, padding : padding + t] if padding else gx_pad
        grads = [gx, gw.astype(w.data.dtype)]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, vjp)


def conv_transpose1d(x, w, bias=None, stride: int = 1, padding: int = 0,
                     output_padding: int = 0) -> Tensor:
    """Adjoint-layout transposed convolution.

    x: [B, Cin, T]; w: [Cin, Cout, K] (first dim matches input channels, so
    the same weight can serve as the adjoint of a matching conv1d).
    Output length: (T-1)*stride - 2*padding + K + output_padding.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    b = _as_tensor(bias) if bias is not None else None
    bsz, cin, t = x.data.shape
    cin_w, cout, k = w.data.shape
    if cin != cin_w:
        raise ShapeMismatch(f"conv_transpose1d: input has {cin} channels, weight expects {cin_w}")
    if not 0 <= output_padding <= padding:
        raise ShapeMismatch(f"conv_transpose1d: need 0 <= output_padding <= padding, got {output_padding} vs {padding}")
    t_out = (t - 1) * stride - 2 * padding + k + output_padding
    if t_out < 1:
        raise ShapeMismatch("conv_transpose1d: empty output")

    tmp = np.tensordot(x.data, w.data, axes=([1], [0]))  # [B, T, Cout, K]
    full = np.zeros((bsz, cout, (t - 1) * stride + k), dtype=x.data.dtype)
    for kk in range(k):
        full[:, :, kk : kk + stride * t : stride] += tmp[:, :, :, kk].transpose(0, 2, 1)
    out = np.ascontiguousarray(full[:, :, padding : padding + t_out])
    if b is not None:
        out += b.data.reshape(1, cout, 1)

    def vjp(g):
        g_pad = np.pad(g, ((0, 0), (0, 0), (padding, padding - output_padding)))
        windows = _conv_windows(g_pad, k, stride)  # [B, Cout, T, K]
        gx = np.ascontiguousarray(
            np.tensordot(windows, w.data, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        )
        gw = np.tensordot(x.data, windows, axes=([0, 2], [0, 2]))
        grads = [gx, gw.astype(w.data.dtype)]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, vjp)


def avg_pool1d(a, k: int) -> Tensor:
    """Non-overlapping mean pooling along time; trailing remainder dropped."""
    a = _as_tensor(a)
    bsz, ch, t = a.data.shape
    t_out = t // k
    trimmed = a.data[:, :, : t_out * k]
    out = trimmed.reshape(bsz, ch, t_out, k).mean(axis=3)

    def vjp(g):
        gx = np.zeros_like(a.data)
        gx[:, :, : t_out * k] = np.repeat(g / k, k, axis=2)
        return (gx,)

    return _make(out, (a,), vjp)


def upsample_sinc(a, factor: int, taps: Array) -> Tensor:
    """Windowed-sinc upsampling of [batch, time] rows; linear, differentiable."""
    from .resample import upsample_adjoint_array, upsample_array

    a = _as_tensor(a)
    taps_c = taps.astype(a.data.dtype)
    out = np.stack([upsample_array(row, factor, taps_c) for row in a.data])

    def vjp(g):
        gx = np.stack([upsample_adjoint_array(row, factor, taps_c) for row in g])
        return (gx,)

    return _make(out, (a,), vjp)
