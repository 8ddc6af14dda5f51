"""Minimal reverse-mode autodiff over dense float64 tensors.

Provides exactly the operator set the forecasting model needs: affine maps,
dilated causal convolution, elementwise/reduction primitives, batch
normalization, and the graph gather/scatter ops used for neighborhood
aggregation and pooling.

Every operation takes an optional Tape.  With a tape, the op appends a
backward rule; with ``tape=None`` it is forward-only (evaluation mode).
``backward(loss, tape)`` replays the rules in reverse and accumulates
gradients into ``Tensor.grad``.  A tape is single-use.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError

DTYPE = np.float64


class Tensor:
    """A dense float64 array plus an optional accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data, check_finite: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: Optional[np.ndarray] = None
        if check_finite and not np.all(np.isfinite(self.data)):
            raise NumericError("tensor contains non-finite values")

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g: np.ndarray):
        # A stored grad may alias an upstream buffer, so the second
        # contribution reallocates instead of adding in place.  Nothing in
        # the engine mutates .grad after it is set, which makes the aliasing
        # safe and avoids one large copy per tensor.
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Ordered record of primitive ops; replayed in reverse by backward()."""

    __slots__ = ("_records", "_used")

    def __init__(self):
        # each record: (output, inputs, vjp) where vjp(g_out) -> grads per input
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._used = False

    def record(self, out: Tensor, inputs: Sequence[Tensor], vjp: Callable):
        self._records.append((out, tuple(inputs), vjp))

    def __len__(self):
        return len(self._records)


def backward(loss: Tensor, tape: Tape):
    """Populate grads of every tensor the scalar loss depends on."""
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape._used:
        raise RuntimeError("tape already consumed; tapes are single-use")
    tape._used = True
    loss.grad = np.ones_like(loss.data)
    for out, inputs, vjp in reversed(tape._records):
        if out.grad is None:
            continue
        grads = vjp(out.grad)
        for inp, g in zip(inputs, grads):
            if g is not None:
                inp.accumulate(g)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape` to invert numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _op(tape, out, inputs, vjp):
    if tape is not None:
        tape.record(out, inputs, vjp)
    return out


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _op(tape, out, (a, b), vjp)


def sub(tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _op(tape, out, (a, b), vjp)


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _op(tape, out, (a, b), vjp)


def add_const(tape, x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data + c)
    return _op(tape, out, (x,), lambda g: (g,))


def scale_const(tape, x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c)
    return _op(tape, out, (x,), lambda g: (g * c,))


def relu(tape, x: Tensor) -> Tensor:
    # subgradient at 0 is 0
    out = Tensor(np.maximum(x.data, 0.0))
    if tape is None:
        return out
    mask = x.data > 0
    return _op(tape, out, (x,), lambda g: (g * mask,))


def relu_add(tape, a: Tensor, b: Tensor) -> Tensor:
    """ReLU(a + b) for same-shape inputs (the residual join), fused."""
    out = Tensor(np.maximum(a.data + b.data, 0.0))
    if tape is None:
        return out
    mask = out.data > 0

    def vjp(g):
        gm = g * mask
        return gm, gm

    return _op(tape, out, (a, b), vjp)


def abs_val(tape, x: Tensor) -> Tensor:
    # subgradient at 0 is 0, matching relu's convention
    out = Tensor(np.abs(x.data))
    return _op(tape, out, (x,), lambda g: (g * np.sign(x.data),))


def sqrt(tape, x: Tensor) -> Tensor:
    root = np.sqrt(x.data)
    out = Tensor(root)

    def vjp(g):
        return (g / (2.0 * np.maximum(root, np.finfo(DTYPE).tiny)),)

    return _op(tape, out, (x,), vjp)


# ---------------------------------------------------------------------------
# shape


def reshape(tape, x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    return _op(tape, out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(tape, x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)))
    return _op(tape, out, (x,), lambda g: (g.transpose(inv),))


def concat(tape, xs: Sequence[Tensor], axis: int) -> Tensor:
    for x in xs:
        if axis >= x.data.ndim or axis < -x.data.ndim:
            raise DimensionError(f"concat axis {axis} out of range for shape {x.shape}")
    out = Tensor(np.concatenate([x.data for x in xs], axis=axis))
    sizes = [x.data.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _op(tape, out, tuple(xs), vjp)


# ---------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim):
    if axis < -ndim or axis >= ndim:
        raise DimensionError(f"axis {axis} out of range for ndim {ndim}")
    return axis % ndim


def sum_over(tape, x: Tensor, axis) -> Tensor:
    """Sum over one axis or a tuple of axes."""
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(sorted(_norm_axis(a, x.data.ndim) for a in axes))
    out = Tensor(x.data.sum(axis=axes))

    def vjp(g):
        for a in axes:
            g = np.expand_dims(g, a)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _op(tape, out, (x,), vjp)


def mean_over(tape, x: Tensor, axis: int) -> Tensor:
    axis = _norm_axis(axis, x.data.ndim)
    n = x.data.shape[axis]
    out = Tensor(x.data.mean(axis=axis))

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy() / n,)

    return _op(tape, out, (x,), vjp)


def max_over(tape, x: Tensor, axis: int) -> Tensor:
    axis = _norm_axis(axis, x.data.ndim)
    out = Tensor(x.data.max(axis=axis))
    # ties route the full gradient to the first maximal entry (deterministic)
    argmax = np.expand_dims(x.data.argmax(axis=axis), axis)

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, argmax, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _op(tape, out, (x,), vjp)


def sum_all(tape, x: Tensor) -> Tensor:
    out = Tensor(x.data.sum())
    return _op(tape, out, (x,), lambda g: (np.full_like(x.data, float(g)),))


def mean_all(tape, x: Tensor) -> Tensor:
    out = Tensor(x.data.mean())
    n = x.data.size
    return _op(tape, out, (x,), lambda g: (np.full_like(x.data, float(g) / n),))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(tape, a: Tensor, b: Tensor) -> Tensor:
    """a @ b with b 2-D; a may carry leading batch dims."""
    if a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def vjp(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.data.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gb = a2.T @ g2
        return ga, gb

    return _op(tape, out, (a, b), vjp)


def linear(tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b, bias broadcast over leading dims."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise DimensionError(f"linear: {x.shape} incompatible with weight {w.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
    out = Tensor(x.data @ w.data + b.data)

    def vjp(g):
        gx = g @ w.data.T
        x2 = x.data.reshape(-1, x.data.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gw = x2.T @ g2
        gb = g2.sum(axis=0)
        return gx, gw, gb

    return _op(tape, out, (x, w, b), vjp)


def dilated_causal_conv1d(tape, x: Tensor, f: Tensor, dilation: int) -> Tensor:
    """Causal 1-D convolution over [N, T, Cin] with left zero padding.

    Output index t depends only on inputs {t, t-dilation, ..., t-(K-1)*dilation}.
    """
    if x.data.ndim != 3 or f.data.ndim != 3:
        raise DimensionError("conv expects x[N,T,Cin] and f[K,Cin,Cout]")
    if x.data.shape[2] != f.data.shape[1]:
        raise DimensionError(f"conv channels differ: x {x.shape}, f {f.shape}")
    if dilation < 1:
        raise DimensionError(f"dilation must be >= 1, got {dilation}")
    k = f.data.shape[0]
    t = x.data.shape[1]
    if (k - 1) * dilation >= t:
        import warnings

        warnings.warn(
            f"receptive field (K-1)*dilation={(k - 1) * dilation} >= window T={t}",
            stacklevel=2,
        )
    xc = np.ascontiguousarray(x.data)
    fc = np.ascontiguousarray(f.data)
    if k == 1:
        # pointwise channel mix: a plain matmul, no padding buffers
        out = Tensor(xc @ fc[0])

        def vjp(g):
            gx = g @ fc[0].T
            x2 = xc.reshape(-1, xc.shape[2])
            gf = (x2.T @ g.reshape(-1, g.shape[2]))[None]
            return gx, gf

    else:
        out = Tensor(kernels.conv1d_causal_fwd(xc, fc, dilation))

        def vjp(g):
            return kernels.conv1d_causal_bwd(xc, fc, dilation,
                                             np.ascontiguousarray(g))

    return _op(tape, out, (x, f), vjp)


# ---------------------------------------------------------------------------
# graph ops


def neighbor_sum(tape, h: Tensor, src: np.ndarray, dst: np.ndarray) -> Tensor:
    """out[i] = sum of h[u] over directed edges (u -> i); rows are nodes."""
    n = h.data.shape[0]
    flat = np.ascontiguousarray(h.data.reshape(n, -1))
    src = np.ascontiguousarray(src, dtype=np.int64)
    dst = np.ascontiguousarray(dst, dtype=np.int64)
    out = Tensor(kernels.edge_scatter_add(flat, src, dst, n).reshape(h.shape))

    def vjp(g):
        g2 = np.ascontiguousarray(g.reshape(n, -1))
        # reverse every edge: gradient flows dst -> src
        return (kernels.edge_scatter_add(g2, dst, src, n).reshape(h.shape),)

    return _op(tape, out, (h,), vjp)


def gin_aggregate(tape, h: Tensor, src: np.ndarray, dst: np.ndarray,
                  eps: Tensor) -> Tensor:
    """(1 + eps) * h[i] + sum of h[u] over directed edges (u -> i), fused.

    Equivalent to add(mul(h, 1+eps), neighbor_sum(h, src, dst)) but with one
    scatter pass and no intermediate tensors; eps is a learned scalar."""
    n = h.data.shape[0]
    flat = np.ascontiguousarray(h.data.reshape(n, -1))
    src = np.ascontiguousarray(src, dtype=np.int64)
    dst = np.ascontiguousarray(dst, dtype=np.int64)
    one_plus = 1.0 + float(eps.data)
    out2 = flat * one_plus
    if len(src):
        kernels.edge_scatter_add(flat, src, dst, n, out=out2)
    out = Tensor(out2.reshape(h.shape))

    def vjp(g):
        g2 = np.ascontiguousarray(g.reshape(n, -1))
        gh = g2 * one_plus
        if len(src):
            kernels.edge_scatter_add(g2, dst, src, n, out=gh)
        geps = np.asarray(np.dot(g2.ravel(), flat.ravel()))
        return gh.reshape(h.shape), geps

    return _op(tape, out, (h, eps), vjp)


def gather_rows(tape, x: Tensor, idx: np.ndarray) -> Tensor:
    """out[m] = x[idx[m]]; backward scatters gradients back with accumulation."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    n = x.data.shape[0]
    out = Tensor(x.data[idx])

    def vjp(g):
        g2 = np.ascontiguousarray(g.reshape(len(idx), -1))
        return (kernels.scatter_add_rows(g2, idx, n).reshape(x.shape),)

    return _op(tape, out, (x,), vjp)


def segment_reduce(tape, x: Tensor, offsets: np.ndarray, mode: str) -> Tensor:
    """Reduce contiguous row segments of x; segment s covers rows
    [offsets[s], offsets[s+1]).  mode is one of sum|mean|max."""
    starts = offsets[:-1]
    counts = np.diff(offsets)
    if np.any(counts <= 0):
        raise DimensionError("segment_reduce requires non-empty segments")
    if mode == "sum" or mode == "mean":
        red = np.add.reduceat(x.data, starts, axis=0)
        if mode == "mean":
            red = red / counts.reshape((-1,) + (1,) * (x.data.ndim - 1))
        out = Tensor(red)

        def vjp(g):
            gx = np.repeat(g, counts, axis=0)
            if mode == "mean":
                gx = gx / np.repeat(counts, counts).reshape(
                    (-1,) + (1,) * (x.data.ndim - 1)
                )
            return (gx,)

    elif mode == "max":
        out = Tensor(np.maximum.reduceat(x.data, starts, axis=0))
        expanded = np.repeat(out.data, counts, axis=0)
        # first row attaining the max in each segment receives the gradient
        hit = x.data == expanded
        seg_of_row = np.repeat(np.arange(len(counts)), counts)
        first = np.zeros_like(hit, dtype=bool)
        flat_hit = hit.reshape(hit.shape[0], -1)
        flat_first = first.reshape(first.shape[0], -1)
        taken = np.zeros((len(counts), flat_hit.shape[1]), dtype=bool)
        for r in range(flat_hit.shape[0]):
            s = seg_of_row[r]
            new = flat_hit[r] & ~taken[s]
            flat_first[r] = new
            taken[s] |= new

        def vjp(g):
            gexp = np.repeat(g, counts, axis=0)
            return (np.where(first, gexp, 0.0),)

    else:
        raise DimensionError(f"unknown segment reduce mode: {mode}")

    return _op(tape, out, (x,), vjp)


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormState:
    """Running statistics for one batch-norm layer (not learnable)."""

    __slots__ = ("running_mean", "running_var", "momentum", "eps")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.running_mean = np.zeros(channels, dtype=DTYPE)
        self.running_var = np.ones(channels, dtype=DTYPE)
        self.momentum = momentum
        self.eps = eps

    def copy(self) -> "BatchNormState":
        dup = BatchNormState(len(self.running_mean), self.momentum, self.eps)
        dup.running_mean = self.running_mean.copy()
        dup.running_var = self.running_var.copy()
        return dup


def batch_norm(tape, x: Tensor, gamma: Tensor, beta: Tensor,
               state: BatchNormState, training: bool) -> Tensor:
    """Per-channel normalization of x[N, T, C] over the (N, T) axes.

    Training mode uses batch statistics and updates the running stats via
    exponential moving average; eval mode normalizes with the running stats.
    """
    c = x.data.shape[-1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(f"batch_norm: gamma/beta must have shape ({c},)")
    x2 = x.data.reshape(-1, c)
    n = x2.shape[0]
    if training:
        mean = x2.mean(axis=0)
        xc = x2 - mean
        var = np.mean(xc * xc, axis=0)  # population variance
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mean
        state.running_var = (1 - m) * state.running_var + m * var
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = xc * inv
        out = Tensor((xhat * gamma.data + beta.data).reshape(x.shape))
    else:
        mean = state.running_mean
        var = state.running_var
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = None  # materialized lazily in the backward pass
        scale = gamma.data * inv
        out = Tensor((x2 * scale + (beta.data - mean * scale)).reshape(x.shape))

    def vjp(g):
        g2 = g.reshape(-1, c)
        xh = xhat if xhat is not None else (x2 - mean) * inv
        dgamma = np.einsum("nc,nc->c", g2, xh)
        dbeta = g2.sum(axis=0)
        if training:
            # exact gradient through the batch statistics; uses
            # sum(gxhat * xhat) = gamma * dgamma and mean(gxhat) = gamma * dbeta / n
            dx = (gamma.data * inv) * (g2 - dbeta / n - xh * (dgamma / n))
        else:
            dx = g2 * (gamma.data * inv)
        return dx.reshape(x.shape), dgamma, dbeta

    return _op(tape, out, (x, gamma, beta), vjp)
