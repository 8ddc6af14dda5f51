"""Pure-numpy implementations of the hot kernels.

These are the reference implementations and the fallback used when the
compiled extension (flexcast.kernels._core) is not available.  Both backends
implement the same contracts:

  conv1d_causal_fwd   y[n,t] = sum_k x[n, t - k*dilation] @ f[k]   (zero left pad)
  conv1d_causal_bwd   gradients of the above w.r.t. x and f
  edge_scatter_add    out[dst[e]] += values[src[e]]
  scatter_add_rows    out[idx[m]] += rows[m]
"""

import numpy as np


def conv1d_causal_fwd(x: np.ndarray, f: np.ndarray, dilation: int) -> np.ndarray:
    n, t, cin = x.shape
    k, _, cout = f.shape
    pad = (k - 1) * dilation
    xp = np.zeros((n, t + pad, cin), dtype=x.dtype)
    xp[:, pad:, :] = x
    y = np.zeros((n, t, cout), dtype=x.dtype)
    for tap in range(k):
        s = pad - tap * dilation
        y += xp[:, s:s + t, :] @ f[tap]
    return y


def conv1d_causal_bwd(x, f, dilation, gy):
    n, t, cin = x.shape
    k, _, cout = f.shape
    pad = (k - 1) * dilation
    xp = np.zeros((n, t + pad, cin), dtype=x.dtype)
    xp[:, pad:, :] = x
    gxp = np.zeros_like(xp)
    gf = np.zeros_like(f)
    for tap in range(k):
        s = pad - tap * dilation
        gxp[:, s:s + t, :] += gy @ f[tap].T
        gf[tap] = np.tensordot(xp[:, s:s + t, :], gy, axes=([0, 1], [0, 1]))
    return gxp[:, pad:, :], gf


def edge_scatter_add(values: np.ndarray, src: np.ndarray, dst: np.ndarray,
                     n_out: int, out: np.ndarray = None) -> np.ndarray:
    if out is None:
        out = np.zeros((n_out, values.shape[1]), dtype=values.dtype)
    np.add.at(out, dst, values[src])
    return out


def scatter_add_rows(rows: np.ndarray, idx: np.ndarray, n_out: int) -> np.ndarray:
    out = np.zeros((n_out, rows.shape[1]), dtype=rows.dtype)
    np.add.at(out, idx, rows)
    return out
