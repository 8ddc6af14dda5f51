# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

The dilated causal convolution is expressed as one accumulating BLAS dgemm
per filter tap over a zero-padded, flattened (node*time, channel) buffer,
which avoids the per-tap temporaries the numpy fallback allocates.  Rows that
a shifted tap would read across node boundaries land in (or come from) pad
rows only, so the flat formulation never mixes nodes.

The scatter kernels replace np.add.at, which dominates graph aggregation
time in the fallback.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def conv1d_causal_fwd(cnp.ndarray[double, ndim=3] x,
                      cnp.ndarray[double, ndim=3] f,
                      int dilation):
    cdef Py_ssize_t n = x.shape[0], t = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t k = f.shape[0], cout = f.shape[2]
    cdef Py_ssize_t pad = (k - 1) * dilation
    cdef Py_ssize_t tp = t + pad, m = n * tp

    xp = np.zeros((n, tp, cin), dtype=np.float64)
    xp[:, pad:, :] = x
    yp = np.zeros((n, tp, cout), dtype=np.float64)

    cdef double[:, :, ::1] xpv = xp
    cdef double[:, :, ::1] ypv = yp
    cdef double[:, :, ::1] fv = f
    cdef double alpha = 1.0, beta = 1.0
    cdef int mm, nn, kk, lda, ldb, ldc
    cdef Py_ssize_t tap, s, rows

    for tap in range(k):
        s = tap * dilation
        rows = m - s
        # row-major YP2[s:] += XP2[:rows] @ f[tap]
        mm = <int>cout
        nn = <int>rows
        kk = <int>cin
        lda = <int>cout
        ldb = <int>cin
        ldc = <int>cout
        dgemm("N", "N", &mm, &nn, &kk, &alpha,
              &fv[tap, 0, 0], &lda,
              &xpv[0, 0, 0], &ldb, &beta,
              &ypv[0, 0, 0] + s * cout, &ldc)

    return np.ascontiguousarray(yp[:, pad:, :])


def conv1d_causal_bwd(cnp.ndarray[double, ndim=3] x,
                      cnp.ndarray[double, ndim=3] f,
                      int dilation,
                      cnp.ndarray[double, ndim=3] gy):
    cdef Py_ssize_t n = x.shape[0], t = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t k = f.shape[0], cout = f.shape[2]
    cdef Py_ssize_t pad = (k - 1) * dilation
    cdef Py_ssize_t tp = t + pad, m = n * tp

    xp = np.zeros((n, tp, cin), dtype=np.float64)
    xp[:, pad:, :] = x
    gyp = np.zeros((n, tp, cout), dtype=np.float64)
    gyp[:, pad:, :] = gy
    gxp = np.zeros((n, tp, cin), dtype=np.float64)
    gf = np.zeros((k, cin, cout), dtype=np.float64)

    cdef double[:, :, ::1] xpv = xp
    cdef double[:, :, ::1] gypv = gyp
    cdef double[:, :, ::1] gxpv = gxp
    cdef double[:, :, ::1] fv = f
    cdef double[:, :, ::1] gfv = gf
    cdef double alpha = 1.0, beta = 1.0
    cdef int mm, nn, kk, lda, ldb, ldc
    cdef Py_ssize_t tap, s, rows

    for tap in range(k):
        s = tap * dilation
        rows = m - s
        # row-major GXP2[:rows] += GYP2[s:] @ f[tap].T
        mm = <int>cin
        nn = <int>rows
        kk = <int>cout
        lda = <int>cout
        ldb = <int>cout
        ldc = <int>cin
        dgemm("T", "N", &mm, &nn, &kk, &alpha,
              &fv[tap, 0, 0], &lda,
              &gypv[0, 0, 0] + s * cout, &ldb, &beta,
              &gxpv[0, 0, 0], &ldc)
        # row-major gf[tap] += XP2[:rows].T @ GYP2[s:]
        mm = <int>cout
        nn = <int>cin
        kk = <int>rows
        lda = <int>cout
        ldb = <int>cin
        ldc = <int>cout
        dgemm("N", "T", &mm, &nn, &kk, &alpha,
              &gypv[0, 0, 0] + s * cout, &lda,
              &xpv[0, 0, 0], &ldb, &beta,
              &gfv[tap, 0, 0], &ldc)

    return np.ascontiguousarray(gxp[:, pad:, :]), gf


def edge_scatter_add(cnp.ndarray[double, ndim=2] values,
                     cnp.ndarray[cnp.int64_t, ndim=1] src,
                     cnp.ndarray[cnp.int64_t, ndim=1] dst,
                     Py_ssize_t n_out,
                     out=None):
    cdef Py_ssize_t e, j, a, b
    cdef Py_ssize_t n_edges = src.shape[0], d = values.shape[1]
    if out is None:
        out = np.zeros((n_out, d), dtype=np.float64)
    cdef double[:, ::1] outv = out
    cdef double[:, ::1] valv = values
    cdef cnp.int64_t[::1] srcv = src
    cdef cnp.int64_t[::1] dstv = dst
    with nogil:
        for e in range(n_edges):
            a = srcv[e]
            b = dstv[e]
            for j in range(d):
                outv[b, j] += valv[a, j]
    return out


def scatter_add_rows(cnp.ndarray[double, ndim=2] rows,
                     cnp.ndarray[cnp.int64_t, ndim=1] idx,
                     Py_ssize_t n_out):
    cdef Py_ssize_t i, j, b
    cdef Py_ssize_t n_rows = rows.shape[0], d = rows.shape[1]
    out = np.zeros((n_out, d), dtype=np.float64)
    cdef double[:, ::1] outv = out
    cdef double[:, ::1] rowv = rows
    cdef cnp.int64_t[::1] idxv = idx
    with nogil:
        for i in range(n_rows):
            b = idxv[i]
            for j in range(d):
                outv[b, j] += rowv[i, j]
    return out
