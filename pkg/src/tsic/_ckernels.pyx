# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts as ``_pykernels``.

Dense blocks call BLAS ``dgemm`` directly on row-major buffers by treating
them as transposed column-major matrices.
"""
import numpy as np
from scipy.linalg.cython_blas cimport dgemm


cpdef int masked_argmax(const double[::1] q, const signed char[::1] mask):
    cdef Py_ssize_t i, n = q.shape[0]
    cdef int best = -1
    cdef double best_val = 0.0
    for i in range(n):
        if mask[i] != 0 and (best < 0 or q[i] > best_val):
            best = <int>i
            best_val = q[i]
    return best


cpdef int argmin_priority(const double[::1] freq, const double[::1] size, bint use_size):
    cdef Py_ssize_t i, n = freq.shape[0]
    cdef int best = -1
    cdef double h, best_val = 0.0
    for i in range(n):
        h = freq[i] * size[i] if use_size else freq[i]
        if best < 0 or h < best_val:
            best = <int>i
            best_val = h
    return best


def _as_rows(x):
    """2-D float64 array with contiguous rows.

    Column slices of a wider batch are copied: dgemm reading the strided
    block straight from a cold buffer is slower than a compact copy.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D batch")
    if x.shape[0] > 1 and not x.flags.c_contiguous:
        x = np.ascontiguousarray(x)
    elif x.strides[1] != 8:
        x = np.ascontiguousarray(x)
    return x


cdef int _ld(double[:, :] x):
    # a single row may carry any stride (e.g. 0 from np.newaxis)
    if x.shape[0] == 1 or x.strides[0] < 8 * x.shape[1]:
        return <int>max(1, x.shape[1])
    return <int>(x.strides[0] // 8)


cdef void _gemm(char ta, char tb, int m, int n, int k, double *a, int lda,
                double *b, int ldb, double beta, double *c, int ldc) noexcept nogil:
    cdef double alpha = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


cdef void _bias_relu(double[:, ::1] h, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t r, j
    for r in range(h.shape[0]):
        for j in range(h.shape[1]):
            h[r, j] = b[j]


cdef void _relu(double[:, ::1] h) noexcept nogil:
    cdef Py_ssize_t r, j
    for r in range(h.shape[0]):
        for j in range(h.shape[1]):
            if h[r, j] < 0.0:
                h[r, j] = 0.0


def mlp_forward(x, w1, b1, w2, b2):
    x = _as_rows(x)
    cdef double[:, :] xv = x
    cdef double[:, ::1] w1v = np.ascontiguousarray(w1, dtype=np.float64)
    cdef double[:, ::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)
    cdef const double[::1] b1v = np.ascontiguousarray(b1, dtype=np.float64)
    cdef const double[::1] b2v = np.ascontiguousarray(b2, dtype=np.float64)
    cdef int bsz = xv.shape[0], d = xv.shape[1], hid = w1v.shape[1], hid2 = w2v.shape[1]
    if w1v.shape[0] != d or w2v.shape[0] != hid:
        raise ValueError("mlp_forward: shape mismatch")
    h1 = np.empty((bsz, hid))
    h2 = np.empty((bsz, hid2))
    cdef double[:, ::1] h1v = h1
    cdef double[:, ::1] h2v = h2
    cdef int ldx = _ld(xv)
    if bsz == 0:
        return h1, h2
    with nogil:
        _bias_relu(h1v, b1v)
        _gemm(b'N', b'N', hid, bsz, d, &w1v[0, 0], hid, &xv[0, 0], ldx, 1.0, &h1v[0, 0], hid)
        _relu(h1v)
        _bias_relu(h2v, b2v)
        _gemm(b'N', b'N', hid2, bsz, hid, &w2v[0, 0], hid2, &h1v[0, 0], hid, 1.0, &h2v[0, 0], hid2)
        _relu(h2v)
    return h1, h2


def mlp_backward(x, h1, h2, w2, dh2):
    x = _as_rows(x)
    cdef double[:, :] xv = x
    cdef double[:, ::1] h1v = np.ascontiguousarray(h1, dtype=np.float64)
    cdef double[:, ::1] h2v = np.ascontiguousarray(h2, dtype=np.float64)
    cdef double[:, ::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)
    cdef int bsz = xv.shape[0], d = xv.shape[1], hid = h1v.shape[1], hid2 = h2v.shape[1]
    cdef int ldx = _ld(xv)
    dz2 = np.array(dh2, dtype=np.float64, order="C", copy=True)
    dh1 = np.empty((bsz, hid))
    dw1 = np.empty((d, hid))
    dw2 = np.empty((hid, hid2))
    db1 = np.zeros(hid)
    db2 = np.zeros(hid2)
    cdef double[:, ::1] dz2v = dz2
    cdef double[:, ::1] dz1v = dh1
    cdef double[:, ::1] dw1v = dw1
    cdef double[:, ::1] dw2v = dw2
    cdef double[::1] db1v = db1
    cdef double[::1] db2v = db2
    cdef Py_ssize_t r, j
    if bsz == 0:
        dw1[:] = 0.0
        dw2[:] = 0.0
        return dw1, db1, dw2, db2
    with nogil:
        for r in range(bsz):
            for j in range(hid2):
                if h2v[r, j] <= 0.0:
                    dz2v[r, j] = 0.0
                db2v[j] += dz2v[r, j]
        # dw2 = h1^T dz2
        _gemm(b'N', b'T', hid2, hid, bsz, &dz2v[0, 0], hid2, &h1v[0, 0], hid, 0.0, &dw2v[0, 0], hid2)
        # dh1 = dz2 w2^T
        _gemm(b'T', b'N', hid, bsz, hid2, &w2v[0, 0], hid2, &dz2v[0, 0], hid2, 0.0, &dz1v[0, 0], hid)
        for r in range(bsz):
            for j in range(hid):
                if h1v[r, j] <= 0.0:
                    dz1v[r, j] = 0.0
                db1v[j] += dz1v[r, j]
        # dw1 = x^T dz1
        _gemm(b'N', b'T', hid, d, bsz, &dz1v[0, 0], hid, &xv[0, 0], ldx, 0.0, &dw1v[0, 0], hid)
    return dw1, db1, dw2, db2
