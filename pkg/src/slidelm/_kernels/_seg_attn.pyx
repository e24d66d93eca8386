# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused packed GQA cross-attention with BLAS inner products.

Same contract as ``_numpy_ref``; one pass over members with no per-member
python overhead or temporaries, which is what makes it worth compiling.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm, sgemm

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline void _gemm_nt(real* c, real* a, real* b, int m, int n, int kk,
                          int lda, int ldb, int ldc, real alpha, real beta) noexcept nogil:
    # row-major C(m,n) = alpha * A(m,kk) @ B(n,kk)^T + beta * C
    cdef char ta = b'T', tb = b'N'
    if real is double:
        dgemm(&ta, &tb, &n, &m, &kk, <double*>&alpha, <double*>b, &ldb,
              <double*>a, &lda, <double*>&beta, <double*>c, &ldc)
    else:
        sgemm(&ta, &tb, &n, &m, &kk, <float*>&alpha, <float*>b, &ldb,
              <float*>a, &lda, <float*>&beta, <float*>c, &ldc)


cdef inline void _gemm_nn(real* c, real* a, real* b, int m, int n, int kk,
                          int lda, int ldb, int ldc, real alpha, real beta) noexcept nogil:
    # row-major C(m,n) = alpha * A(m,kk) @ B(kk,n) + beta * C
    cdef char ta = b'N', tb = b'N'
    if real is double:
        dgemm(&ta, &tb, &n, &m, &kk, <double*>&alpha, <double*>b, &ldb,
              <double*>a, &lda, <double*>&beta, <double*>c, &ldc)
    else:
        sgemm(&ta, &tb, &n, &m, &kk, <float*>&alpha, <float*>b, &ldb,
              <float*>a, &lda, <float*>&beta, <float*>c, &ldc)


cdef inline void _gemm_tn(real* c, real* a, real* b, int m, int n, int kk,
                          int lda, int ldb, int ldc, real alpha, real beta) noexcept nogil:
    # row-major C(m,n) = alpha * A(kk,m)^T @ B(kk,n) + beta * C
    cdef char ta = b'N', tb = b'T'
    if real is double:
        dgemm(&ta, &tb, &n, &m, &kk, <double*>&alpha, <double*>b, &ldb,
              <double*>a, &lda, <double*>&beta, <double*>c, &ldc)
    else:
        sgemm(&ta, &tb, &n, &m, &kk, <float*>&alpha, <float*>b, &ldb,
              <float*>a, &lda, <float*>&beta, <float*>c, &ldc)


def segment_attention_forward(real[:, :, ::1] q, real[:, :, ::1] k,
                              real[:, :, ::1] v, cnp.int64_t[::1] offsets,
                              double scale):
    cdef int H = q.shape[0], K = q.shape[1], dh = q.shape[2]
    cdef int G = k.shape[0]
    cdef Py_ssize_t T = k.shape[1]
    cdef int M = offsets.shape[0] - 1
    cdef int gsize = H // G
    dtype = np.float64 if real is double else np.float32
    out_arr = np.empty((M, H, K, dh), dtype=dtype)
    attn_arr = np.empty((H, K, T), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef real[:, :, ::1] attn = attn_arr
    cdef int m, h, g, i, j, L, s
    cdef real mx, z
    cdef real* srow
    with nogil:
        for m in range(M):
            s = <int>offsets[m]
            L = <int>(offsets[m + 1] - offsets[m])
            for h in range(H):
                g = h // gsize
                # scores into the attn slab, row stride T
                _gemm_nt(&attn[h, 0, s], &q[h, 0, 0], &k[g, s, 0],
                         K, L, dh, dh, dh, <int>T, <real>scale, <real>0.0)
                for i in range(K):
                    srow = &attn[h, i, s]
                    mx = srow[0]
                    for j in range(1, L):
                        if srow[j] > mx:
                            mx = srow[j]
                    z = 0.0
                    for j in range(L):
                        srow[j] = <real>exp(srow[j] - mx)
                        z += srow[j]
                    z = <real>1.0 / z
                    for j in range(L):
                        srow[j] *= z
                _gemm_nn(&out[m, h, 0, 0], &attn[h, 0, s], &v[g, s, 0],
                         K, dh, L, <int>T, dh, dh, <real>1.0, <real>0.0)
    return out_arr, attn_arr


def segment_attention_backward(real[:, :, :, ::1] g_out, real[:, :, ::1] q,
                               real[:, :, ::1] k, real[:, :, ::1] v,
                               real[:, :, ::1] attn, cnp.int64_t[::1] offsets,
                               double scale):
    cdef int H = q.shape[0], K = q.shape[1], dh = q.shape[2]
    cdef int G = k.shape[0]
    cdef Py_ssize_t T = k.shape[1]
    cdef int M = offsets.shape[0] - 1
    cdef int gsize = H // G
    dtype = np.float64 if real is double else np.float32
    gq_arr = np.zeros((H, K, dh), dtype=dtype)
    gk_arr = np.zeros((G, T, dh), dtype=dtype)
    gv_arr = np.zeros((G, T, dh), dtype=dtype)
    cdef real[:, :, ::1] gq = gq_arr
    cdef real[:, :, ::1] gk = gk_arr
    cdef real[:, :, ::1] gv = gv_arr
    cdef Py_ssize_t lmax = 0
    cdef int m
    for m in range(M):
        if offsets[m + 1] - offsets[m] > lmax:
            lmax = offsets[m + 1] - offsets[m]
    ds_arr = np.empty((K, lmax), dtype=dtype)
    cdef real[:, ::1] ds = ds_arr
    cdef int h, g, i, j, L, s
    cdef real row
    cdef real* arow
    cdef real* dsrow
    with nogil:
        for m in range(M):
            s = <int>offsets[m]
            L = <int>(offsets[m + 1] - offsets[m])
            for h in range(H):
                g = h // gsize
                # dA = gO @ V^T
                _gemm_nt(&ds[0, 0], &g_out[m, h, 0, 0], &v[g, s, 0],
                         K, L, dh, dh, dh, <int>lmax, <real>1.0, <real>0.0)
                # dS = A * (dA - rowsum(dA * A))
                for i in range(K):
                    arow = &attn[h, i, s]
                    dsrow = &ds[i, 0]
                    row = 0.0
                    for j in range(L):
                        row += dsrow[j] * arow[j]
                    for j in range(L):
                        dsrow[j] = arow[j] * (dsrow[j] - row)
                # accumulate param grads
                _gemm_nn(&gq[h, 0, 0], &ds[0, 0], &k[g, s, 0],
                         K, dh, L, <int>lmax, dh, dh, <real>scale, <real>1.0)
                _gemm_tn(&gk[g, s, 0], &ds[0, 0], &q[h, 0, 0],
                         L, dh, K, <int>lmax, dh, dh, <real>scale, <real>1.0)
                _gemm_tn(&gv[g, s, 0], &attn[h, 0, s], &g_out[m, h, 0, 0],
                         L, dh, K, <int>T, dh, dh, <real>1.0, <real>1.0)
    return gq_arr, gk_arr, gv_arr
