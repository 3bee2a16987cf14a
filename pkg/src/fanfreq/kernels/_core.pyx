# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels: branch-free im2col/col2im plus BLAS dgemm.

Hot path of training.  Contracts mirror `fanfreq.kernels.pure`; the two
backends agree to rounding (summation order differs, so not bitwise).
"""

import numpy as np
from scipy.linalg.cython_blas cimport dgemm


cdef inline void _fill_cols(double* cols, const double* x, int I, int H, int W,
                            int KH, int KW, int Ho, int Wo, int stride, int pad) noexcept nogil:
    # cols is (K, M) row-major with K = I*KH*KW, M = Ho*Wo
    cdef int i, ky, kx, oy, ox, iy, d, lo, hi, r
    cdef int M = Ho * Wo
    cdef double* dst
    cdef const double* src
    for i in range(I):
        for ky in range(KH):
            for kx in range(KW):
                r = (i * KH + ky) * KW + kx
                d = kx - pad
                if d < 0:
                    lo = (-d + stride - 1) // stride
                else:
                    lo = 0
                hi = (W - 1 - d) // stride + 1
                if hi > Wo:
                    hi = Wo
                if hi < lo:
                    hi = lo
                for oy in range(Ho):
                    iy = oy * stride + ky - pad
                    dst = cols + <long>r * M + oy * Wo
                    if iy < 0 or iy >= H:
                        for ox in range(Wo):
                            dst[ox] = 0.0
                        continue
                    for ox in range(lo):
                        dst[ox] = 0.0
                    src = x + (<long>i * H + iy) * W + d
                    if stride == 1:
                        for ox in range(lo, hi):
                            dst[ox] = src[ox]
                    else:
                        for ox in range(lo, hi):
                            dst[ox] = src[ox * stride]
                    for ox in range(hi, Wo):
                        dst[ox] = 0.0


cdef inline void _scatter_cols(const double* cols, double* gx, int I, int H, int W,
                               int KH, int KW, int Ho, int Wo, int stride, int pad) noexcept nogil:
    # adjoint of _fill_cols: accumulate cols back into the (zeroed) input gradient
    cdef int i, ky, kx, oy, ox, iy, d, lo, hi, r
    cdef int M = Ho * Wo
    cdef const double* src
    cdef double* dst
    for i in range(I):
        for ky in range(KH):
            for kx in range(KW):
                r = (i * KH + ky) * KW + kx
                d = kx - pad
                if d < 0:
                    lo = (-d + stride - 1) // stride
                else:
                    lo = 0
                hi = (W - 1 - d) // stride + 1
                if hi > Wo:
                    hi = Wo
                if hi < lo:
                    hi = lo
                for oy in range(Ho):
                    iy = oy * stride + ky - pad
                    if iy < 0 or iy >= H:
                        continue
                    src = cols + <long>r * M + oy * Wo
                    dst = gx + (<long>i * H + iy) * W + d
                    if stride == 1:
                        for ox in range(lo, hi):
                            dst[ox] += src[ox]
                    else:
                        for ox in range(lo, hi):
                            dst[ox * stride] += src[ox]


cdef inline void _gemm_out(double* cols, double* wmat, double* out,
                           int K, int M, int O) noexcept nogil:
    # out (O,M) = wmat (O,K) @ cols (K,M), all row-major
    cdef double one = 1.0, zero = 0.0
    dgemm("N", "N", &M, &O, &K, &one, cols, &M, wmat, &K, &zero, out, &M)


def conv_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, int stride, int pad):
    cdef int N = x.shape[0], I = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int O = w.shape[0], KH = w.shape[2], KW = w.shape[3]
    cdef int Ho = (H + 2 * pad - KH) // stride + 1
    cdef int Wo = (W + 2 * pad - KW) // stride + 1
    cdef int K = I * KH * KW, M = Ho * Wo
    out_arr = np.empty((N, O, Ho, Wo))
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[::1] cols = np.empty(K * M) if not (KH == 1 and KW == 1 and stride == 1 and pad == 0) else None
    cdef double[:, :, :, ::1] wv = w
    cdef int n
    cdef bint direct = KH == 1 and KW == 1 and stride == 1 and pad == 0
    with nogil:
        for n in range(N):
            if direct:
                _gemm_out(<double*> &x[n, 0, 0, 0], &wv[0, 0, 0, 0], &out[n, 0, 0, 0], K, M, O)
            else:
                _fill_cols(&cols[0], &x[n, 0, 0, 0], I, H, W, KH, KW, Ho, Wo, stride, pad)
                _gemm_out(&cols[0], &wv[0, 0, 0, 0], &out[n, 0, 0, 0], K, M, O)
    return out_arr


def conv_backward_input(double[:, :, :, ::1] g, double[:, :, :, ::1] w, x_shape, int stride, int pad):
    cdef int N = x_shape[0], I = x_shape[1], H = x_shape[2], W = x_shape[3]
    cdef int O = w.shape[0], KH = w.shape[2], KW = w.shape[3]
    cdef int Ho = g.shape[2], Wo = g.shape[3]
    cdef int K = I * KH * KW, M = Ho * Wo
    gx_arr = np.zeros((N, I, H, W))
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[::1] cols = np.empty(K * M)
    cdef double[:, :, :, ::1] wv = w
    cdef double one = 1.0, zero = 0.0
    cdef int n
    cdef bint direct = KH == 1 and KW == 1 and stride == 1 and pad == 0
    with nogil:
        for n in range(N):
            # cols (K,M) = w^T (K,O) @ g[n] (O,M):  F-order C^T(M,K) = g^T(M,O) @ w(O,K)
            dgemm("N", "T", &M, &K, &O, &one, <double*> &g[n, 0, 0, 0], &M,
                  &wv[0, 0, 0, 0], &K, &zero, &cols[0], &M)
            if direct:
                # cols is exactly the input gradient for a 1x1/stride-1 conv
                for_idx_copy(&cols[0], &gx[n, 0, 0, 0], K * M)
            else:
                _scatter_cols(&cols[0], &gx[n, 0, 0, 0], I, H, W, KH, KW, Ho, Wo, stride, pad)
    return gx_arr


cdef inline void for_idx_copy(const double* src, double* dst, long count) noexcept nogil:
    cdef long i
    for i in range(count):
        dst[i] = src[i]


def conv_backward_weight(double[:, :, :, ::1] g, double[:, :, :, ::1] x, w_shape, int stride, int pad):
    cdef int N = x.shape[0], I = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int O = w_shape[0], KH = w_shape[2], KW = w_shape[3]
    cdef int Ho = g.shape[2], Wo = g.shape[3]
    cdef int K = I * KH * KW, M = Ho * Wo
    gw_arr = np.zeros((O, I, KH, KW))
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] cols = np.empty(K * M)
    cdef double one = 1.0
    cdef int n
    cdef bint direct = KH == 1 and KW == 1 and stride == 1 and pad == 0
    cdef double* colsptr
    with nogil:
        for n in range(N):
            if direct:
                colsptr = <double*> &x[n, 0, 0, 0]
            else:
                colsptr = &cols[0]
                _fill_cols(colsptr, &x[n, 0, 0, 0], I, H, W, KH, KW, Ho, Wo, stride, pad)
            # gw (O,K) += g[n] (O,M) @ cols^T (M,K):  F-order gw^T(K,O) = cols(K,M)@g^T... via transa
            dgemm("T", "N", &K, &O, &M, &one, colsptr, &M,
                  <double*> &g[n, 0, 0, 0], &M, &one, &gw[0, 0, 0, 0], &K)
    return gw_arr
