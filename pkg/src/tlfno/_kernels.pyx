# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; ``_kernels_py`` is the reference twin and must agree to rounding."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    """
    #include <math.h>
    #ifdef TLFNO_LIBMVEC
    #include <immintrin.h>
    __m128d _ZGVbN2v_erf(__m128d);
    __m512d _ZGVeN8v_erf(__m512d);
    __m128d _ZGVbN2v_exp(__m128d);
    __m512d _ZGVeN8v_exp(__m512d);

    __attribute__((target("avx512f")))
    static Py_ssize_t tlfno_erf_avx512(const double *x, double s, double *y, Py_ssize_t n)
    {
        Py_ssize_t i = 0;
        __m512d vs = _mm512_set1_pd(s);
        for (; i + 8 <= n; i += 8)
            _mm512_storeu_pd(y + i, _ZGVeN8v_erf(_mm512_mul_pd(_mm512_loadu_pd(x + i), vs)));
        return i;
    }

    __attribute__((target("avx512f")))
    static Py_ssize_t tlfno_gauss_avx512(const double *x, double *y, Py_ssize_t n)
    {
        Py_ssize_t i = 0;
        __m512d h = _mm512_set1_pd(-0.5);
        for (; i + 8 <= n; i += 8) {
            __m512d v = _mm512_loadu_pd(x + i);
            _mm512_storeu_pd(y + i, _ZGVeN8v_exp(_mm512_mul_pd(h, _mm512_mul_pd(v, v))));
        }
        return i;
    }
    #endif

    /* y[i] = exp(-x[i]^2 / 2) */
    static void tlfno_gauss(const double *x, double *y, Py_ssize_t n)
    {
        Py_ssize_t i = 0;
    #ifdef TLFNO_LIBMVEC
        if (__builtin_cpu_supports("avx512f")) {
            i = tlfno_gauss_avx512(x, y, n);
        } else {
            __m128d h = _mm_set1_pd(-0.5);
            for (; i + 2 <= n; i += 2) {
                __m128d v = _mm_loadu_pd(x + i);
                _mm_storeu_pd(y + i, _ZGVbN2v_exp(_mm_mul_pd(h, _mm_mul_pd(v, v))));
            }
        }
    #endif
        for (; i < n; i++)
            y[i] = exp(-0.5 * x[i] * x[i]);
    }

    /* y[i] = erf(s * x[i]); libmvec vector variants when the build links them */
    static void tlfno_erf_scaled(const double *x, double s, double *y, Py_ssize_t n)
    {
        Py_ssize_t i = 0;
    #ifdef TLFNO_LIBMVEC
        if (__builtin_cpu_supports("avx512f")) {
            i = tlfno_erf_avx512(x, s, y, n);
        } else {
            __m128d vs = _mm_set1_pd(s);
            for (; i + 2 <= n; i += 2)
                _mm_storeu_pd(y + i, _ZGVbN2v_erf(_mm_mul_pd(_mm_loadu_pd(x + i), vs)));
        }
    #endif
        for (; i < n; i++)
            y[i] = erf(s * x[i]);
    }
    """
    void erf_scaled "tlfno_erf_scaled"(const double *x, double s, double *y, Py_ssize_t n) nogil
    void gauss "tlfno_gauss"(const double *x, double *y, Py_ssize_t n) nogil

cdef double INV_SQRT2 = 0.70710678118654752440
cdef double INV_SQRT2PI = 0.39894228040143267794

BACKEND = "compiled"


def gelu_fwd(x):
    """Exact GELU and its derivative in one pass."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = xf.shape[0], i
    y = np.empty(n, dtype=np.float64)
    d = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = xf
    cdef double[::1] yv = y
    cdef double[::1] dv = d
    cdef double t, cdf
    if n == 0:
        return y.reshape(np.shape(x)), d.reshape(np.shape(x))
    with nogil:
        erf_scaled(&xv[0], INV_SQRT2, &yv[0], n)
        gauss(&xv[0], &dv[0], n)
        for i in range(n):
            t = xv[i]
            cdf = 0.5 * (1.0 + yv[i])
            yv[i] = t * cdf
            dv[i] = cdf + t * INV_SQRT2PI * dv[i]
    shape = np.shape(x)
    return y.reshape(shape), d.reshape(shape)


def gelu(x):
    """Exact GELU without the derivative (inference path)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = xf.shape[0], i
    y = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = xf
    cdef double[::1] yv = y
    cdef double t
    if n == 0:
        return y.reshape(np.shape(x))
    with nogil:
        erf_scaled(&xv[0], INV_SQRT2, &yv[0], n)
        for i in range(n):
            t = xv[i]
            yv[i] = 0.5 * t * (1.0 + yv[i])
    return y.reshape(np.shape(x))


def spectral_mix(V, R):
    """Y[b, o, k] = sum_i V[b, i, k] R[i, o, k]."""
    V = np.ascontiguousarray(V, dtype=np.complex128)
    R = np.ascontiguousarray(R, dtype=np.complex128)
    cdef Py_ssize_t B = V.shape[0], Ci = V.shape[1], K = V.shape[2], Co = R.shape[1]
    if R.shape[0] != Ci or R.shape[2] != K:
        raise ValueError("spectral_mix: weight shape does not match spectrum")
    Y = np.zeros((B, Co, K), dtype=np.complex128)
    # interleaved (re, im) views; plain double arithmetic vectorises, C99 complex does not
    cdef double[:, :, ::1] v = V.view(np.float64)
    cdef double[:, :, ::1] r = R.view(np.float64)
    cdef double[:, :, ::1] y = Y.view(np.float64)
    cdef Py_ssize_t b, i, o, k
    cdef double vr, vi, rr, ri
    with nogil:
        for b in range(B):
            for i in range(Ci):
                for o in range(Co):
                    for k in range(K):
                        vr = v[b, i, 2 * k]
                        vi = v[b, i, 2 * k + 1]
                        rr = r[i, o, 2 * k]
                        ri = r[i, o, 2 * k + 1]
                        y[b, o, 2 * k] += vr * rr - vi * ri
                        y[b, o, 2 * k + 1] += vr * ri + vi * rr
    return Y


def spectral_mix_adjoint(GY, V, R):
    """Gradients of a real loss w.r.t. V and R given its gradient GY w.r.t. Y (conjugate convention)."""
    GY = np.ascontiguousarray(GY, dtype=np.complex128)
    V = np.ascontiguousarray(V, dtype=np.complex128)
    R = np.ascontiguousarray(R, dtype=np.complex128)
    cdef Py_ssize_t B = V.shape[0], Ci = V.shape[1], K = V.shape[2], Co = R.shape[1]
    GV = np.zeros((B, Ci, K), dtype=np.complex128)
    GR = np.zeros((Ci, Co, K), dtype=np.complex128)
    cdef double[:, :, ::1] gy = GY.view(np.float64)
    cdef double[:, :, ::1] v = V.view(np.float64)
    cdef double[:, :, ::1] r = R.view(np.float64)
    cdef double[:, :, ::1] gv = GV.view(np.float64)
    cdef double[:, :, ::1] gr = GR.view(np.float64)
    cdef Py_ssize_t b, i, o, k
    cdef double gr_, gi, vr, vi, rr, ri
    with nogil:
        for b in range(B):
            for i in range(Ci):
                for o in range(Co):
                    for k in range(K):
                        gr_ = gy[b, o, 2 * k]
                        gi = gy[b, o, 2 * k + 1]
                        vr = v[b, i, 2 * k]
                        vi = v[b, i, 2 * k + 1]
                        rr = r[i, o, 2 * k]
                        ri = r[i, o, 2 * k + 1]
                        # gv += conj(r) * g
                        gv[b, i, 2 * k] += rr * gr_ + ri * gi
                        gv[b, i, 2 * k + 1] += rr * gi - ri * gr_
                        # gr += g * conj(v)
                        gr[i, o, 2 * k] += gr_ * vr + gi * vi
                        gr[i, o, 2 * k + 1] += gi * vr - gr_ * vi
    return GV, GR
