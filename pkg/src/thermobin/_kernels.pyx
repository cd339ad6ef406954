# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_fallback.py`` for the reference semantics."""

import numpy as np

ctypedef unsigned long long u64
ctypedef long long i64


cdef inline double _score(const double[:] cumP, const double[:] cumW,
                          const double[:] revP, const double[:] revW,
                          Py_ssize_t i, Py_ssize_t j) nogil:
    cdef double P, W
    if cumP[i] < 0.5:
        P = cumP[j] - cumP[i]
        W = cumW[j] - cumW[i]
    else:
        P = revP[i] - revP[j]
        W = revW[i] - revW[j]
    if P > 0:
        return W * W / P
    return 0.0


def dp_suffix(const double[:] cumP, const double[:] cumW,
              const double[:] revP, const double[:] revW, int d):
    cdef Py_ssize_t n = cumP.shape[0] - 1
    f_arr = np.full((d + 1, n + 1), -np.inf)
    cdef double[:, :] f = f_arr
    cdef Py_ssize_t i, j, k
    cdef double best, s
    with nogil:
        f[0, n] = 0.0
        for i in range(n):
            f[1, i] = _score(cumP, cumW, revP, revW, i, n)
        for k in range(2, d + 1):
            for i in range(n - k + 1):
                best = -1e308
                for j in range(i + 1, n - k + 2):
                    s = _score(cumP, cumW, revP, revW, i, j) + f[k - 1, j]
                    if s > best:
                        best = s
                f[k, i] = best
    return f_arr


cdef inline u64 _mulmod(u64 a, u64 b, u64 p) nogil:
    return (a * b) % p


cdef u64 _powmod(u64 a, u64 e, u64 p) nogil:
    cdef u64 r = 1
    a %= p
    while e:
        if e & 1:
            r = _mulmod(r, a, p)
        a = _mulmod(a, a, p)
        e >>= 1
    return r


cdef inline u64 _inv(u64 a, u64 p) nogil:
    return _powmod(a, p - 2, p)


cdef inline u64 _sub(u64 a, u64 b, u64 p) nogil:
    return (a + p - b) % p


cdef u64 _cheb(u64 c, int M, u64 p) nogil:
    cdef u64 t0 = 1, t1 = c, t2
    cdef int m
    if M == 0:
        return 1
    for m in range(M - 1):
        t2 = _sub(_mulmod(2 * c % p, t1, p), t0, p)
        t0 = t1
        t1 = t2
    return t1


def ising_eval_mod(int L, u64 p, u64 omega, i64 x0, Py_ssize_t npts):
    cdef int N = L * L, M = L // 2, k
    cdef u64 half = (p + 1) // 2
    cos_arr = np.empty(2 * L, dtype=np.uint64)
    cdef u64[:] cosines = cos_arr
    for k in range(2 * L):
        cosines[k] = (pow(omega, k, p) + pow(omega, 2 * L - k, p)) * half % p
    out_arr = np.empty(npts, dtype=np.int64)
    cdef i64[:] out = out_arr
    cdef Py_ssize_t j
    cdef u64 x, xx, one_m, A, t, c2, Z1, Z2, Z3, Z4, u0, un, uM, pref
    with nogil:
        for j in range(npts):
            x = <u64>((x0 + j) % <i64>p)
            xx = _mulmod(x, x, p)
            one_m = _sub(1, xx, p)
            A = (1 + xx) % p
            A = _mulmod(_mulmod(A, A, p), _inv(_mulmod(2 * x % p, one_m, p), p), p)
            Z1 = 1
            Z2 = 1
            Z3 = 1
            Z4 = 1
            for k in range(1, L):
                t = _cheb(_sub(A, cosines[k], p), M, p)
                c2 = 4 * _mulmod(t, t, p) % p
                if k % 2:
                    Z1 = _mulmod(Z1, c2, p)
                    Z2 = _mulmod(Z2, _sub(c2, 4, p), p)
                else:
                    Z3 = _mulmod(Z3, c2, p)
                    Z4 = _mulmod(Z4, _sub(c2, 4, p), p)
            Z3 = _mulmod(Z3, 2 * _cheb(_sub(A, cosines[0], p), M, p) % p, p)
            Z3 = _mulmod(Z3, 2 * _cheb(_sub(A, cosines[L], p), M, p) % p, p)
            u0 = _mulmod(_sub(1, x, p), _inv(_mulmod(x, (1 + x) % p, p), p), p)
            un = _mulmod((1 + x) % p, _inv(_mulmod(x, _sub(1, x, p), p), p), p)
            uM = _powmod(u0, M, p)
            Z4 = _mulmod(Z4, _sub(uM, _inv(uM, p), p), p)
            uM = _powmod(un, M, p)
            Z4 = _mulmod(Z4, _sub(uM, _inv(uM, p), p), p)
            pref = _mulmod(half, _powmod(_mulmod(one_m, _inv(x, p), p), N // 2, p), p)
            pref = _mulmod(pref, _powmod(x, N, p), p)
            out[j] = <i64>_mulmod(pref, (Z1 + Z2 + Z3 + Z4) % p, p)
    return out_arr


def interp_forward_mod(values, i64 x0, u64 p):
    cdef Py_ssize_t n = len(values), k, i, size
    v_arr = np.asarray(values, dtype=np.int64) % <i64>p
    v_arr = v_arr.astype(np.uint64)
    cdef u64[:] v = v_arr
    diff_arr = np.empty(n, dtype=np.uint64)
    cdef u64[:] diffs = diff_arr
    coef_arr = np.zeros(n, dtype=np.int64)
    cdef i64[:] coef = coef_arr
    cdef u64 fact = 1, a, prev, cur
    with nogil:
        for k in range(n):
            diffs[k] = v[0]
            for i in range(n - k - 1):
                v[i] = _sub(v[i + 1], v[i], p)
        for k in range(1, n):
            fact = _mulmod(fact, (<u64>k) % p, p)
            diffs[k] = _mulmod(diffs[k], _inv(fact, p), p)
        coef[0] = <i64>diffs[n - 1]
        size = 1
        for k in range(n - 2, -1, -1):
            a = _sub(0, <u64>((x0 + k) % <i64>p), p)
            # coef <- coef * (x + a) + diffs[k], in place from the top degree down
            coef[size] = coef[size - 1]
            for i in range(size - 1, 0, -1):
                coef[i] = <i64>((_mulmod(<u64>coef[i], a, p) + <u64>coef[i - 1]) % p)
            coef[0] = <i64>((_mulmod(<u64>coef[0], a, p) + diffs[k]) % p)
            size += 1
    return coef_arr
