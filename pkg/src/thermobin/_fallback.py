"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` module; used when
the extension is unavailable or ``THERMOBIN_PURE_PYTHON=1``.
"""

import numpy as np


def dp_suffix(cumP, cumW, revP, revW, d):
    """Suffix table ``f[k, i]``: best score splitting levels ``i..n-1`` into ``k`` bins.

    The score of a bin ``[i, j)`` is ``W^2 / P`` with ``P`` the bin mass and
    ``W`` its mass-weighted deviation from the mean.  Sums come from prefix
    arrays when the bin starts below the median and from suffix arrays
    otherwise, which keeps far-tail bins accurate.  Infeasible entries are
    ``-inf``.
    """
    cumP = np.asarray(cumP, dtype=float)
    cumW = np.asarray(cumW, dtype=float)
    revP = np.asarray(revP, dtype=float)
    revW = np.asarray(revW, dtype=float)
    n = cumP.size - 1
    f = np.full((d + 1, n + 1), -np.inf)
    f[0, n] = 0.0
    for i in range(n):
        f[1, i] = _scores(cumP, cumW, revP, revW, i, np.array([n]))[0]
    for k in range(2, d + 1):
        for i in range(n - k + 1):
            js = np.arange(i + 1, n - k + 2)
            f[k, i] = np.max(_scores(cumP, cumW, revP, revW, i, js) + f[k - 1, js])
    return f


def _scores(cumP, cumW, revP, revW, i, js):
    if cumP[i] < 0.5:
        P = cumP[js] - cumP[i]
        W = cumW[js] - cumW[i]
    else:
        P = revP[i] - revP[js]
        W = revW[i] - revW[js]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(P > 0, W * W / P, 0.0)


def interval_scores(cumP, cumW, revP, revW, i, js):
    return _scores(np.asarray(cumP), np.asarray(cumW), np.asarray(revP), np.asarray(revW), i, np.asarray(js))


def _powmod(a, e, p):
    a = np.asarray(a, dtype=np.int64) % p
    r = np.ones_like(a)
    while e:
        if e & 1:
            r = r * a % p
        a = a * a % p
        e >>= 1
    return r


def _chebyshev_mod(c, M, p):
    t0, t1 = np.ones_like(c), c.copy()
    if M == 0:
        return t0
    for _ in range(M - 1):
        t0, t1 = t1, (2 * c % p * t1 - t0) % p
    return t1


def ising_eval_mod(L, p, omega, x0, npts):
    """Evaluate ``x^N Z(x)`` mod ``p`` at ``x = x0, x0+1, ..., x0+npts-1``.

    ``Z`` is the periodic ``L x L`` Ising partition function written with
    ``x = exp(-2 beta)``; ``omega`` is a primitive ``2L``-th root of unity
    mod ``p``.
    """
    N, M = L * L, L // 2
    x = (x0 + np.arange(npts, dtype=np.int64)) % p
    inv = lambda a: _powmod(a, p - 2, p)  # noqa: E731
    half = (p + 1) // 2
    xx = x * x % p
    one_m = (1 - xx) % p
    A = (1 + xx) % p
    A = A * A % p * inv(2 * x % p * one_m % p) % p
    cosines = [(pow(omega, k, p) + pow(omega, 2 * L - k, p)) * half % p for k in range(2 * L)]
    Z1 = np.ones_like(x)
    Z2 = np.ones_like(x)
    Z3 = np.ones_like(x)
    Z4 = np.ones_like(x)
    for k in range(1, L):
        t = _chebyshev_mod((A - cosines[k]) % p, M, p)
        cosh2 = 4 * (t * t % p) % p
        sinh2 = (cosh2 - 4) % p
        if k % 2:
            Z1, Z2 = Z1 * cosh2 % p, Z2 * sinh2 % p
        else:
            Z3, Z4 = Z3 * cosh2 % p, Z4 * sinh2 % p
    for k in (0, L):
        Z3 = Z3 * (2 * _chebyshev_mod((A - cosines[k]) % p, M, p) % p) % p
    u0 = (1 - x) % p * inv(x * ((1 + x) % p) % p) % p
    un = (1 + x) % p * inv(x * ((1 - x) % p) % p) % p
    for u in (u0, un):
        uM = _powmod(u, M, p)
        Z4 = Z4 * ((uM - inv(uM)) % p) % p
    pref = half * _powmod(one_m * inv(x) % p, N // 2, p) % p * _powmod(x, N, p) % p
    return pref * ((Z1 + Z2 + Z3 + Z4) % p) % p


def interp_forward_mod(values, x0, p):
    """Monomial coefficients of the polynomial through ``(x0 + j, values[j])`` mod ``p``."""
    v = np.asarray(values, dtype=np.int64) % p
    n = v.size
    diffs = np.empty(n, dtype=np.int64)
    for k in range(n):
        diffs[k] = v[0]
        v = (v[1:] - v[:-1]) % p
    fact = 1
    for k in range(1, n):
        fact = fact * k % p
        diffs[k] = diffs[k] * pow(fact, p - 2, p) % p
    # nested multiplication of the Newton forward form
    coef = np.zeros(n, dtype=np.int64)
    coef[0] = diffs[n - 1]
    size = 1
    for k in range(n - 2, -1, -1):
        a = (-(x0 + k)) % p
        shifted = np.zeros(size + 1, dtype=np.int64)
        shifted[1:] = coef[:size]
        shifted[:size] = (shifted[:size] + coef[:size] * a) % p
        shifted[0] = (shifted[0] + diffs[k]) % p
        size += 1
        coef[:size] = shifted % p
    return coef
