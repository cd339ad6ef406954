import os
import subprocess
import sys

import numpy as np
import pytest

from thermobin import _fallback, kernels
from thermobin.ising2d import _primes, _root_of_unity

compiled = pytest.importorskip("thermobin._kernels")


def _prefix_arrays(rng, n):
    q = rng.dirichlet(np.ones(n))
    E = np.sort(rng.normal(size=n))
    w = q * (E - q @ E)
    cumP = np.concatenate([[0.0], np.cumsum(q)])
    cumW = np.concatenate([[0.0], np.cumsum(w)])
    revP = np.concatenate([np.cumsum(q[::-1])[::-1], [0.0]])
    revW = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    return cumP, cumW, revP, revW


@pytest.mark.parametrize("n,d", [(5, 2), (12, 4), (40, 7), (3, 3)])
def test_dp_suffix_backends_agree(n, d):
    args = _prefix_arrays(np.random.default_rng(n * 31 + d), n)
    a = np.asarray(_fallback.dp_suffix(*args, d))
    b = np.asarray(compiled.dp_suffix(*args, d))
    assert np.array_equal(np.isinf(a), np.isinf(b))
    fin = np.isfinite(a)
    np.testing.assert_allclose(b[fin], a[fin], rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("L", [4, 6, 10])
def test_ising_kernels_backends_agree(L):
    npts = 2 * L * L + 1
    for p in _primes(L, 2):
        w = _root_of_unity(2 * L, p)
        va = np.asarray(_fallback.ising_eval_mod(L, p, w, 2, npts))
        vb = np.asarray(compiled.ising_eval_mod(L, p, w, 2, npts))
        assert np.array_equal(va, vb)
        assert np.array_equal(np.asarray(_fallback.interp_forward_mod(va, 2, p)),
                              np.asarray(compiled.interp_forward_mod(va, 2, p)))


def test_interpolation_recovers_known_polynomial():
    p = _primes(4, 1)[0]
    coef = np.array([3, 0, 5, 1, 7], dtype=np.int64)
    xs = 2 + np.arange(coef.size)
    vals = [sum(int(c) * int(x) ** k for k, c in enumerate(coef)) % p for x in xs]
    for impl in (_fallback, compiled):
        assert list(np.asarray(impl.interp_forward_mod(np.array(vals, dtype=np.int64), 2, p))) == list(coef)


def test_compiled_backend_selected_by_default():
    assert kernels.BACKEND == "cython"


def test_pure_python_switch_gives_same_results():
    code = (
        "from thermobin import kernels; from thermobin.ising2d import exact_dos;"
        "from thermobin.binning import dp_exact; from thermobin.models import n_qubit_spectrum;"
        "from thermobin.spectra import ThermalEnsemble;"
        "print(kernels.BACKEND, exact_dos(6).degeneracies[5], dp_exact(ThermalEnsemble(n_qubit_spectrum(60), 0.7), 4).cuts)"
    )
    env = dict(os.environ, THERMOBIN_PURE_PYTHON="1")
    pure = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True).stdout
    env.pop("THERMOBIN_PURE_PYTHON")
    fast = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True).stdout
    assert pure.split()[0] == "python" and fast.split()[0] == "cython"
    assert pure.split(maxsplit=1)[1] == fast.split(maxsplit=1)[1]
