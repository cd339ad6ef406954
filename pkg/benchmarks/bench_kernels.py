"""Compare the compiled kernels with the numpy fallback.

Run ``python benchmarks/bench_kernels.py``; prints best-of-``repeat``
wall times and the speedup for each kernel.
"""

import argparse
import timeit

import numpy as np

from thermobin import _fallback
from thermobin.binning import _DiscreteScorer
from thermobin.ising2d import _primes, _root_of_unity
from thermobin.models import n_qubit_spectrum
from thermobin.spectra import ThermalEnsemble

try:
    from thermobin import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def cases(n_levels, d, L):
    sc = _DiscreteScorer(ThermalEnsemble(n_qubit_spectrum(n_levels - 1), 0.6))
    dp_args = (sc.cumP, sc.cumW, sc.revP, sc.revW, d)
    p = _primes(L, 1)[0]
    w = _root_of_unity(2 * L, p)
    npts = 2 * L * L + 1
    vals = _fallback.ising_eval_mod(L, p, w, 2, npts)
    return {
        f"dp_suffix n={n_levels} d={d}": lambda m: m.dp_suffix(*dp_args),
        f"ising_eval_mod L={L}": lambda m: m.ising_eval_mod(L, p, w, 2, npts),
        f"interp_forward_mod L={L}": lambda m: m.interp_forward_mod(vals, 2, p),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=400)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--L", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels unavailable; only the fallback can run")
    print(f"{'kernel':32s} {'numpy (s)':>12s} {'cython (s)':>12s} {'speedup':>9s}")
    for name, fn in cases(args.levels, args.d, args.L).items():
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{name:32s} {t_py:12.4f} {'-':>12s} {'-':>9s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
        same = np.allclose(np.asarray(fn(_fallback)), np.asarray(fn(_kernels)), rtol=1e-12)
        print(f"{name:32s} {t_py:12.4f} {t_c:12.4f} {t_py / t_c:8.1f}x{'' if same else '  MISMATCH'}")


if __name__ == "__main__":
    main()
