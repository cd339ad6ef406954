"""Kernel backend selection.

The compiled extension is used when importable; setting
``THERMOBIN_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("THERMOBIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _fallback

dp_suffix = _impl.dp_suffix
ising_eval_mod = _impl.ising_eval_mod
interp_forward_mod = _impl.interp_forward_mod
interval_scores = _fallback.interval_scores

__all__ = ["BACKEND", "dp_suffix", "ising_eval_mod", "interp_forward_mod", "interval_scores"]
