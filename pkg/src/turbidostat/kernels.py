"""Backend selection for the integration kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``TURBIDOSTAT_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("TURBIDOSTAT_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as _impl

        BACKEND = "python"

rk4_advance = _impl.rk4_advance
rk4_advance_noisy = _impl.rk4_advance_noisy
simulate_rates = _impl.simulate_rates
mpc_costs = _impl.mpc_costs
open_loop_sse = _impl.open_loop_sse
kalman_nll = _impl.kalman_nll

__all__ = [
    "BACKEND",
    "rk4_advance",
    "rk4_advance_noisy",
    "simulate_rates",
    "mpc_costs",
    "open_loop_sse",
    "kalman_nll",
]
