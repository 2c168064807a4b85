"""Time the compiled kernels against the numpy fallback.

Runs each kernel on representative inputs under both backends, then the
two end-to-end hot paths (one MPC decision, one calibration fit) with the
kernel module patched to each backend in turn.

    python3 benchmarks/bench_kernels.py [--repeat N] [--csv PATH]
"""
from __future__ import annotations

import argparse
import csv
import sys
import timeit
from contextlib import contextmanager

import numpy as np

from turbidostat import _pykernels, kernels
from turbidostat.calibration import fit_parameters, generate_protocol, run_protocol
from turbidostat.controllers import MpcConfig, MPCController
from turbidostat.model import GrowthParams

try:
    from turbidostat import _ckernels
except ImportError:
    _ckernels = None

NAMES = ("rk4_advance", "rk4_advance_noisy", "simulate_rates", "mpc_costs", "open_loop_sse", "kalman_nll")


def kernel_cases():
    rng = np.random.default_rng(0)
    u = np.repeat(rng.uniform(0, 0.02, 14), 30)
    rates = 0.0231 - u / 0.4
    y = np.clip(_pykernels.simulate_rates(0.3, rates, 0.1, 10) + rng.normal(0, 0.005, u.size + 1), 0, 1)
    uu = np.append(u, u[-1])
    xi = rng.normal(0, 0.002, 10)
    useq = rng.uniform(-0.005, 0.025, (30, 5))
    return {
        "rk4_advance": ("one 1-min step", lambda k: k.rk4_advance(0.5, 0.003, 0.1, 10)),
        "rk4_advance_noisy": ("one noisy 1-min step", lambda k: k.rk4_advance_noisy(0.5, 0.003, 0.1, xi)),
        "simulate_rates": ("420-step replay", lambda k: k.simulate_rates(0.3, rates, 0.1, 10)),
        "mpc_costs": ("30 plans x 5 steps", lambda k: k.mpc_costs(useq, 0.6, 0.5, 0.0231, 0.4, 0.1, 10,
                                                                  100.0, 0.0, 0.02)),
        "open_loop_sse": ("421-sample output error", lambda k: k.open_loop_sse(y, uu, 0.02, 0.45, 1.0, 0.1,
                                                                               10, True)),
        "kalman_nll": ("421-sample filter", lambda k: k.kalman_nll(y, uu, 0.02, 0.45, 1.0, 0.1, 10,
                                                                   4e-5, 2.5e-5)),
    }


@contextmanager
def patched(module):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(module, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def fmt(seconds) -> str:
    if seconds is None:
        return f"{'-':>12}"
    for unit, scale in (("s", 1.0), ("ms", 1e-3), ("us", 1e-6)):
        if seconds >= scale:
            return f"{seconds / scale:>10.1f}{unit:>2}"
    return f"{seconds / 1e-6:>10.2f}us"


def best_time(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", help="also write the results table here")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend is available", file=sys.stderr)

    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    rows = []
    for name, (what, call) in kernel_cases().items():
        number = 200 if name.startswith("rk4") else 20
        times = {b: best_time(lambda: call(m), args.repeat, number) for b, m in backends.items()}
        rows.append((name, what, times))

    mpc = MPCController(MpcConfig(model=GrowthParams().noise_free()))
    prot = generate_protocol(1)
    p = GrowthParams()
    data = [run_protocol(prot, p, seed=10 + i) for i in range(3)]
    e2e = {
        "mpc_decision": ("one MPC step (30 x 40 swarm)", lambda: (mpc.reset(), mpc.step(0.7, 0.5)), 3),
        "calibration_fit": ("3-record Kalman fit, 25 starts", lambda: fit_parameters(data, noise=(0.002, 0.005)), 1),
    }
    for name, (what, call, number) in e2e.items():
        times = {}
        for b, m in backends.items():
            with patched(m):
                times[b] = best_time(call, max(1, args.repeat // 2), number)
        rows.append((name, what, times))

    header = f"{'case':<20}{'workload':<34}{'python':>12}{'cython':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, what, t in rows:
        py, cy = t["python"], t.get("cython")
        speed = f"{py / cy:>8.1f}x" if cy else f"{'-':>9}"
        print(f"{name:<20}{what:<34}{fmt(py)}{fmt(cy)}{speed}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "workload", "python_s", "cython_s"])
            for name, what, t in rows:
                w.writerow([name, what, repr(t["python"]), repr(t.get("cython", float("nan")))])
    return 0


if __name__ == "__main__":
    sys.exit(main())
