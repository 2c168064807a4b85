"""One-state growth model of a turbidostat culture.

The culture density follows ``dx/dt = (mu * g(T) - u / tau) * x`` where
``g`` is a temperature growth factor and ``u`` the pump rate, held constant
over each sampling interval. Density is observed as optical density
``y = clamp(alpha * x + noise, 0, 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

U_MIN = 0.0
U_MAX = 0.02
NOMINAL_TEMP_C = 37.0


class ModelError(ValueError):
    """Invalid parameters or a state the simulator cannot represent."""


def _default_temp_factors() -> dict[float, float]:
    return {30.0: 0.9, 37.0: 1.0}


@dataclass(frozen=True)
class GrowthParams:
    """Simulator ground truth.

    ``mu`` is in 1/min, ``tau`` converts pump rate into a dilution rate
    (dilution = u / tau per minute). ``process_noise_sd`` is a
    multiplicative per-substep perturbation of the state and
    ``meas_noise_sd`` an additive OD perturbation.
    """

    mu: float = 0.0231
    tau: float = 0.4
    alpha: float = 1.0
    process_noise_sd: float = 0.002
    meas_noise_sd: float = 0.005
    temp_nominal_c: float = NOMINAL_TEMP_C
    temp_growth_factors: dict[float, float] = field(default_factory=_default_temp_factors)

    def __post_init__(self):
        for name in ("mu", "tau", "alpha"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"{name} must be finite and > 0, got {v!r}")
        for name in ("process_noise_sd", "meas_noise_sd"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ModelError(f"{name} must be finite and >= 0, got {v!r}")
        factors = {float(k): float(v) for k, v in self.temp_growth_factors.items()}
        if factors.get(self.temp_nominal_c) != 1.0:
            raise ModelError("growth factor at the nominal temperature must be exactly 1.0")
        if any(v <= 0 for v in factors.values()):
            raise ModelError("temperature growth factors must be > 0")
        object.__setattr__(self, "temp_growth_factors", dict(sorted(factors.items())))
        max_growth = self.mu * max(factors.values())
        if U_MAX / self.tau <= max_growth:
            raise ModelError(
                f"uncontrollable: max dilution {U_MAX / self.tau:.4g}/min does not exceed "
                f"max growth {max_growth:.4g}/min"
            )

    def with_updates(self, **changes) -> "GrowthParams":
        return replace(self, **changes)

    def noise_free(self) -> "GrowthParams":
        return replace(self, process_noise_sd=0.0, meas_noise_sd=0.0)


def growth_factor(p: GrowthParams, temp_c: float) -> float:
    """Piecewise-linear growth factor between the configured temperature anchors.

    Temperatures outside the anchor range are rejected rather than extrapolated.
    """
    temps = list(p.temp_growth_factors)
    if temp_c in p.temp_growth_factors:
        return p.temp_growth_factors[temp_c]
    if not temps[0] <= temp_c <= temps[-1]:
        raise ModelError(
            f"temperature {temp_c} C outside calibrated range [{temps[0]}, {temps[-1]}]"
        )
    return float(np.interp(temp_c, temps, list(p.temp_growth_factors.values())))


def growth_rhs(x: float, u: float, p: GrowthParams, temp_c: float = NOMINAL_TEMP_C) -> float:
    if x < 0 or u < 0:
        raise ModelError(f"growth_rhs needs x >= 0 and u >= 0, got x={x}, u={u}")
    return (p.mu * growth_factor(p, temp_c) - u / p.tau) * x


def net_rate(u: float, p: GrowthParams, temp_c: float = NOMINAL_TEMP_C) -> float:
    """Specific growth rate ``mu * g(T) - u / tau`` (1/min)."""
    return p.mu * growth_factor(p, temp_c) - u / p.tau


def equilibrium_input(p: GrowthParams, temp_c: float = NOMINAL_TEMP_C) -> float:
    """Pump rate that holds any density constant."""
    u = p.mu * growth_factor(p, temp_c) * p.tau
    if u > U_MAX:
        raise ModelError(f"equilibrium input {u:.5g} exceeds pump limit {U_MAX}")
    return u


@dataclass(frozen=True)
class SimState:
    x: float
    t: float = 0.0
    temp_c: float = NOMINAL_TEMP_C

    def __post_init__(self):
        if not math.isfinite(self.x):
            raise ModelError(f"non-finite state x={self.x!r}")
        if self.x < 0:
            raise ModelError(f"negative density x={self.x}")


def _substeps(dt: float, substep: float) -> int:
    n = round(dt / substep)
    if dt <= 0 or substep <= 0 or n < 1 or abs(n * substep - dt) > 1e-9 * dt:
        raise ModelError(f"substep {substep} must evenly divide dt {dt}")
    return n


def step_zoh(
    s: SimState,
    u: float,
    p: GrowthParams,
    rng: np.random.Generator | None = None,
    dt: float = 1.0,
    substep: float = 0.1,
) -> SimState:
    """Advance ``dt`` minutes with the pump held at ``u``.

    RK4 over ``dt / substep`` substeps; after each substep the density is
    scaled by ``1 + N(0, process_noise_sd)`` and floored at zero. ``rng``
    may be omitted only when process noise is off.
    """
    n = _substeps(dt, substep)
    rate = net_rate(u, p, s.temp_c)
    h = dt / n
    if p.process_noise_sd > 0:
        if rng is None:
            raise ModelError("a random generator is required when process noise is on")
        xi = rng.normal(0.0, p.process_noise_sd, size=n)
        x = kernels.rk4_advance_noisy(s.x, rate, h, xi)
    else:
        x = kernels.rk4_advance(s.x, rate, h, n)
    if not math.isfinite(x):
        raise ModelError(f"state diverged to {x!r}")
    return SimState(x=x, t=s.t + dt, temp_c=s.temp_c)


def measure(s: SimState, p: GrowthParams, rng: np.random.Generator | None = None) -> float:
    y = p.alpha * s.x
    if p.meas_noise_sd > 0:
        if rng is None:
            raise ModelError("a random generator is required when measurement noise is on")
        y += rng.normal(0.0, p.meas_noise_sd)
    return min(max(y, 0.0), 1.0)


def simulate_open_loop(
    x0: float,
    inputs,
    p: GrowthParams,
    temp_c: float = NOMINAL_TEMP_C,
    dt: float = 1.0,
    substep: float = 0.1,
) -> np.ndarray:
    """Noise-free states under a sequence of held inputs; ``len(inputs) + 1`` values."""
    n = _substeps(dt, substep)
    u = np.asarray(inputs, dtype=np.float64)
    rates = p.mu * growth_factor(p, temp_c) - u / p.tau
    return kernels.simulate_rates(float(x0), np.ascontiguousarray(rates), dt / n, n)
