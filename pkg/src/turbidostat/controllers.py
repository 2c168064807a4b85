"""Pump-rate controllers sharing one step contract.

Every controller maps (measured OD, setpoint) to a pump rate clamped to
the pump limits. ``PIController`` and ``MPCController`` are the baselines;
the learned controller lives in :mod:`turbidostat.dqn`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .model import NOMINAL_TEMP_C, U_MAX, U_MIN, GrowthParams, growth_factor
from .pso import PsoConfig, PsoError, pso_minimize

SETPOINT_MIN = 0.2
SETPOINT_MAX = 1.0


class ControllerError(ValueError):
    pass


def clamp_input(u: float) -> float:
    return min(max(float(u), U_MIN), U_MAX)


class Controller:
    """Base class; subclasses implement ``_raw``."""

    name = "controller"

    def step(self, y_meas: float, setpoint: float) -> float:
        if not SETPOINT_MIN - 1e-12 <= setpoint <= SETPOINT_MAX + 1e-12:
            raise ControllerError(f"setpoint {setpoint} outside [{SETPOINT_MIN}, {SETPOINT_MAX}]")
        if not 0.0 <= y_meas <= 1.0:
            raise ControllerError(f"measured OD {y_meas} outside [0, 1]")
        return clamp_input(self._raw(y_meas, setpoint))

    def reset(self):
        pass

    def _raw(self, y_meas: float, setpoint: float) -> float:
        raise NotImplementedError


# -- PI ---------------------------------------------------------------------

@dataclass(frozen=True)
class PiState:
    """Gains and integrator states.

    The second integrator accumulates the error at ``slow_ratio`` of the
    rate of the first; it acts as a slow bias estimator for pump offsets.
    """

    kp: float = 0.3
    ki1: float = 0.04
    ki2: float = 0.01
    slow_ratio: float = 0.1
    integral1: float = 0.0
    integral2: float = 0.0
    saturated: bool = False


def pi_step(state: PiState, y_meas: float, setpoint: float, dt: float = 1.0) -> tuple[float, PiState]:
    """One PI update with conditional integration.

    The error is ``y - setpoint`` so that a culture above target increases
    dilution. Integrators hold whenever the output would saturate.
    """
    if dt <= 0:
        raise ControllerError("dt must be > 0")
    e = y_meas - setpoint
    i1 = state.integral1 + e * dt
    i2 = state.integral2 + state.slow_ratio * e * dt
    u = state.kp * e + state.ki1 * i1 + state.ki2 * i2
    saturated = not U_MIN <= u <= U_MAX
    if saturated:
        i1, i2 = state.integral1, state.integral2
        u = state.kp * e + state.ki1 * i1 + state.ki2 * i2
    return clamp_input(u), replace(state, integral1=i1, integral2=i2, saturated=saturated)


class PIController(Controller):
    name = "pi"

    def __init__(self, kp: float = 0.3, ki1: float = 0.04, ki2: float = 0.01,
                 slow_ratio: float = 0.1, dt: float = 1.0):
        self.initial = PiState(kp=kp, ki1=ki1, ki2=ki2, slow_ratio=slow_ratio)
        self.state = self.initial
        self.dt = dt

    def reset(self):
        self.state = self.initial

    def _raw(self, y_meas, setpoint):
        u, self.state = pi_step(self.state, y_meas, setpoint, self.dt)
        return u


# -- MPC --------------------------------------------------------------------

@dataclass(frozen=True)
class MpcConfig:
    horizon_steps: int = 5
    penalty: float = 100.0
    model: GrowthParams = field(default_factory=GrowthParams)
    swarm_size: int = 30
    iterations: int = 40
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    search_lower: float = -0.005
    search_upper: float = 0.025
    warm_start: bool = True
    seed_bounds: bool = True
    dt: float = 1.0
    substep: float = 0.1
    temp_c: float = NOMINAL_TEMP_C
    seed: int = 0

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if self.penalty <= 0:
            raise ValueError("penalty must be > 0")

    def pso_config(self) -> PsoConfig:
        n = self.horizon_steps
        return PsoConfig(lower=(self.search_lower,) * n, upper=(self.search_upper,) * n,
                         swarm_size=self.swarm_size, iterations=self.iterations,
                         inertia=self.inertia, cognitive=self.cognitive, social=self.social,
                         seed=self.seed)


def _substeps(cfg: MpcConfig) -> tuple[float, int]:
    n = max(1, int(round(cfg.dt / cfg.substep)))
    return cfg.dt / n, n


def mpc_cost_batch(useq: np.ndarray, x0: float, setpoint: float, cfg: MpcConfig) -> np.ndarray:
    """Finite-horizon cost of each candidate input sequence (rows of ``useq``)."""
    h, n = _substeps(cfg)
    growth = cfg.model.mu * growth_factor(cfg.model, cfg.temp_c)
    useq = np.ascontiguousarray(np.atleast_2d(useq), dtype=np.float64)
    return kernels.mpc_costs(useq, float(x0), float(setpoint), growth, cfg.model.tau,
                             h, n, cfg.penalty, U_MIN, U_MAX)


def mpc_cost(u_seq, x0: float, setpoint: float, cfg: MpcConfig | None = None) -> float:
    """Sum over the horizon of squared tracking error (or the penalty when the
    input is outside the pump limits) plus the terminal squared error."""
    cfg = cfg or MpcConfig()
    u_seq = np.asarray(u_seq, dtype=np.float64)
    if u_seq.shape != (cfg.horizon_steps,):
        raise ValueError(f"input sequence must have length {cfg.horizon_steps}")
    return float(mpc_cost_batch(u_seq[None, :], x0, setpoint, cfg)[0])


class MPCController(Controller):
    """Receding-horizon controller solved with particle swarm each step.

    With ``warm_start`` the previous plan, shifted by one step, seeds the
    first particle. With ``seed_bounds`` two more particles start at the
    constant minimum and maximum pump-rate plans, so a saturated optimum on
    the feasibility edge is represented exactly.
    """

    name = "mpc"

    def __init__(self, cfg: MpcConfig | None = None):
        self.cfg = cfg or MpcConfig()
        self._pso = self.cfg.pso_config()
        self.reset()

    def reset(self):
        self.rng = np.random.default_rng(self.cfg.seed)
        self.plan = None
        self.last_value = None

    def _raw(self, y_meas, setpoint):
        rows = []
        if self.cfg.warm_start and self.plan is not None:
            rows.append(np.append(self.plan[1:], self.plan[-1]))
        if self.cfg.seed_bounds:
            n = self.cfg.horizon_steps
            rows += [np.full(n, U_MIN), np.full(n, U_MAX)]
        initial = np.array(rows) if rows else None
        try:
            res = pso_minimize(lambda z: mpc_cost_batch(z, y_meas, setpoint, self.cfg),
                               self._pso, rng=self.rng, initial=initial)
        except PsoError as exc:
            raise ControllerError(f"MPC optimization failed: {exc}") from exc
        self.plan = res.x
        self.last_value = res.value
        return float(res.x[0])
