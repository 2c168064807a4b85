"""Open-loop identification of the growth model.

The experiment grows the culture undisturbed, dilutes at the maximum
pump rate until OD drops below a threshold, then holds random pump
rates for fixed blocks. ``fit_parameters`` recovers (mu, tau) by
output-error least squares over one or more such records.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .model import NOMINAL_TEMP_C, U_MAX, GrowthParams, SimState, measure, step_zoh
from .trajectory import Trajectory


class IdentifiabilityError(ValueError):
    """Data cannot pin down both growth rate and dilution scale."""


@dataclass(frozen=True)
class Phase:
    """One protocol phase.

    kind is ``"fixed"`` (hold ``u``), ``"dilute"`` (hold ``u`` until
    measured OD < ``threshold``, at most ``duration`` min) or ``"random"``
    (hold ``levels[i]`` for block i of ``block`` min).
    """

    kind: str
    duration: float
    u: float = 0.0
    threshold: float = 0.0
    levels: tuple[float, ...] = ()
    block: float = 30.0


@dataclass(frozen=True)
class OpenLoopProtocol:
    phases: tuple[Phase, ...]
    seed: int

    def __post_init__(self):
        for ph in self.phases:
            if ph.duration <= 0:
                raise ValueError("phase durations must be > 0")
            us = (ph.u,) + ph.levels
            if any(not 0.0 <= v <= U_MAX for v in us):
                raise ValueError("protocol inputs must lie in [0, 0.02]")


def generate_protocol(
    seed: int,
    grow_min: float = 60.0,
    threshold: float = 0.3,
    random_min: float = 300.0,
    block_min: float = 30.0,
    max_dilute_min: float = 240.0,
) -> OpenLoopProtocol:
    rng = np.random.default_rng(seed)
    n_blocks = math.ceil(random_min / block_min)
    levels = tuple(float(v) for v in rng.uniform(0.0, U_MAX, size=n_blocks))
    return OpenLoopProtocol(
        phases=(
            Phase("fixed", grow_min, u=0.0),
            Phase("dilute", max_dilute_min, u=U_MAX, threshold=threshold),
            Phase("random", random_min, levels=levels, block=block_min),
        ),
        seed=seed,
    )


def run_protocol(
    protocol: OpenLoopProtocol,
    p: GrowthParams,
    x0: float = 0.1,
    seed: int | None = None,
    dt: float = 1.0,
    substep: float = 0.1,
) -> Trajectory:
    """Simulate the protocol on the noisy plant, sampling every ``dt`` min.

    The dilution phase reacts to measured OD, so its length depends on the
    noise realization. ``seed`` defaults to the protocol seed.
    """
    rng = np.random.default_rng(protocol.seed if seed is None else seed)
    s = SimState(x=x0)
    rows = []
    pending = None

    def observe():
        nonlocal pending
        if pending is None:
            pending = measure(s, p, rng)
        return pending

    def tick(u):
        nonlocal s, pending
        rows.append((s.t, s.x, observe(), u))
        pending = None
        s = step_zoh(s, u, p, rng, dt, substep)

    for ph in protocol.phases:
        n = int(round(ph.duration / dt))
        if ph.kind == "fixed":
            for _ in range(n):
                tick(ph.u)
        elif ph.kind == "dilute":
            for _ in range(n):
                if observe() < ph.threshold:
                    break
                tick(ph.u)
        elif ph.kind == "random":
            per_block = int(round(ph.block / dt))
            for k in range(n):
                tick(ph.levels[min(k // per_block, len(ph.levels) - 1)])
        else:
            raise ValueError(f"unknown phase kind {ph.kind!r}")
    rows.append((s.t, s.x, observe(), rows[-1][3] if rows else 0.0))
    t, x, y, u = (np.array(c) for c in zip(*rows))
    nan = np.full(t.size, np.nan)
    return Trajectory(t=t, x_true=x, y_meas=y, setpoint=nan, u=u, temp_c=np.full(t.size, NOMINAL_TEMP_C))


@dataclass(frozen=True)
class FitResult:
    mu_hat: float
    tau_hat: float
    residual_sse: float
    pmse_percent: float
    x0_hat: tuple[float, ...] = ()

    def to_text(self) -> str:
        return (
            f"mu_hat = {self.mu_hat!r}\n"
            f"tau_hat = {self.tau_hat!r}\n"
            f"residual_sse = {self.residual_sse!r}\n"
            f"pmse_percent = {self.pmse_percent!r}\n"
        )


def _grid(traj: Trajectory, substep: float = 0.1) -> tuple[float, int]:
    d = np.diff(traj.t)
    if d.size == 0 or not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
        raise IdentifiabilityError("trajectory must be sampled on a uniform time grid")
    n = max(1, int(round(d[0] / substep)))
    return float(d[0]) / n, n


def predict_od(traj: Trajectory, mu: float, tau: float, x0: float | None = None, alpha: float = 1.0) -> np.ndarray:
    """Noise-free model output replaying the recorded inputs.

    Starts from ``x0`` or, by default, from the first measured sample.
    """
    if x0 is None:
        x0 = float(traj.y_meas[0]) / alpha
    if len(traj) == 1:
        return np.array([min(max(alpha * x0, 0.0), 1.0)])
    h, n = _grid(traj)
    rates = mu - traj.u[:-1] / tau
    x = kernels.simulate_rates(x0, np.ascontiguousarray(rates), h, n)
    return np.clip(alpha * x, 0.0, 1.0)


def model_trajectory(traj: Trajectory, mu: float, tau: float, x0: float | None = None) -> Trajectory:
    y = predict_od(traj, mu, tau, x0)
    return Trajectory(t=traj.t, x_true=y, y_meas=y, setpoint=traj.setpoint, u=traj.u, temp_c=traj.temp_c)


def _check_identifiable(trajs: list[Trajectory]):
    for tr in trajs:
        if len(tr) < 20:
            raise IdentifiabilityError(f"need at least 20 samples per record, got {len(tr)}")
    u_all = np.concatenate([tr.u[:-1] for tr in trajs])
    y_all = np.concatenate([tr.y_meas for tr in trajs])
    if np.unique(u_all).size < 2:
        raise IdentifiabilityError("inputs take a single level; growth rate and dilution scale are confounded")
    if np.ptp(y_all) == 0:
        raise IdentifiabilityError("OD is constant")


def fit_parameters(
    data: Trajectory | list[Trajectory],
    init_guess: tuple[float, float] = (0.0231, 0.4),
    grid_size: int = 5,
    grid_span: float = 3.0,
    fit_initial: bool = True,
    noise: tuple[float, float] | None = None,
) -> FitResult:
    """Least-squares (mu, tau) over all records.

    Nelder-Mead in log-parameter space from a ``grid_size`` x ``grid_size``
    grid spanning ``init / grid_span`` to ``init * grid_span``; the best
    local optimum wins, earliest start on ties.

    By default the objective is the output error of a noise-free replay;
    with ``fit_initial`` each record's starting density is solved in closed
    form at every (mu, tau) instead of being taken from the noisy first
    sample. Passing ``noise=(process_noise_sd, meas_noise_sd)`` with any
    nonzero entry switches to the prediction error of a Kalman filter
    (Gaussian likelihood of the innovations), which does not mistake the
    multiplicative random walk of the culture for a parameter offset.
    """
    trajs = [data] if isinstance(data, Trajectory) else list(data)
    if not trajs:
        raise IdentifiabilityError("no data")
    _check_identifiable(trajs)
    prepared = [(np.ascontiguousarray(tr.y_meas), np.ascontiguousarray(tr.u)) + _grid(tr) for tr in trajs]

    use_kf = noise is not None and (noise[0] > 0 or noise[1] > 0)
    if use_kf:
        r_var = max(noise[1] ** 2, 1e-12)

        def objective(theta):
            mu, tau = math.exp(theta[0]), math.exp(theta[1])
            total = sum(kernels.kalman_nll(y, u, mu, tau, 1.0, h, n, n * noise[0] ** 2, r_var)
                        for y, u, h, n in prepared)
            return total if math.isfinite(total) else 1e300
    else:

        def objective(theta):
            mu, tau = math.exp(theta[0]), math.exp(theta[1])
            total = sum(kernels.open_loop_sse(y, u, mu, tau, 1.0, h, n, fit_initial)[0]
                        for y, u, h, n in prepared)
            return total if math.isfinite(total) else 1e300

    with np.errstate(over="ignore", invalid="ignore"):
        best = None
        offsets = np.linspace(-math.log(grid_span), math.log(grid_span), grid_size)
        for a in offsets:
            for b in offsets:
                start = np.array([math.log(init_guess[0]) + a, math.log(init_guess[1]) + b])
                res = minimize(objective, start, method="Nelder-Mead",
                               options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 2000})
                if best is None or res.fun < best.fun:
                    best = res
    mu_hat, tau_hat = (math.exp(v) for v in best.x)
    fits = [kernels.open_loop_sse(y, u, mu_hat, tau_hat, 1.0, h, n, fit_initial) for y, u, h, n in prepared]
    x0s = tuple(x0 for _, x0 in fits)
    model = [model_trajectory(tr, mu_hat, tau_hat, x0) for tr, x0 in zip(trajs, x0s)]
    pm = pmse(_concat(model), _concat(trajs))
    return FitResult(mu_hat=mu_hat, tau_hat=tau_hat, residual_sse=sum(v for v, _ in fits),
                     pmse_percent=pm, x0_hat=x0s)


def _concat(trajs: list[Trajectory]) -> Trajectory:
    if len(trajs) == 1:
        return trajs[0]
    t = np.arange(sum(len(tr) for tr in trajs), dtype=float)
    return Trajectory(t=t, x_true=np.concatenate([tr.x_true for tr in trajs]),
                      y_meas=np.concatenate([tr.y_meas for tr in trajs]),
                      setpoint=np.concatenate([tr.setpoint for tr in trajs]),
                      u=np.concatenate([tr.u for tr in trajs]),
                      temp_c=np.concatenate([tr.temp_c for tr in trajs]))


def pmse(model_traj: Trajectory, data_traj: Trajectory) -> float:
    """Percentage mean squared error, normalized by the mean squared data value."""
    if not model_traj.same_grid(data_traj):
        raise ValueError("model and data trajectories are on different time grids")
    y, d = model_traj.y_meas, data_traj.y_meas
    den = float(np.mean(d * d))
    if den == 0:
        raise ValueError("data is identically zero; PMSE undefined")
    return 100.0 * float(np.mean((y - d) ** 2)) / den
