"""Closed-loop experiment protocols and tracking metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .controllers import SETPOINT_MAX, SETPOINT_MIN, Controller, ControllerError
from .model import NOMINAL_TEMP_C, GrowthParams, SimState, measure, step_zoh
from .trajectory import Trajectory

DEFAULT_SEEDS = (1, 2, 3)


@dataclass(frozen=True)
class Segment:
    duration: float
    setpoint: float
    temp_c: float = NOMINAL_TEMP_C
    label: str = ""


@dataclass(frozen=True)
class ExperimentSchedule:
    name: str
    segments: tuple[Segment, ...]
    initial_od: float = 0.6
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        for seg in self.segments:
            if seg.duration <= 0:
                raise ValueError("segment durations must be > 0")
            if not SETPOINT_MIN <= seg.setpoint <= SETPOINT_MAX:
                raise ValueError(f"setpoint {seg.setpoint} outside [0.2, 1]")

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def boundaries(self) -> list[tuple[float, float]]:
        out, t = [], 0.0
        for seg in self.segments:
            out.append((t, t + seg.duration))
            t += seg.duration
        return out

    def segment_at(self, t: float) -> Segment:
        for seg, (a, b) in zip(self.segments, self.boundaries()):
            if a <= t < b:
                return seg
        return self.segments[-1]


def staircase(initial_od: float = 0.6, seeds=DEFAULT_SEEDS, minutes: float = 30.0) -> ExperimentSchedule:
    """Setpoint 0.8, then 0.65, then 0.5, each held ``minutes`` at 37 C."""
    return ExperimentSchedule(
        "staircase",
        tuple(Segment(minutes, sp, NOMINAL_TEMP_C, f"ref {sp:g}") for sp in (0.8, 0.65, 0.5)),
        initial_od=initial_od, seeds=tuple(seeds),
    )


def tempstep(initial_od: float = 0.6, seeds=DEFAULT_SEEDS, minutes: float = 30.0) -> ExperimentSchedule:
    """Setpoint 0.5 at 37 C, switching to 30 C after ``minutes``."""
    return ExperimentSchedule(
        "tempstep",
        (Segment(minutes, 0.5, 37.0, "temp 37"), Segment(minutes, 0.5, 30.0, "temp 30")),
        initial_od=initial_od, seeds=tuple(seeds),
    )


SCHEDULES: dict[str, Callable[..., ExperimentSchedule]] = {"staircase": staircase, "tempstep": tempstep}


def run_experiment(schedule: ExperimentSchedule, controller: Controller, p: GrowthParams,
                   seed: int, dt: float = 1.0, substep: float = 0.1) -> Trajectory:
    """Closed loop at ``dt`` cadence: measure, decide, hold the input for one interval.

    Returns ``duration / dt + 1`` samples; the last sample's input is the
    decision the controller would apply next.
    """
    rng = np.random.default_rng(seed)
    n = int(round(schedule.duration / dt))
    s = SimState(x=schedule.initial_od, t=0.0, temp_c=schedule.segments[0].temp_c)
    rows = []
    for k in range(n + 1):
        seg = schedule.segment_at(k * dt)
        s = SimState(x=s.x, t=k * dt, temp_c=seg.temp_c)
        y = measure(s, p, rng)
        try:
            u = controller.step(y, seg.setpoint)
        except ControllerError as exc:
            raise ControllerError(f"{controller.name} failed at t={s.t:g} min: {exc}") from exc
        rows.append((s.t, s.x, y, seg.setpoint, u, seg.temp_c))
        if k < n:
            s = step_zoh(s, u, p, rng, dt, substep)
    cols = [np.array(c) for c in zip(*rows)]
    return Trajectory(*cols)


# -- metrics -----------------------------------------------------------------

def _window(traj: Trajectory, start: float | None, stop: float | None):
    t = traj.t
    lo = t[0] if start is None else start
    hi = t[-1] if stop is None else stop
    idx = np.nonzero((t >= lo - 1e-9) & (t < hi - 1e-9))[0]
    if idx.size == 0:
        raise ValueError("empty metric window")
    dt = np.diff(t)
    dt = np.append(dt, dt[-1] if dt.size else 1.0)
    return idx, dt[idx], hi - lo


def ise(traj: Trajectory, setpoint=None, start: float | None = None, stop: float | None = None) -> float:
    """Time-averaged squared error, left-endpoint rule over ``[start, stop)``."""
    sp = traj.setpoint if setpoint is None else np.broadcast_to(np.asarray(setpoint, float), traj.t.shape)
    idx, step, T = _window(traj, start, stop)
    e = sp[idx] - traj.y_meas[idx]
    return float(np.sum(e * e * step) / T)


def itae(traj: Trajectory, setpoint=None, start: float | None = None, stop: float | None = None) -> float:
    """Time-averaged time-weighted absolute error.

    Time is measured from the start of the run. The error is held over each
    sample interval and the time weight integrated exactly over it.
    """
    sp = traj.setpoint if setpoint is None else np.broadcast_to(np.asarray(setpoint, float), traj.t.shape)
    idx, step, T = _window(traj, start, stop)
    tau = traj.t[idx] - traj.t[0] + 0.5 * step
    return float(np.sum(tau * np.abs(sp[idx] - traj.y_meas[idx]) * step) / T)


def settling_time(traj: Trajectory, setpoint: float, band: float = 0.05,
                  start: float | None = None, stop: float | None = None) -> float:
    """Minutes from ``start`` until |y - setpoint| stays below ``band * setpoint``.

    Returns ``inf`` if the output is outside the band at the last sample.
    """
    idx, _, _ = _window(traj, start, stop)
    inside = np.abs(traj.y_meas[idx] - setpoint) < band * setpoint
    if not inside[-1]:
        return float("inf")
    outside = np.nonzero(~inside)[0]
    first = 0 if outside.size == 0 else outside[-1] + 1
    return float(traj.t[idx[first]] - traj.t[idx[0]])


@dataclass
class ReplicateStats:
    t: np.ndarray
    y_mean: np.ndarray
    y_sd: np.ndarray
    u_mean: np.ndarray
    u_sd: np.ndarray


def replicate_stats(trajs: Sequence[Trajectory]) -> ReplicateStats:
    """Pointwise mean and population sd of OD and input across replicates."""
    if not trajs:
        raise ValueError("no replicates")
    for tr in trajs[1:]:
        if not tr.same_grid(trajs[0]):
            raise ValueError("replicates are on different time grids")
    y = np.stack([tr.y_meas for tr in trajs])
    u = np.stack([tr.u for tr in trajs])
    return ReplicateStats(trajs[0].t, y.mean(0), y.std(0), u.mean(0), u.std(0))


@dataclass(frozen=True)
class MetricRow:
    controller: str
    schedule: str
    segment: str
    metric: str
    values: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def sd(self) -> float:
        return float(np.std(self.values))


def segment_metrics(controller: str, schedule: ExperimentSchedule,
                    trajs: Sequence[Trajectory]) -> list[MetricRow]:
    """ISE and ITAE per segment and for the whole run, one value per replicate."""
    rows = []
    windows = [(seg.label or f"segment {i}", a, b)
               for i, (seg, (a, b)) in enumerate(zip(schedule.segments, schedule.boundaries()))]
    windows.append(("whole run", 0.0, schedule.duration))
    for label, a, b in windows:
        for name, fn in (("ISE", ise), ("ITAE", itae)):
            rows.append(MetricRow(controller, schedule.name, label, name,
                                  tuple(fn(tr, start=a, stop=b) for tr in trajs)))
    return rows


def run_replicates(schedule: ExperimentSchedule, make_controller: Callable[[], Controller],
                   p: GrowthParams) -> list[Trajectory]:
    out = []
    for seed in schedule.seeds:
        ctrl = make_controller()
        ctrl.reset()
        out.append(run_experiment(schedule, ctrl, p, seed))
    return out


def metrics_csv(rows: Sequence[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["controller", "schedule", "segment", "metric", "mean", "sd"])
    for r in rows:
        w.writerow([r.controller, r.schedule, r.segment, r.metric, repr(r.mean), repr(r.sd)])
    return buf.getvalue()


TABLE_ROWS = (
    ("Reference 0.8", "staircase", "ref 0.8"),
    ("Reference 0.65", "staircase", "ref 0.65"),
    ("Reference 0.5", "staircase", "ref 0.5"),
    ("Temperature 37C", "tempstep", "temp 37"),
    ("Temperature 30C", "tempstep", "temp 30"),
)


@dataclass
class ComparisonTable:
    """Mean metric per (condition, metric, controller).

    Conditions form row groups, controllers the columns."""

    controllers: tuple[str, ...]
    cells: dict[tuple[str, str, str], float]
    rows: list[MetricRow]

    def value(self, condition: str, metric: str, controller: str) -> float:
        return self.cells[(condition, metric, controller)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["condition", "metric"] + [c.upper() for c in self.controllers])
        for cond, _, _ in TABLE_ROWS:
            for metric in ("ISE", "ITAE"):
                w.writerow([cond, metric] + [repr(self.cells[(cond, metric, c)]) for c in self.controllers])
        return buf.getvalue()

    def to_text(self) -> str:
        cols = [c.upper() for c in self.controllers]
        lines = [f"{'':<18}{'':<6}" + "".join(f"{c:>10}" for c in cols)]
        for cond, _, _ in TABLE_ROWS:
            lines.append(cond)
            for metric in ("ISE", "ITAE"):
                fmt = "{:>10.4f}" if metric == "ISE" else "{:>10.2f}"
                lines.append(f"{'':<18}{metric:<6}" + "".join(
                    fmt.format(self.cells[(cond, metric, c)]) for c in self.controllers))
        return "\n".join(lines) + "\n"


def compare(factories: Mapping[str, Callable[[], Controller]], p: GrowthParams,
            schedules: Mapping[str, ExperimentSchedule] | None = None,
            trajectories: dict | None = None) -> ComparisonTable:
    """Run every controller on every schedule and average metrics over replicates.

    If ``trajectories`` is a dict it is filled with
    ``(controller, schedule) -> [Trajectory, ...]``.
    """
    schedules = schedules or {"staircase": staircase(), "tempstep": tempstep()}
    rows: list[MetricRow] = []
    for name, factory in factories.items():
        for sname, sched in schedules.items():
            try:
                trajs = run_replicates(sched, factory, p)
            except Exception as exc:
                raise RuntimeError(f"cell ({name}, {sname}) failed: {exc}") from exc
            if trajectories is not None:
                trajectories[(name, sname)] = trajs
            rows.extend(segment_metrics(name, sched, trajs))
    cells = {}
    for cond, sname, seg in TABLE_ROWS:
        for r in rows:
            if r.schedule == sname and r.segment == seg:
                cells[(cond, r.metric, r.controller)] = r.mean
    return ComparisonTable(tuple(factories), cells, rows)
