"""Global-best particle swarm optimization over a box."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class PsoError(RuntimeError):
    pass


@dataclass(frozen=True)
class PsoConfig:
    """Swarm settings. ``lower``/``upper`` give the search box per dimension."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    swarm_size: int = 30
    iterations: int = 40
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if not 0 < self.inertia < 1:
            raise ValueError("inertia must lie in (0, 1)")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise ValueError("lower and upper must be equal-length, non-empty")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ValueError("bounds must be finite with lower < upper")

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass
class PsoResult:
    x: np.ndarray
    value: float
    history: list[float] = field(default_factory=list)


def pso_minimize(objective, cfg: PsoConfig, rng: np.random.Generator | None = None,
                 initial=None, vectorized: bool = True) -> PsoResult:
    """Minimize ``objective`` over the box in ``cfg``.

    With ``vectorized`` the objective maps a (swarm, dim) array to
    (swarm,) values; otherwise it is called per particle. ``initial``
    optionally overrides the first rows of the starting swarm. ``history``
    holds the global-best value after initialization and each iteration.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    lo = np.asarray(cfg.lower, float)
    hi = np.asarray(cfg.upper, float)
    span = hi - lo

    def evaluate(z):
        if vectorized:
            v = np.asarray(objective(z), dtype=float).reshape(-1)
        else:
            v = np.array([float(objective(row)) for row in z])
        if v.shape != (z.shape[0],) or not np.all(np.isfinite(v)):
            raise PsoError("objective returned non-finite or misshaped values")
        return v

    z = lo + rng.random((cfg.swarm_size, cfg.dim)) * span
    if initial is not None:
        init = np.atleast_2d(np.asarray(initial, float))[: cfg.swarm_size]
        z[: init.shape[0]] = np.clip(init, lo, hi)
    v = (rng.random((cfg.swarm_size, cfg.dim)) - 0.5) * 0.2 * span
    f = evaluate(z)
    pbest, pbest_f = z.copy(), f.copy()
    g = int(np.argmin(pbest_f))
    gbest, gbest_f = pbest[g].copy(), float(pbest_f[g])
    history = [gbest_f]

    for _ in range(cfg.iterations):
        r1 = rng.random(z.shape)
        r2 = rng.random(z.shape)
        v = cfg.inertia * v + cfg.cognitive * r1 * (pbest - z) + cfg.social * r2 * (gbest - z)
        z = np.clip(z + v, lo, hi)
        f = evaluate(z)
        better = f < pbest_f
        pbest[better] = z[better]
        pbest_f[better] = f[better]
        g = int(np.argmin(pbest_f))
        if pbest_f[g] < gbest_f:
            gbest, gbest_f = pbest[g].copy(), float(pbest_f[g])
        history.append(gbest_f)
    return PsoResult(x=gbest, value=gbest_f, history=history)
