"""Run configuration: flat ``[section]`` blocks of ``key = value`` lines.

Every key is optional and defaults to the library value. Unknown sections
or keys are errors, and all values are range-checked at load time by
constructing the corresponding library objects.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .bench import DEFAULT_SEEDS
from .controllers import MpcConfig
from .dqn import TrainConfig
from .model import NOMINAL_TEMP_C, GrowthParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PiSettings:
    kp: float = 0.3
    ki1: float = 0.04
    ki2: float = 0.01
    slow_ratio: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")


@dataclass(frozen=True)
class BenchSettings:
    initial_od: float = 0.6
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    segment_min: float = 30.0

    def __post_init__(self):
        if not 0 < self.initial_od <= 1:
            raise ValueError("initial_od must lie in (0, 1]")
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if self.segment_min <= 0 or self.segment_min != int(self.segment_min):
            raise ValueError("segment_min must be a positive whole number of minutes")


# key -> (parser, unit comment) per section
_GROWTH_KEYS = {
    "mu": (float, "1/min, maximal specific growth rate at the nominal temperature"),
    "tau": (float, "pump-rate to dilution-rate conversion (dilution = u / tau per min)"),
    "alpha": (float, "OD per unit density"),
    "process_noise_sd": (float, "multiplicative, per 0.1-min substep"),
    "meas_noise_sd": (float, "additive OD units"),
    "temp_low_c": (float, "degC, lower temperature anchor"),
    "temp_low_factor": (float, "growth factor at temp_low_c (1.0 at 37 degC)"),
}
_DQN_KEYS = {
    "episodes": (int, "count"),
    "steps_per_episode": (int, "one-minute steps"),
    "gamma": (float, "discount per step"),
    "lr": (float, "Adam step size"),
    "epsilon_start": (float, "exploration probability"),
    "epsilon_end": (float, "exploration probability"),
    "epsilon_decay_episodes": (int, "episodes of linear decay"),
    "buffer_capacity": (int, "transitions"),
    "batch_size": (int, "transitions per update"),
    "target_sync": (int, "gradient steps between target copies"),
    "reward_scale": (float, "training-only multiplier on the reward"),
    "noisy": (None, "true/false, train on the noisy simulator"),
}
_PI_KEYS = {
    "kp": (float, "pump rate per OD unit"),
    "ki1": (float, "pump rate per OD*min"),
    "ki2": (float, "pump rate per OD*min, slow integrator"),
    "slow_ratio": (float, "slow integrator accumulation rate relative to the fast one"),
}
_MPC_KEYS = {
    "horizon_steps": (int, "one-minute steps"),
    "penalty": (float, "cost per step with an infeasible input"),
    "swarm_size": (int, "particles"),
    "iterations": (int, "swarm iterations per decision"),
    "inertia": (float, "swarm inertia"),
    "cognitive": (float, "swarm personal-best weight"),
    "social": (float, "swarm global-best weight"),
    "search_lower": (float, "pump rate, lower edge of the search box"),
    "search_upper": (float, "pump rate, upper edge of the search box"),
    "warm_start": (None, "true/false, seed the swarm with the shifted previous plan"),
    "seed_bounds": (None, "true/false, seed the swarm with constant min and max plans"),
}
_BENCH_KEYS = {
    "initial_od": (float, "OD at t = 0"),
    "seeds": (None, "comma-separated replicate seeds"),
    "segment_min": (float, "minutes per schedule segment"),
}
SECTIONS = {"growth": _GROWTH_KEYS, "dqn": _DQN_KEYS, "pi": _PI_KEYS,
            "mpc": _MPC_KEYS, "bench": _BENCH_KEYS}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


_SPECIAL = {"noisy": _parse_bool, "warm_start": _parse_bool, "seed_bounds": _parse_bool, "seeds": _parse_seeds}


@dataclass(frozen=True)
class RunConfig:
    growth: GrowthParams = field(default_factory=GrowthParams)
    dqn: TrainConfig = field(default_factory=TrainConfig)
    pi: PiSettings = field(default_factory=PiSettings)
    mpc: MpcConfig = field(default_factory=lambda: MpcConfig(model=GrowthParams().noise_free()))
    bench: BenchSettings = field(default_factory=BenchSettings)

    def mpc_for(self, growth: GrowthParams | None = None) -> MpcConfig:
        """MPC settings with the noise-free growth model as the internal predictor."""
        return replace(self.mpc, model=(growth or self.growth).noise_free())

    def to_text(self) -> str:
        g = self.growth
        temps = [t for t in g.temp_growth_factors if t != g.temp_nominal_c]
        low = temps[0] if temps else 30.0
        values = {
            "growth": {**{k: getattr(g, k) for k in ("mu", "tau", "alpha", "process_noise_sd", "meas_noise_sd")},
                       "temp_low_c": low, "temp_low_factor": g.temp_growth_factors.get(low, 0.9)},
            "dqn": {k: getattr(self.dqn, k) for k in _DQN_KEYS},
            "pi": {k: getattr(self.pi, k) for k in _PI_KEYS},
            "mpc": {k: getattr(self.mpc, k) for k in _MPC_KEYS},
            "bench": {k: getattr(self.bench, k) for k in _BENCH_KEYS},
        }
        lines = []
        for section, keys in SECTIONS.items():
            lines.append(f"[{section}]")
            for key, (_, unit) in keys.items():
                v = values[section][key]
                if isinstance(v, bool):
                    text = "true" if v else "false"
                elif isinstance(v, tuple):
                    text = ", ".join(str(s) for s in v)
                else:
                    text = repr(v)
                lines.append(f"# {unit}")
                lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   default_section="\x00none")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    raw: dict[str, dict[str, object]] = {s: {} for s in SECTIONS}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]; expected one of {', '.join(SECTIONS)}")
        for key, text_value in cp.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            parser = _SPECIAL.get(key) or SECTIONS[section][key][0]
            try:
                raw[section][key] = parser(text_value)
            except ValueError as exc:
                raise ConfigError(f"{source}: [{section}] {key}: {exc}") from None
    return build_config(raw, source)


def build_config(raw: dict[str, dict[str, object]], source: str = "<config>") -> RunConfig:
    section = "growth"
    try:
        g = dict(raw.get("growth", {}))
        low_c = g.pop("temp_low_c", 30.0)
        low_f = g.pop("temp_low_factor", 0.9)
        if low_c >= NOMINAL_TEMP_C:
            raise ValueError("temp_low_c must be below the nominal 37 degC")
        growth = GrowthParams(**g, temp_growth_factors={low_c: low_f, NOMINAL_TEMP_C: 1.0})
        section = "dqn"
        dqn = TrainConfig(**raw.get("dqn", {}))
        section = "pi"
        pi = PiSettings(**raw.get("pi", {}))
        section = "mpc"
        mpc = MpcConfig(**raw.get("mpc", {}), model=growth.noise_free())
        mpc.pso_config()
        section = "bench"
        bench = BenchSettings(**raw.get("bench", {}))
    except ValueError as exc:
        raise ConfigError(f"{source}: [{section}] {exc}") from None
    return RunConfig(growth, dqn, pi, mpc, bench)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
