"""Command-line entry point.

Exit codes: 0 success, 2 config or parse error, 3 numeric failure,
4 missing artifact. Every command loads and validates the config before
touching the output directory.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .calibration import IdentifiabilityError, fit_parameters, generate_protocol, run_protocol
from .config import ConfigError, RunConfig, load_config
from .controllers import ControllerError, MPCController, PIController
from .dqn import DQNController, NetworkFormatError, TrainingError, load_network, save_network, train
from .model import ModelError, growth_factor
from .trajectory import ParseError, Trajectory

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4
CONTROLLERS = ("dqn", "pi", "mpc")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _qnet_path(args) -> Path:
    return Path(args.qnet) if args.qnet else Path(args.out) / "qnet.txt"


def _load_qnet(args):
    path = _qnet_path(args)
    if not path.is_file():
        raise CliError(f"trained network not found at {path}; run 'turbidostat train' first", EXIT_MISSING)
    try:
        return load_network(path)
    except NetworkFormatError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def controller_factory(name: str, cfg: RunConfig, net=None):
    if name == "pi":
        s = cfg.pi
        return lambda: PIController(kp=s.kp, ki1=s.ki1, ki2=s.ki2, slow_ratio=s.slow_ratio)
    if name == "mpc":
        mpc = cfg.mpc_for()
        return lambda: MPCController(mpc)
    if name == "dqn":
        return lambda: DQNController(net)
    raise ValueError(f"unknown controller {name!r}")


def _schedule(name: str, cfg: RunConfig):
    b = cfg.bench
    return bench.SCHEDULES[name](initial_od=b.initial_od, seeds=b.seeds, minutes=b.segment_min)


def _check_simulate_args(args, cfg: RunConfig):
    try:
        bench.ExperimentSchedule("check", (bench.Segment(args.minutes, args.setpoint, args.temp),),
                                 initial_od=args.initial_od)
        growth_factor(cfg.growth, args.temp)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    if not 0 < args.initial_od <= 1:
        raise CliError("--initial-od must lie in (0, 1]", EXIT_CONFIG)


# -- commands ----------------------------------------------------------------

def cmd_calibrate(args, cfg: RunConfig) -> int:
    if args.synthesize is None and args.data is None:
        raise CliError("calibrate needs a data CSV or --synthesize SEED", EXIT_CONFIG)
    if args.synthesize is not None and args.data is not None:
        raise CliError("give either a data CSV or --synthesize SEED, not both", EXIT_CONFIG)
    if args.data is not None:
        path = Path(args.data)
        if not path.is_file():
            raise CliError(f"data file not found: {path}", EXIT_MISSING)
        if not path.read_text().strip():
            raise IdentifiabilityError(f"{path}: no data")
        data = Trajectory.from_csv(path)
    out = _out_dir(args)
    if args.synthesize is not None:
        data = run_protocol(generate_protocol(args.synthesize), cfg.growth)
        data.to_csv(out / "openloop.csv")
    g = cfg.growth
    noise = (g.process_noise_sd, g.meas_noise_sd)
    fit = fit_parameters(data, noise=noise)
    (out / "fit.txt").write_text(fit.to_text())
    calibrated = replace(cfg, growth=g.with_updates(mu=fit.mu_hat, tau=fit.tau_hat))
    (out / "calibrated.cfg").write_text(calibrated.to_text())
    sys.stdout.write(fit.to_text())
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    res = train(cfg.growth, cfg.dqn)
    qnet = _qnet_path(args)
    qnet.parent.mkdir(parents=True, exist_ok=True)
    save_network(res.net, qnet)
    (out / "rewards.csv").write_text(res.rewards_csv())
    r = res.episode_rewards
    w = min(10, len(r))
    first, last = sum(r[:w]) / w, sum(r[-w:]) / w
    print(f"episodes = {len(r)}")
    print(f"first{w}_mean_reward = {first!r}")
    print(f"last{w}_mean_reward = {last!r}")
    if not res.improved(w):
        print(f"error: training did not converge: mean reward of the last {w} episodes ({last:.6g}) "
              f"does not exceed that of the first {w} ({first:.6g})", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    net = _load_qnet(args) if args.controller == "dqn" else None
    sched = bench.ExperimentSchedule(
        "simulate", (bench.Segment(args.minutes, args.setpoint, args.temp),),
        initial_od=args.initial_od, seeds=(args.seed,))
    out = _out_dir(args)
    ctrl = controller_factory(args.controller, cfg, net)()
    traj = bench.run_experiment(sched, ctrl, cfg.growth, args.seed)
    traj.to_csv(out / f"simulate_{args.controller}.csv")
    print(f"ise = {bench.ise(traj)!r}")
    print(f"itae = {bench.itae(traj)!r}")
    print(f"settling_time_min = {bench.settling_time(traj, args.setpoint)!r}")
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    net = _load_qnet(args) if args.controller == "dqn" else None
    sched = _schedule(args.schedule, cfg)
    out = _out_dir(args)
    trajs = bench.run_replicates(sched, controller_factory(args.controller, cfg, net), cfg.growth)
    stem = f"{args.controller}_{args.schedule}"
    for seed, tr in zip(sched.seeds, trajs):
        tr.to_csv(out / f"{stem}_seed{seed}.csv")
    rows = bench.segment_metrics(args.controller, sched, trajs)
    text = bench.metrics_csv(rows)
    (out / f"{stem}_metrics.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    net = _load_qnet(args)
    schedules = {name: _schedule(name, cfg) for name in bench.SCHEDULES}
    out = _out_dir(args)
    factories = {name: controller_factory(name, cfg, net) for name in CONTROLLERS}
    table = bench.compare(factories, cfg.growth, schedules)
    (out / "compare.csv").write_text(table.to_csv())
    (out / "compare.txt").write_text(table.to_text())
    sys.stdout.write(table.to_text())
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--seed", type=int, default=1, metavar="N", help="training / simulation seed (default 1)")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory (default: current)")

    parser = argparse.ArgumentParser(prog="turbidostat", description="Turbidostat OD control toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("calibrate", parents=[common], help="fit mu and tau to open-loop data")
    p.add_argument("data", nargs="?", help="CSV with time_min, od (or od_meas), pump_rate")
    p.add_argument("--synthesize", type=int, metavar="SEED",
                   help="simulate the open-loop protocol with this seed and fit that instead")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", parents=[common], help="train the DQN controller on the simulator")
    p.add_argument("--qnet", metavar="PATH", help="network file to write (default OUT/qnet.txt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", parents=[common], help="one closed-loop run at a fixed setpoint")
    p.add_argument("controller", choices=CONTROLLERS)
    p.add_argument("--setpoint", type=float, default=0.5)
    p.add_argument("--minutes", type=float, default=60.0)
    p.add_argument("--initial-od", type=float, default=0.8)
    p.add_argument("--temp", type=float, default=37.0, help="degC")
    p.add_argument("--qnet", metavar="PATH", help="network file (default OUT/qnet.txt)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], help="replicated runs of one controller on one schedule")
    p.add_argument("controller", choices=CONTROLLERS)
    p.add_argument("schedule", choices=tuple(bench.SCHEDULES))
    p.add_argument("--qnet", metavar="PATH", help="network file (default OUT/qnet.txt)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", parents=[common], help="DQN / PI / MPC metric table on both schedules")
    p.add_argument("--qnet", metavar="PATH", help="network file (default OUT/qnet.txt)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = replace(cfg, dqn=replace(cfg.dqn, seed=args.seed))
        if args.command == "simulate":
            _check_simulate_args(args, cfg)
        return args.func(args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IdentifiabilityError, TrainingError, ModelError, ControllerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
