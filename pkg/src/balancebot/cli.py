"""Command-line entry point: ``balancebot <subcommand> [flags]``.

Every subcommand accepts ``--config``, ``--seed``, ``--out`` and
``--noiseless``. Bad arguments, missing files and invalid configs exit
with status 2; other failures exit with status 1.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, load_config, read_gains, with_noise, write_gains
from .dynamics import RobotState, pitch_transfer_function, poles, yaw_transfer_function
from .errors import BalanceBotError, ConfigError, ModelFormatError
from .harness import compare, settling_time
from .pid import run_pid_episode, tune_pid
from .rl import load_model, run_rl_episode, save_model, train
from .simulation import run_closed_loop, config_hash

USAGE_ERROR = 2


class UsageError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML config file (defaults are used when omitted)")
    p.add_argument("--seed", type=int, help="seed for every random stream (overrides the config)")
    p.add_argument("--out", type=Path, help="output path; see the subcommand help")
    p.add_argument("--noiseless", action="store_true", help="disable simulated sensor noise")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="balancebot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one episode (--out: trajectory file)")
    p.add_argument("--controller", choices=("none", "pid", "rl"), default="none")
    p.add_argument("--phi0", type=float, default=0.05, help="initial pitch in rad")
    p.add_argument("--gains", type=Path, help="gains file for --controller pid")
    p.add_argument("--model", type=Path, help="model file for --controller rl")

    sub.add_parser("tune-pid", parents=[common], help="grid-search PID gains (--out: gains file)")

    p = sub.add_parser("train", parents=[common], help="train the A2C agent (--out: model file)")
    p.add_argument("--episodes", type=int, help="override the configured episode budget")
    p.add_argument("--log", type=Path, help="write per-episode reward and steps here")

    p = sub.add_parser("evaluate", parents=[common], help="greedy runs of a model (--out: trajectory dir)")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--episodes", type=int, default=10)

    p = sub.add_parser("compare", parents=[common], help="PID vs A2C on the grid (--out: report dir)")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--gains", type=Path, help="gains file; tuned on the fly when omitted and unset in config")

    sub.add_parser("analyze-tf", parents=[common], help="print transfer-function coefficients and poles")
    return parser


def _load(args) -> Config:
    cfg = load_config(args.config) if args.config is not None else Config()
    cfg = with_noise(cfg, not args.noiseless)
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed), rl=replace(cfg.rl, seed=args.seed),
                      sensor=replace(cfg.sensor, seed=args.seed),
                      pid=replace(cfg.pid, tune=replace(cfg.pid.tune, seed=args.seed)))
    return cfg


def _require(path: Path | None, what: str) -> Path:
    if path is None or not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _gains(args, cfg: Config):
    if getattr(args, "gains", None) is not None:
        return read_gains(_require(args.gains, "gains file"))
    if cfg.pid.gains is not None:
        return cfg.pid.gains
    return tune_pid(cfg.pid.search, cfg.pid.tune, cfg.physical, cfg.sensor, cfg.sim).best


def _fmt(v) -> str:
    return "unsettled" if v is None else f"{v:.4f}"


def cmd_simulate(args, cfg: Config) -> int:
    initial = RobotState(phi=args.phi0)
    if args.controller == "pid":
        traj = run_pid_episode(initial, _gains(args, cfg), params=cfg.physical, imu=cfg.sensor, sim=cfg.sim,
                               position_loop=cfg.pid.position_loop)
    elif args.controller == "rl":
        model = load_model(_require(args.model, "model file"))
        traj = run_rl_episode(model, initial, cfg.physical, cfg.sensor, cfg.sim)
    else:
        meta = {"controller": "none", "config": config_hash(cfg.physical, cfg.sensor, cfg.sim)}
        traj = run_closed_loop(lambda m: 0.0, initial, cfg.physical, cfg.sensor, cfg.sim, meta=meta)
    if args.out is not None:
        traj.write(args.out)
    print(f"termination {traj.termination}")
    print(f"duration {traj.t[-1]:.3f} s")
    print(f"settling_time {_fmt(settling_time(traj, cfg.harness.band))}")
    print(f"max_abs_phi {np.max(np.abs(traj.phi_true)):.4f}")
    return 0


def cmd_tune(args, cfg: Config) -> int:
    res = tune_pid(cfg.pid.search, cfg.pid.tune, cfg.physical, cfg.sensor, cfg.sim)
    for gains, cost, falls, settle in res.candidates:
        print(f"kp={gains.kp!r} ki={gains.ki!r} kd={gains.kd!r} cost={cost:.6f} falls={falls} "
              f"settle={settle:.4f}")
    print(f"best kp={res.best.kp!r} ki={res.best.ki!r} kd={res.best.kd!r} cost={res.best_cost:.6f}")
    if args.out is not None:
        write_gains(res.best, args.out)
    return 0


def cmd_train(args, cfg: Config) -> int:
    if args.out is None:
        raise UsageError("train needs --out <model file>")
    rl = cfg.rl if args.episodes is None else replace(cfg.rl, n_episodes=args.episodes)
    model, log = train(cfg.physical, cfg.sensor, cfg.sim, rl)
    save_model(model, args.out)
    if args.log is not None:
        with open(args.log, "w") as fh:
            fh.write("episode reward steps termination\n")
            for i, (r, n, term) in enumerate(zip(log.rewards, log.steps, log.terminations)):
                fh.write(f"{i} {r!r} {n} {term}\n")
    print(f"episodes {len(log.rewards)}")
    print(f"last100_ratio {log.recent_ratio():.4f}")
    return 0


def cmd_evaluate(args, cfg: Config) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    model = load_model(_require(args.model, "model file"))
    rng = np.random.default_rng(cfg.sim.seed)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
    settled, falls = [], 0
    for i in range(args.episodes):
        phi0 = float(rng.uniform(-cfg.rl.init_phi, cfg.rl.init_phi))
        traj = run_rl_episode(model, RobotState(phi=phi0), cfg.physical, cfg.sensor, cfg.sim,
                              seed=cfg.sim.seed + i)
        ts = settling_time(traj, cfg.harness.band)
        falls += traj.termination != "horizon"
        if ts is not None:
            settled.append(ts)
        if args.out is not None:
            traj.write(args.out / f"episode_{i:03d}.txt")
        print(f"episode {i} phi0={phi0:+.4f} termination={traj.termination} "
              f"reward={traj.total_reward:.3f} settling={_fmt(ts)}")
    print(f"falls {falls}/{args.episodes}")
    print(f"mean_settling {_fmt(float(np.mean(settled)) if settled else None)}")
    return 0


def cmd_compare(args, cfg: Config) -> int:
    model = load_model(_require(args.model, "model file"))
    gains = _gains(args, cfg)
    h = cfg.harness
    report = compare(gains, model, h.grid, cfg.physical, cfg.sensor, cfg.sim, out_dir=args.out, band=h.band,
                     distance=h.distance, seed=cfg.sim.seed, position_loop=cfg.pid.position_loop)
    print(f"pid gains kp={gains.kp!r} ki={gains.ki!r} kd={gains.kd!r}")
    print(f"{'':14s}{'pid':>12s}{'rl':>12s}{'rl-pid':>12s}")
    for key in ("settling_time", "max_abs_phi", "distance", "falls", "unsettled"):
        a, b = getattr(report.pid, key), getattr(report.rl, key)
        print(f"{key:14s}{a:12.4f}{b:12.4f}{report.deltas[key]:12.4f}")
    return 0


def cmd_analyze_tf(args, cfg: Config) -> int:
    unstable = False
    for name, tf in (("pitch", pitch_transfer_function(cfg.physical)), ("yaw", yaw_transfer_function(cfg.physical))):
        ps = poles(tf)
        print(f"{name} numerator   " + " ".join(f"{c:.10g}" for c in tf.numerator))
        print(f"{name} denominator " + " ".join(f"{c:.10g}" for c in tf.denominator))
        for p, r in zip(ps.poles, ps.residuals):
            print(f"{name} pole {p.real:+.10g} {p.imag:+.10g}j residual {r:.3e}")
        print(f"{name} rhp_poles {ps.unstable_count}")
        unstable |= name == "pitch" and ps.unstable_count > 0
    print("UNSTABLE" if unstable else "STABLE")
    if args.out is not None:
        ps = poles(pitch_transfer_function(cfg.physical))
        tf = pitch_transfer_function(cfg.physical)
        with open(args.out, "w") as fh:
            json.dump({"numerator": list(tf.numerator), "denominator": list(tf.denominator),
                       "poles_real": list(ps.poles.real), "poles_imag": list(ps.poles.imag),
                       "unstable": bool(unstable)}, fh, indent=2)
            fh.write("\n")
    return 0


COMMANDS = {"simulate": cmd_simulate, "tune-pid": cmd_tune, "train": cmd_train, "evaluate": cmd_evaluate,
            "compare": cmd_compare, "analyze-tf": cmd_analyze_tf}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad flags
    try:
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError, ModelFormatError, FileNotFoundError) as exc:
        print(f"balancebot {args.command}: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except BalanceBotError as exc:
        print(f"balancebot {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
