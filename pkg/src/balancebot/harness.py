"""Settling metrics and PID-vs-A2C comparison runs."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import PhysicalParams, RobotState
from .errors import ConfigError, IntegrationDivergedError
from .pid import PidGains, Setpoint, run_pid_episode
from .rl.agent import PolicyModel, run_rl_episode
from .sensing import ImuConfig
from .simulation import SimConfig, Trajectory


def settling_time(traj: Trajectory, band: float = 0.017):
    """First time after which ``|phi_true|`` stays below ``band``.

    Returns None (unsettled) when the episode did not reach its horizon or
    the last sample is outside the band.
    """
    if band <= 0:
        raise ValueError("band must be positive")
    if traj.termination != "horizon":
        return None
    outside = np.flatnonzero(np.abs(traj.phi_true) >= band)
    if outside.size == 0:
        return float(traj.t[0])
    k = outside[-1] + 1
    if k >= len(traj.t):
        return None
    return float(traj.t[k])


DISTANCE_MODES = ("displacement", "path")


def settle_distance(traj: Trajectory, band: float = 0.017, mode: str = "displacement"):
    """Distance covered by the cart up to the settling instant.

    ``displacement`` is ``|x(T_settle)|``; ``path`` integrates ``|x_dot|``
    (trapezoid rule) from the start to ``T_settle``. Returns None when the
    run never settles.
    """
    if mode not in DISTANCE_MODES:
        raise ValueError(f"distance mode must be one of {DISTANCE_MODES}, got {mode!r}")
    ts = settling_time(traj, band)
    if ts is None:
        return None
    k = int(np.searchsorted(traj.t, ts))
    if mode == "displacement":
        return float(abs(traj.x[k]))
    speed = np.abs(traj.x_dot[:k + 1])
    return float(np.sum(0.5 * (speed[1:] + speed[:-1]) * np.diff(traj.t[:k + 1])))


@dataclass
class CellResult:
    """Metrics of one controller on one grid cell (None = unsettled)."""

    phi0: float
    seed: int
    termination: str
    settling_time: float | None
    max_abs_phi: float
    distance: float | None
    file: str


@dataclass
class ControllerSummary:
    """Means over the grid.

    Unsettled cells enter ``settling_time`` with the episode horizon and
    ``distance`` with ``|x|`` at the last sample, so a controller cannot
    improve its means by failing.
    """

    settling_time: float
    max_abs_phi: float
    distance: float
    falls: int
    unsettled: int
    cells: list = field(default_factory=list)


@dataclass
class ComparisonReport:
    grid: list
    band: float
    distance_mode: str
    horizon: float
    pid: ControllerSummary
    rl: ControllerSummary
    deltas: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path) -> "ComparisonReport":
        with open(path) as fh:
            d = json.load(fh)
        for key in ("pid", "rl"):
            d[key]["cells"] = [CellResult(**c) for c in d[key]["cells"]]
            d[key] = ControllerSummary(**d[key])
        return cls(**d)


def cell_metrics(traj: Trajectory, phi0: float, seed: int, band: float, mode: str, file: str) -> CellResult:
    phi = traj.phi_true[np.isfinite(traj.phi_true)]
    return CellResult(phi0=float(phi0), seed=int(seed), termination=traj.termination,
                      settling_time=settling_time(traj, band),
                      max_abs_phi=float(np.max(np.abs(phi))) if phi.size else math.nan,
                      distance=settle_distance(traj, band, mode), file=file)


def summarize(cells: list, trajectories: list, horizon: float) -> ControllerSummary:
    settle = [c.settling_time if c.settling_time is not None else horizon for c in cells]
    dist = [c.distance if c.distance is not None else float(abs(tr.x[-1]))
            for c, tr in zip(cells, trajectories)]
    return ControllerSummary(
        settling_time=float(np.mean(settle)),
        max_abs_phi=float(np.mean([c.max_abs_phi for c in cells])),
        distance=float(np.mean(dist)),
        falls=sum(c.termination != "horizon" for c in cells),
        unsettled=sum(c.settling_time is None for c in cells),
        cells=cells,
    )


def summary_deltas(rl: ControllerSummary, pid: ControllerSummary) -> dict:
    """RL minus PID for every aggregate (negative favours RL)."""
    return {k: getattr(rl, k) - getattr(pid, k)
            for k in ("settling_time", "max_abs_phi", "distance", "falls", "unsettled")}


def _run_cell(run, phi0, seed):
    try:
        return run(RobotState(phi=float(phi0)), seed)
    except IntegrationDivergedError as exc:
        return exc.trajectory


def compare(gains: PidGains, model: PolicyModel, grid, params: PhysicalParams = PhysicalParams(),
            imu: ImuConfig = ImuConfig(), sim: SimConfig = SimConfig(), out_dir=None,
            band: float = 0.017, distance: str = "displacement", seed: int = 0,
            position_loop: bool = False) -> ComparisonReport:
    """Run PID and the greedy policy on every initial pitch in ``grid``.

    Cell ``i`` uses seed ``seed + i`` for both controllers, so the two runs
    see the same sensor-noise stream. With ``out_dir`` each run is written to
    ``{controller}_{i:02d}.txt`` and the report to ``report.json``. A run that
    diverges is kept as a "diverged" cell.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ConfigError("comparison grid is empty")
    if distance not in DISTANCE_MODES:
        raise ConfigError(f"distance must be one of {DISTANCE_MODES}")
    runners = {
        "pid": lambda s0, sd: run_pid_episode(s0, gains, Setpoint(), params, imu, sim, seed=sd,
                                              position_loop=position_loop),
        "rl": lambda s0, sd: run_rl_episode(model, s0, params, imu, sim, seed=sd),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    summaries = {}
    for name, run in runners.items():
        cells, trajs = [], []
        for i, phi0 in enumerate(grid):
            traj = _run_cell(run, phi0, seed + i)
            traj.meta["phi0"] = phi0
            fname = f"{name}_{i:02d}.txt"
            if out_dir is not None:
                traj.write(out_dir / fname)
            cells.append(cell_metrics(traj, phi0, seed + i, band, distance, fname))
            trajs.append(traj)
        summaries[name] = summarize(cells, trajs, sim.horizon)
    report = ComparisonReport(grid=grid, band=band, distance_mode=distance, horizon=sim.horizon,
                              pid=summaries["pid"], rl=summaries["rl"],
                              deltas=summary_deltas(summaries["rl"], summaries["pid"]))
    if out_dir is not None:
        report.write(out_dir / "report.json")
    return report
