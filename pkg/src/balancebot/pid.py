"""Discrete PID pitch controller and a trial-and-error gain search."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PhysicalParams, RobotState
from .errors import ConfigError
from .sensing import ImuConfig
from .simulation import Measurement, SimConfig, Trajectory, config_hash, run_closed_loop

# Hardware calibration of the prototype (PWM-count units, not newtons). Kept
# for reference only; the simulator uses gains found by tune_pid.
HARDWARE_GAINS = (1970.0, 21950.0, 19.5)


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"gain {name} must be finite and non-negative, got {v}")

    def as_tuple(self):
        return (self.kp, self.ki, self.kd)


HARDWARE_REFERENCE = PidGains(*HARDWARE_GAINS)


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


@dataclass(frozen=True)
class Setpoint:
    target_phi: float = 0.0
    target_x: float = 0.0


def integral_bound(gains: PidGains, force_limit: float | None) -> float:
    """Anti-windup limit on the accumulated error: ``ki * |integral| <= 2 * force_limit``."""
    if force_limit is None or gains.ki == 0:
        return math.inf
    return 2.0 * force_limit / gains.ki


def pid_step(ps: PidState, gains: PidGains, error: float, dt: float, force_limit: float | None = None):
    """One PID update. Returns ``(output, new_state)``; the output is not clamped.

    Rectangle-rule integral, derivative on the error with the first-call
    derivative forced to zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    bound = integral_bound(gains, force_limit)
    integral = min(max(ps.integral + error * dt, -bound), bound)
    derivative = (error - ps.prev_error) / dt if ps.initialized else 0.0
    out = gains.kp * error + gains.ki * integral + gains.kd * derivative
    return out, PidState(integral, error, True)


class PidController:
    """Stateful wrapper used inside the closed loop.

    With ``position_loop`` on, the pitch target is shifted by
    ``kx * (x - target_x) + kv * x_dot`` so that the body leans back toward
    the target position.
    """

    def __init__(self, gains: PidGains, setpoint: Setpoint, dt: float, force_limit: float,
                 position_loop: bool = False, kx: float = 0.02, kv: float = 0.05):
        self.gains = gains
        self.setpoint = setpoint
        self.dt = dt
        self.force_limit = force_limit
        self.position_loop = position_loop
        self.kx, self.kv = kx, kv
        self.state = PidState()

    def __call__(self, m: Measurement) -> float:
        target = self.setpoint.target_phi
        if self.position_loop:
            target += self.kx * (m.x - self.setpoint.target_x) + self.kv * m.x_dot
        # positive force raises phi, so the loop acts on target - phi
        out, self.state = pid_step(self.state, self.gains, target - m.phi_hat, self.dt, self.force_limit)
        return out


def run_pid_episode(initial: RobotState, gains: PidGains, setpoint: Setpoint = Setpoint(),
                    params: PhysicalParams = PhysicalParams(), imu: ImuConfig = ImuConfig(),
                    sim: SimConfig = SimConfig(), seed: int | None = None,
                    position_loop: bool = False) -> Trajectory:
    """Closed-loop PID run from ``initial`` until the horizon or a fall."""
    ctrl = PidController(gains, setpoint, sim.dt, params.force_limit, position_loop)
    meta = {"controller": "pid", "gains": list(gains.as_tuple()),
            "config": config_hash(params, imu, sim)}
    return run_closed_loop(ctrl, initial, params, imu, sim, seed=seed, meta=meta)


@dataclass(frozen=True)
class TuneConfig:
    """Evaluation setup for :func:`tune_pid`.

    The cost of a candidate is
    ``w_phi * mean|phi| + w_settle * settling_time + w_fall * falls``
    averaged over ``initial_phis``; an unsettled run counts the full horizon.
    """

    initial_phis: tuple = (-0.09, -0.05, 0.05, 0.09)
    w_phi: float = 1.0
    w_settle: float = 0.5
    w_fall: float = 100.0
    band: float = 0.017
    seed: int = 0


@dataclass
class TuneResult:
    best: PidGains
    best_cost: float
    candidates: list = field(default_factory=list)  # (gains, cost, falls, mean settling)


def evaluate_gains(gains: PidGains, tune: TuneConfig, params: PhysicalParams, imu: ImuConfig,
                   sim: SimConfig) -> tuple:
    """Cost, fall count and mean settling time of one candidate."""
    from .harness import settling_time

    costs, falls, settles = [], 0, []
    for i, phi0 in enumerate(tune.initial_phis):
        traj = run_pid_episode(RobotState(phi=phi0), gains, Setpoint(), params, imu, sim,
                               seed=tune.seed + i)
        fell = traj.termination != "horizon"
        falls += fell
        ts = settling_time(traj, tune.band)
        ts = sim.horizon if ts is None else ts
        settles.append(ts)
        costs.append(tune.w_phi * float(np.mean(np.abs(traj.phi_true)))
                     + tune.w_settle * ts + tune.w_fall * fell)
    return float(np.mean(costs)), falls, float(np.mean(settles))


def tune_pid(search_space, tune: TuneConfig = TuneConfig(), params: PhysicalParams = PhysicalParams(),
             imu: ImuConfig = ImuConfig(), sim: SimConfig = SimConfig()) -> TuneResult:
    """Deterministic grid search over gain candidates.

    ``search_space`` is either a mapping ``{"kp": [...], "ki": [...], "kd": [...]}``
    (full Cartesian grid) or an explicit sequence of :class:`PidGains`.
    Ties keep the earliest candidate.
    """
    if isinstance(search_space, dict):
        try:
            axes = [list(search_space[k]) for k in ("kp", "ki", "kd")]
        except KeyError as exc:
            raise ConfigError(f"search space missing axis {exc}") from None
        candidates = [PidGains(*c) for c in itertools.product(*axes)]
    else:
        candidates = [g if isinstance(g, PidGains) else PidGains(*g) for g in search_space]
    if not candidates:
        raise ConfigError("empty PID search space")

    result = None
    scored = []
    for gains in candidates:
        cost, falls, settle = evaluate_gains(gains, tune, params, imu, sim)
        scored.append((gains, cost, falls, settle))
        if result is None or cost < result[1]:
            result = (gains, cost)
    return TuneResult(result[0], result[1], scored)
