"""Closed-loop simulation shared by the PID and A2C controllers.

One control tick:

    cart acceleration -> synthesize_imu -> filter_update -> controller
    -> clamp force -> step_rk4

The controller sees a :class:`Measurement` (filtered pitch, gyro rate and
the cart position/velocity), never the true pitch.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .dynamics import PhysicalParams, RobotState, derivatives, step_rk4
from .errors import ConfigError, IntegrationDivergedError
from .sensing import FilterState, ImuConfig, filter_update, gyro_rate, synthesize_imu

TERMINATIONS = ("horizon", "fell", "diverged")
COLUMNS = ("t", "phi_true", "phi_est", "x", "x_dot", "u", "reward")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.002
    horizon: float = 10.0
    fall_threshold: float = 0.35
    alpha: float = 0.98
    position_weight: float = 0.1
    pitch_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.dt <= 0.05:
            raise ConfigError(f"dt must be in (0, 0.05], got {self.dt}")
        if self.horizon <= 0 or self.fall_threshold <= 0:
            raise ConfigError("horizon and fall_threshold must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if self.position_weight < 0 or self.pitch_weight < 0:
            raise ConfigError("reward weights must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


class Measurement(NamedTuple):
    phi_hat: float
    rate: float
    x: float
    x_dot: float
    prev_u: float
    t: float


def config_hash(*parts) -> str:
    """Short stable digest of dataclass configs, recorded in trajectory metadata."""
    blob = json.dumps([asdict(p) if hasattr(p, "__dataclass_fields__") else p for p in parts],
                      sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


class BalanceEnv:
    """Stepper around the sensor/filter/plant pipeline.

    ``reset`` returns the first measurement; ``step(force)`` applies a force
    for one tick and returns ``(measurement, reward, done)``. The reward is
    ``+1`` while ``|phi|`` stays under the fall threshold, minus
    ``position_weight * |x|`` and ``pitch_weight * |phi| / fall_threshold``.
    """

    def __init__(self, params: PhysicalParams, imu: ImuConfig, sim: SimConfig):
        self.params = params
        self.imu = imu
        self.sim = sim
        self.state = None
        self.termination = None

    def reset(self, initial: RobotState, seed: int | None = None) -> Measurement:
        noisy = self.imu.noise_std_accel > 0 or self.imu.noise_std_gyro > 0
        self.rng = self.imu.make_rng(self.sim.seed if seed is None else seed) if noisy else None
        self.t0 = initial.t
        self.n = 0
        self.state = initial
        self.u = 0.0
        self.filter = FilterState(0.0, self.sim.alpha, initial.t)
        self.termination = None
        return self._measure()

    def _measure(self) -> Measurement:
        s = self.state
        accel = derivatives(s, self.u, self.params)[1]
        sample = synthesize_imu(s, accel, self.imu, self.rng, self.params.g)
        self.filter = filter_update(self.filter, sample, self.imu, self.sim.dt)
        return Measurement(self.filter.phi_hat, gyro_rate(sample, self.imu), s.x, s.x_dot, self.u, s.t)

    def clamp(self, force: float) -> float:
        lim = self.params.force_limit
        return min(max(float(force), -lim), lim)

    def step(self, force: float):
        if self.termination is not None:
            raise RuntimeError("episode already terminated; call reset()")
        u = self.clamp(force)
        new = step_rk4(self.state, u, self.params, self.sim.dt)
        self.n += 1
        self.state = RobotState(new.x, new.x_dot, new.phi, new.phi_dot, self.t0 + self.n * self.sim.dt)
        self.u = u
        upright = abs(new.phi) < self.sim.fall_threshold
        reward = ((1.0 if upright else 0.0) - self.sim.position_weight * abs(new.x)
                  - self.sim.pitch_weight * abs(new.phi) / self.sim.fall_threshold)
        if not upright:
            self.termination = "fell"
        elif self.n >= self.sim.n_steps:
            self.termination = "horizon"
        return self._measure(), reward, self.termination is not None


@dataclass
class Trajectory:
    """Sampled closed-loop run; row ``k`` is the state at ``t[k]`` and the
    force applied from ``t[k]`` on (the final row carries ``u = 0``)."""

    t: np.ndarray
    phi_true: np.ndarray
    phi_est: np.ndarray
    x: np.ndarray
    x_dot: np.ndarray
    u: np.ndarray
    reward: np.ndarray
    termination: str
    meta: dict = field(default_factory=dict)
    actions: np.ndarray | None = None

    def __post_init__(self):
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")
        if len(self.t) == 0:
            raise ValueError("trajectory must have at least one sample")

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.reward))

    def columns(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in COLUMNS])

    def write(self, path) -> None:
        """Plain-text dump: one ``#`` metadata line, one header line, one row per sample."""
        meta = dict(self.meta, termination=self.termination)
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            fh.write(" ".join(COLUMNS) + "\n")
            for row in self.columns():
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def read(cls, path) -> "Trajectory":
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise ValueError(f"{path}: missing metadata line")
            meta = json.loads(first[2:])
            header = fh.readline().split()
            if tuple(header) != COLUMNS:
                raise ValueError(f"{path}: unexpected columns {header}")
            rows = [[float(v) for v in line.split()] for line in fh if line.strip()]
        data = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
        termination = meta.pop("termination")
        return cls(*(data[:, i] for i in range(len(COLUMNS))), termination=termination, meta=meta)


class _Recorder:
    def __init__(self):
        self.rows = []
        self.actions = []

    def add(self, state, phi_est, u, reward, action=None):
        self.rows.append((state.t, state.phi, phi_est, state.x, state.x_dot, u, reward))
        if action is not None:
            self.actions.append(action)

    def build(self, termination, meta) -> Trajectory:
        data = np.array(self.rows, dtype=float)
        actions = np.array(self.actions, dtype=int) if self.actions else None
        return Trajectory(*(data[:, i] for i in range(len(COLUMNS))), termination=termination,
                          meta=meta, actions=actions)


def run_closed_loop(controller: Callable[[Measurement], float], initial: RobotState,
                    params: PhysicalParams, imu: ImuConfig, sim: SimConfig,
                    seed: int | None = None, meta: dict | None = None,
                    action_of: Callable[[], int] | None = None) -> Trajectory:
    """Run one episode with ``controller`` mapping measurements to force.

    ``action_of``, when given, is called after each controller decision to
    record a discrete action index alongside the force.
    An integration failure raises :class:`IntegrationDivergedError` with the
    partial trajectory attached as ``trajectory``.
    """
    if not initial.is_finite():
        raise ValueError(f"initial state must be finite: {initial}")
    meta = dict(meta or {})
    meta.setdefault("seed", sim.seed if seed is None else seed)
    env = BalanceEnv(params, imu, sim)
    rec = _Recorder()
    m = env.reset(initial, seed)
    done = False
    while not done:
        state, estimate = env.state, m.phi_hat
        u = env.clamp(controller(m))
        action = action_of() if action_of is not None else None
        try:
            m, reward, done = env.step(u)
        except IntegrationDivergedError as exc:
            rec.add(state, estimate, u, math.nan, action)
            exc.trajectory = rec.build("diverged", meta)
            raise
        rec.add(state, estimate, u, reward, action)
    rec.add(env.state, m.phi_hat, 0.0, 0.0, None)
    return rec.build(env.termination, meta)
