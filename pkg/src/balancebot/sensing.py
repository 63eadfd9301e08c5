"""IMU emulation and complementary-filter pitch estimation.

The emulated 6-axis IMU sits on the wheel axle and rotates with the body.
Its body axes are chosen so that ``atan2(ay, az)`` equals the pitch angle
when the robot is not accelerating. Readings are raw counts:

    ax = 0
    ay = accel_scale * ( x'' cos(phi) + g sin(phi))
    az = accel_scale * (-x'' sin(phi) + g cos(phi))
    gx = gyro_scale * phi'
    gy = gz = 0

plus a per-axis additive offset and optional Gaussian noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dynamics import RobotState
from .errors import ConfigError, InsufficientDataError

STANDARD_GRAVITY = 9.80665
AXES = ("ax", "ay", "az", "gx", "gy", "gz")

# MPU-6050 at +-2 g and +-250 deg/s full scale
DEFAULT_ACCEL_SCALE = 16384.0 / STANDARD_GRAVITY  # counts per m/s^2
DEFAULT_GYRO_SCALE = 131.0 * 180.0 / math.pi  # counts per rad/s

# calibrated offsets of the prototype's MPU-6050, raw counts (ax, ay, az, gx, gy, gz)
DEFAULT_OFFSETS = (-1780.0, 750.0, 2700.0, 180.0, 76.0, 61.0)

MIN_CALIBRATION_SAMPLES = 100


@dataclass(frozen=True)
class ImuConfig:
    offsets: tuple = DEFAULT_OFFSETS
    accel_scale: float = DEFAULT_ACCEL_SCALE
    gyro_scale: float = DEFAULT_GYRO_SCALE
    noise_std_accel: float = 30.0
    noise_std_gyro: float = 5.0
    seed: int = 0

    def __post_init__(self):
        offsets = tuple(float(v) for v in self.offsets)
        if len(offsets) != 6:
            raise ConfigError("offsets needs six entries (ax, ay, az, gx, gy, gz)")
        object.__setattr__(self, "offsets", offsets)
        if self.accel_scale <= 0 or self.gyro_scale <= 0:
            raise ConfigError("sensor scales must be positive")
        if self.noise_std_accel < 0 or self.noise_std_gyro < 0:
            raise ConfigError("noise standard deviations must be non-negative")

    def noiseless(self) -> "ImuConfig":
        return replace(self, noise_std_accel=0.0, noise_std_gyro=0.0)

    def make_rng(self, seed: int | None = None) -> np.random.Generator:
        return np.random.default_rng(self.seed if seed is None else seed)


@dataclass(frozen=True)
class ImuSample:
    ax: float
    ay: float
    az: float
    gx: float
    gy: float
    gz: float
    t: float = 0.0

    def counts(self) -> np.ndarray:
        return np.array([self.ax, self.ay, self.az, self.gx, self.gy, self.gz])

    def to_line(self) -> str:
        return " ".join(repr(float(v)) for v in (self.t, *self.counts()))

    @classmethod
    def from_line(cls, line: str) -> "ImuSample":
        t, ax, ay, az, gx, gy, gz = (float(v) for v in line.split())
        return cls(ax, ay, az, gx, gy, gz, t)


@dataclass(frozen=True)
class FilterState:
    phi_hat: float = 0.0
    alpha: float = 0.98
    last_t: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")


def synthesize_imu(state: RobotState, accel: float, config: ImuConfig,
                   rng: np.random.Generator | None = None, g: float = 9.81) -> ImuSample:
    """Raw IMU reading for the body at ``state`` with cart acceleration ``accel``.

    Noise is only added when ``rng`` is given and the configured standard
    deviations are nonzero, so the same generator state always yields the
    same sample.
    """
    s, c = math.sin(state.phi), math.cos(state.phi)
    ka, kg = config.accel_scale, config.gyro_scale
    o = config.offsets
    ax = o[0]
    ay = ka * (accel * c + g * s) + o[1]
    az = ka * (g * c - accel * s) + o[2]
    gx = kg * state.phi_dot + o[3]
    gy = o[4]
    gz = o[5]
    if rng is not None and (config.noise_std_accel > 0 or config.noise_std_gyro > 0):
        na = rng.normal(0.0, 1.0, 3) * config.noise_std_accel
        ng = rng.normal(0.0, 1.0, 3) * config.noise_std_gyro
        ax, ay, az = ax + na[0], ay + na[1], az + na[2]
        gx, gy, gz = gx + ng[0], gy + ng[1], gz + ng[2]
    return ImuSample(float(ax), float(ay), float(az), float(gx), float(gy), float(gz), state.t)


def rest_reading(config: ImuConfig, g: float = 9.81) -> np.ndarray:
    """Ideal bias-free counts for the robot upright and at rest."""
    return np.array([0.0, 0.0, config.accel_scale * g, 0.0, 0.0, 0.0])


def calibrate_offsets(samples: Sequence[ImuSample], config: ImuConfig, g: float = 9.81) -> tuple:
    """Per-axis offsets from readings taken upright and at rest.

    Returns the mean residual between the observed counts and the ideal rest
    reading, in ``(ax, ay, az, gx, gy, gz)`` order.
    """
    if len(samples) < MIN_CALIBRATION_SAMPLES:
        raise InsufficientDataError(
            f"need at least {MIN_CALIBRATION_SAMPLES} rest samples, got {len(samples)}")
    counts = np.array([s.counts() for s in samples])
    return tuple(float(v) for v in counts.mean(axis=0) - rest_reading(config, g))


def corrected(sample: ImuSample, config: ImuConfig) -> np.ndarray:
    return sample.counts() - np.asarray(config.offsets)


def accel_angle(sample: ImuSample, config: ImuConfig) -> float:
    """Pitch seen by the accelerometer alone, after offset correction."""
    o = config.offsets
    return math.atan2(sample.ay - o[1], sample.az - o[2])


def gyro_rate(sample: ImuSample, config: ImuConfig) -> float:
    """Pitch rate in rad/s from the offset-corrected x gyro."""
    return (sample.gx - config.offsets[3]) / config.gyro_scale


def filter_update(fs: FilterState, sample: ImuSample, config: ImuConfig, dt: float) -> FilterState:
    """One complementary-filter step.

    ``phi_hat <- alpha * (phi_hat + rate * dt) + (1 - alpha) * atan2(ay, az)``
    with the configured offsets removed from the raw sample first.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    a = fs.alpha
    propagated = fs.phi_hat + gyro_rate(sample, config) * dt
    phi_hat = a * propagated + (1.0 - a) * accel_angle(sample, config)
    return FilterState(phi_hat, a, sample.t)


def write_imu_log(samples, path) -> None:
    """Write samples one per line: ``t ax ay az gx gy gz`` in counts."""
    with open(path, "w") as fh:
        fh.write("# t ax ay az gx gy gz\n")
        for s in samples:
            fh.write(s.to_line() + "\n")


def read_imu_log(path) -> list:
    with open(path) as fh:
        return [ImuSample.from_line(line) for line in fh if line.strip() and not line.startswith("#")]
