"""YAML configuration with unit-aware physical parameters.

Physical quantities may be written either as bare SI numbers or as strings
with a unit, e.g. ``m1: 135 g`` or ``wheel_diameter: 5 cm``; everything is
converted to SI on load. Sections: ``physical``, ``sensor``, ``sim``,
``pid``, ``rl``, ``harness``. Unknown keys are rejected.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace

import yaml

from .dynamics import PhysicalParams
from .errors import ConfigError
from .pid import PidGains, TuneConfig
from .rl.agent import TrainConfig
from .sensing import STANDARD_GRAVITY, ImuConfig
from .simulation import SimConfig

_UNITS = {
    "kg": ("mass", 1.0), "g": ("mass", 1e-3),
    "m": ("length", 1.0), "cm": ("length", 1e-2), "mm": ("length", 1e-3),
    "kg*m^2": ("inertia", 1.0), "g*cm^2": ("inertia", 1e-7),
    "N": ("force", 1.0), "N*s/m": ("damping", 1.0), "m/s^2": ("accel", 1.0),
}
_DIMENSION = {
    "m1": "mass", "m2": "mass", "l": "length", "I2": "inertia", "f": "damping", "g": "accel",
    "wheel_diameter": "length", "wheel_base": "length", "force_limit": "force",
}
_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-z*/^0-9]+)?\s*$")

# default PID search grid; every point is evaluated by tune_pid
DEFAULT_PID_SEARCH = {
    "kp": (4.0, 6.0, 10.0, 15.0),
    "ki": (0.0, 5.0, 10.0),
    "kd": (0.1, 0.2, 0.3, 0.5),
}


def parse_quantity(value, dimension: str | None = None) -> float:
    """Convert ``135``, ``"135 g"`` or ``"5 cm"`` to an SI float."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number or quantity string, got {value!r}")
    match = _QUANTITY.match(value)
    if not match:
        raise ConfigError(f"cannot parse quantity {value!r}")
    number = float(match.group(1))
    unit = match.group(2)
    if unit is None:
        return number
    if unit not in _UNITS:
        raise ConfigError(f"unknown unit {unit!r} in {value!r}")
    dim, factor = _UNITS[unit]
    if dimension is not None and dim != dimension:
        raise ConfigError(f"{value!r} has dimension {dim}, expected {dimension}")
    return number * factor


@dataclass(frozen=True)
class PidSettings:
    gains: PidGains | None = None
    position_loop: bool = False
    search: dict = field(default_factory=lambda: dict(DEFAULT_PID_SEARCH))
    tune: TuneConfig = TuneConfig()


@dataclass(frozen=True)
class HarnessSettings:
    band: float = 0.017
    grid: tuple = (-0.09, -0.06, -0.03, 0.03, 0.06, 0.09)
    distance: str = "displacement"

    def __post_init__(self):
        if self.band <= 0:
            raise ConfigError("settling band must be positive")
        if self.distance not in ("displacement", "path"):
            raise ConfigError("distance must be 'displacement' or 'path'")
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))


@dataclass(frozen=True)
class Config:
    physical: PhysicalParams = PhysicalParams()
    sensor: ImuConfig = ImuConfig()
    sim: SimConfig = SimConfig()
    pid: PidSettings = PidSettings()
    rl: TrainConfig = TrainConfig()
    harness: HarnessSettings = HarnessSettings()


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")


def _physical(data: dict) -> PhysicalParams:
    allowed = [f.name for f in fields(PhysicalParams)]
    _check_keys("physical", data, allowed)
    kwargs = {}
    for key, value in data.items():
        if key == "tf_form":
            kwargs[key] = str(value)
        elif key == "I2" and value is None:
            kwargs[key] = None
        else:
            kwargs[key] = parse_quantity(value, _DIMENSION.get(key))
    return PhysicalParams(**kwargs)


def _sensor(data: dict) -> ImuConfig:
    allowed = ("offsets", "accel_counts_per_g", "gyro_counts_per_dps", "noise_std_accel",
               "noise_std_gyro", "seed")
    _check_keys("sensor", data, allowed)
    kwargs = {}
    if "offsets" in data:
        kwargs["offsets"] = tuple(data["offsets"])
    if "accel_counts_per_g" in data:
        kwargs["accel_scale"] = float(data["accel_counts_per_g"]) / STANDARD_GRAVITY
    if "gyro_counts_per_dps" in data:
        kwargs["gyro_scale"] = float(data["gyro_counts_per_dps"]) * 180.0 / math.pi
    for key in ("noise_std_accel", "noise_std_gyro"):
        if key in data:
            kwargs[key] = float(data[key])
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    return ImuConfig(**kwargs)


def _simple(cls, section: str, data: dict, tuples=()):
    allowed = [f.name for f in fields(cls)]
    _check_keys(section, data, allowed)
    kwargs = {k: tuple(v) if k in tuples else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _pid(data: dict) -> PidSettings:
    _check_keys("pid", data, ("kp", "ki", "kd", "position_loop", "search", "tune"))
    gains = None
    given = [k for k in ("kp", "ki", "kd") if k in data]
    if given:
        if len(given) != 3:
            raise ConfigError("pid gains need all of kp, ki, kd")
        gains = PidGains(float(data["kp"]), float(data["ki"]), float(data["kd"]))
    search = dict(DEFAULT_PID_SEARCH)
    if "search" in data:
        _check_keys("pid.search", data["search"], ("kp", "ki", "kd"))
        search.update({k: tuple(float(x) for x in v) for k, v in data["search"].items()})
    tune = _simple(TuneConfig, "pid.tune", data.get("tune", {}), tuples=("initial_phis",))
    return PidSettings(gains, bool(data.get("position_loop", False)), search, tune)


def config_from_dict(data: dict | None) -> Config:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys("root", data, ("physical", "sensor", "sim", "pid", "rl", "harness"))
    return Config(
        physical=_physical(data.get("physical") or {}),
        sensor=_sensor(data.get("sensor") or {}),
        sim=_simple(SimConfig, "sim", data.get("sim") or {}),
        pid=_pid(data.get("pid") or {}),
        rl=_simple(TrainConfig, "rl", data.get("rl") or {}, tuples=("hidden", "obs_scale")),
        harness=_simple(HarnessSettings, "harness", data.get("harness") or {}, tuples=("grid",)),
    )


def load_config(path) -> Config:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return config_from_dict(data)


def write_gains(gains: PidGains, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"kp: {gains.kp!r}\nki: {gains.ki!r}\nkd: {gains.kd!r}\n")


def read_gains(path) -> PidGains:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return PidGains(float(data["kp"]), float(data["ki"]), float(data["kd"]))
    except OSError as exc:
        raise ConfigError(f"cannot read gains file {path}: {exc}") from None
    except (KeyError, TypeError, ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"malformed gains file {path}: {exc}") from None


def with_noise(cfg: Config, enabled: bool) -> Config:
    return cfg if enabled else replace(cfg, sensor=cfg.sensor.noiseless())
