"""Binary model files.

All integers are unsigned little-endian, floats are IEEE-754 float64
little-endian. Layout::

    magic         4 bytes   b"BBA2"
    version       u32       MODEL_VERSION
    header_len    u32       length of the header block in bytes
    header_crc    u32       zlib.crc32 of the header block
    header block:
        obs_dim       u32
        n_actions     u32
        n_features    u32, then that many feature names, each u32 length + utf-8 bytes
        obs_scale     n_scale u32, then n_scale f64
        action_levels n_actions f64
        action_repeat u32       simulator ticks each decision is held
        n_nets        u32 (2: actor, critic)
        per net       activation u32 (0 = tanh), n_sizes u32, n_sizes u32 layer widths
    payload_len   u64       bytes of parameters that follow
    payload       per net, per layer: W (out x in, row-major) then b

Readers raise :class:`VersionMismatchError` for an unknown version,
:class:`TruncatedFileError` when the file ends before a declared block, and
:class:`ShapeInconsistencyError` when the header is corrupt or the declared
shapes disagree with each other or with the payload size.
"""
from __future__ import annotations

import io
import struct
import zlib

import numpy as np

from ..errors import ModelFormatError, ShapeInconsistencyError, TruncatedFileError, VersionMismatchError
from .agent import MODEL_VERSION, OBS_FEATURES, PolicyModel
from .mlp import MlpParams

MAGIC = b"BBA2"
_ACTIVATION_CODES = {"tanh": 0}


def _u32(v):
    return struct.pack("<I", v)


def _f64s(values):
    values = np.asarray(values, dtype="<f8")
    return values.tobytes()


def model_bytes(model: PolicyModel) -> bytes:
    header = io.BytesIO()
    header.write(_u32(model.obs_dim) + _u32(model.n_actions))
    header.write(_u32(len(OBS_FEATURES)))
    for name in OBS_FEATURES:
        raw = name.encode()
        header.write(_u32(len(raw)) + raw)
    header.write(_u32(len(model.obs_scale)) + _f64s(model.obs_scale))
    header.write(_f64s(model.action_levels))
    header.write(_u32(model.action_repeat))
    nets = (model.actor, model.critic)
    header.write(_u32(len(nets)))
    for net in nets:
        header.write(_u32(_ACTIVATION_CODES[net.activation]) + _u32(len(net.layer_sizes)))
        header.write(b"".join(_u32(n) for n in net.layer_sizes))
    head = header.getvalue()
    payload = b"".join(_f64s(p.ravel()) for net in nets for p in net.parameters())
    return (MAGIC + _u32(model.version) + _u32(len(head)) + _u32(zlib.crc32(head)) + head
            + struct.pack("<Q", len(payload)) + payload)


def save_model(model: PolicyModel, path) -> None:
    if not (model.actor.is_finite() and model.critic.is_finite()):
        raise ValueError("refusing to save non-finite parameters")
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


class _Reader:
    def __init__(self, data: bytes, error):
        self.data = data
        self.pos = 0
        self.error = error

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise self.error(f"needed {n} bytes at offset {self.pos}, only {len(self.data) - self.pos} left")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64s(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(float)


def model_from_bytes(data: bytes) -> PolicyModel:
    top = _Reader(data, TruncatedFileError)
    if top.take(4) != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version = top.u32()
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"model format version {version}, expected {MODEL_VERSION}")
    header_len = top.u32()
    crc = top.u32()
    head = top.take(header_len)
    if zlib.crc32(head) != crc:
        raise ShapeInconsistencyError("header checksum mismatch")

    h = _Reader(head, ShapeInconsistencyError)
    obs_dim, n_actions = h.u32(), h.u32()
    features = tuple(h.take(h.u32()).decode("utf-8", errors="replace") for _ in range(h.u32()))
    if len(features) != obs_dim:
        raise ShapeInconsistencyError(f"{len(features)} feature names for obs_dim {obs_dim}")
    obs_scale = tuple(h.f64s(h.u32()))
    action_levels = tuple(h.f64s(n_actions))
    action_repeat = h.u32()
    if action_repeat < 1:
        raise ShapeInconsistencyError("action_repeat must be at least 1")
    n_nets = h.u32()
    if n_nets != 2:
        raise ShapeInconsistencyError(f"expected 2 networks, header declares {n_nets}")
    specs = []
    for _ in range(n_nets):
        code = h.u32()
        activation = {v: k for k, v in _ACTIVATION_CODES.items()}.get(code)
        if activation is None:
            raise ShapeInconsistencyError(f"unknown activation code {code}")
        sizes = tuple(h.u32() for _ in range(h.u32()))
        if len(sizes) < 2 or 0 in sizes:
            raise ShapeInconsistencyError(f"invalid layer sizes {sizes}")
        specs.append((activation, sizes))
    if h.pos != len(head):
        raise ShapeInconsistencyError("trailing bytes in header")
    (_, actor_sizes), (_, critic_sizes) = specs
    if actor_sizes[0] != obs_dim or critic_sizes[0] != obs_dim:
        raise ShapeInconsistencyError("network input width differs from obs_dim")
    if actor_sizes[-1] != n_actions or critic_sizes[-1] != 1:
        raise ShapeInconsistencyError("network output widths inconsistent with n_actions / scalar value")

    implied = 8 * sum(o * i + o for _, sizes in specs for i, o in zip(sizes[:-1], sizes[1:]))
    payload_len = struct.unpack("<Q", top.take(8))[0]
    if payload_len != implied:
        raise ShapeInconsistencyError(f"payload declared as {payload_len} bytes, shapes imply {implied}")
    payload = _Reader(top.take(payload_len), TruncatedFileError)
    if top.pos != len(data):
        raise ShapeInconsistencyError(f"{len(data) - top.pos} unexpected trailing bytes")

    nets = []
    for activation, sizes in specs:
        ws, bs = [], []
        for i, o in zip(sizes[:-1], sizes[1:]):
            ws.append(payload.f64s(o * i).reshape(o, i))
            bs.append(payload.f64s(o))
        nets.append(MlpParams(sizes, tuple(ws), tuple(bs), activation))
    return PolicyModel(nets[0], nets[1], obs_dim, n_actions, version, obs_scale, action_levels, action_repeat)


def load_model(path) -> PolicyModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
