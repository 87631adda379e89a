"""Acoustic model: conv front, bidirectional GRU stack, attention pooling, dense head.

    mel (B, frames, mel_bins)
      -> conv1d + tanh, twice, strided over time
      -> 2 x bidirectional GRU (forward/backward states concatenated per frame)
      -> additive attention with a learned query: a_t = softmax_t(v . tanh(W h_t + b))
      -> embedding = sum_t a_t h_t
      -> logits = embedding @ head.W + head.b

The default config has 200,119 parameters (35 output classes).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Parameter

MAGIC = b"ARSC"
VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    mel_bins: int = 40
    conv_channels: tuple[int, int] = (32, 48)
    conv_kernels: tuple[int, int] = (5, 5)
    conv_strides: tuple[int, int] = (2, 2)
    hidden: int = 78
    attention_dim: int = 64
    num_classes: int = 35

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        sizes = (self.mel_bins, *self.conv_channels, *self.conv_kernels, *self.conv_strides,
                 self.hidden, self.attention_dim)
        if min(sizes) < 1 or len(self.conv_channels) != 2 or len(self.conv_kernels) != 2:
            raise ValueError("all model sizes must be positive, with two conv layers")

    def output_frames(self, frames: int) -> int:
        for k, s in zip(self.conv_kernels, self.conv_strides):
            if frames < k:
                raise T.ShapeError(f"{frames} frames are too few for a kernel of {k}")
            frames = (frames - k) // s + 1
        return frames


class ModelParams:
    """Ordered, named collection of parameters plus the config that shaped them."""

    def __init__(self, config: ModelConfig, params: list[Parameter]):
        self.config = config
        self._params = {p.name: p for p in params}
        if len(self._params) != len(params):
            raise ValueError("duplicate parameter names")

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def count(self) -> int:
        return sum(p.size for p in self)

    def trainable_count(self) -> int:
        return sum(p.size for p in self if p.trainable)

    def set_trainable(self, flag: bool) -> None:
        for p in self:
            p.trainable = flag

    def copy(self) -> ModelParams:
        return ModelParams(self.config, [Parameter(p.name, p.value.copy(), p.trainable) for p in self])

    def equal(self, other: ModelParams) -> bool:
        return (self.names() == other.names()
                and all(np.array_equal(a.value, b.value) for a, b in zip(self, other)))


def parameter_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...], int]]:
    """(name, shape, fan_in) for every tensor, in canonical order."""
    shapes = []
    cin = cfg.mel_bins
    for i, (cout, k) in enumerate(zip(cfg.conv_channels, cfg.conv_kernels), 1):
        shapes += [(f"conv{i}.w", (cout, cin, k), cin * k), (f"conv{i}.b", (cout, 1), cin * k)]
        cin = cout
    h = cfg.hidden
    for layer in (1, 2):
        for d in ("fwd", "bwd"):
            pre = f"gru{layer}.{d}"
            shapes += [(f"{pre}.W", (cin, 3 * h), h), (f"{pre}.U", (h, 3 * h), h),
                       (f"{pre}.bx", (3 * h,), h), (f"{pre}.bh", (3 * h,), h)]
        cin = 2 * h
    a = cfg.attention_dim
    shapes += [("att.W", (2 * h, a), 2 * h), ("att.b", (a,), 2 * h), ("att.v", (a, 1), a)]
    shapes += head_shapes(2 * h, cfg.num_classes)
    return shapes


def head_shapes(dim: int, num_classes: int):
    return [("head.W", (dim, num_classes), dim), ("head.b", (num_classes,), dim)]


def _init(shapes, rng: np.random.Generator) -> list[Parameter]:
    out = []
    for name, shape, fan_in in shapes:
        bound = 1.0 / np.sqrt(fan_in)
        out.append(Parameter(name, rng.uniform(-bound, bound, shape).astype(np.float32)))
    return out


def init_model(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Uniform fan-in initialization; GRU tensors use 1/sqrt(hidden) as fan-in."""
    return ModelParams(cfg, _init(parameter_shapes(cfg), rng))


def replace_head(params: ModelParams, num_classes: int, rng: np.random.Generator) -> ModelParams:
    """Discard the output layer and attach a freshly initialized one."""
    cfg = ModelConfig(**{**params.config.__dict__, "num_classes": num_classes})
    body = [Parameter(p.name, p.value.copy(), p.trainable) for p in params if not p.name.startswith("head.")]
    return ModelParams(cfg, body + _init(head_shapes(2 * cfg.hidden, num_classes), rng))


@dataclass
class AmOutput:
    logits: T.Node
    embedding: T.Node
    attention: T.Node


def _gru_layer(steps: list[T.Node], P, pre: str, hidden: int) -> list[T.Node]:
    h0 = T.constant(np.zeros((1, hidden), np.float32))
    outs = {}
    for d, order in (("fwd", range(len(steps))), ("bwd", reversed(range(len(steps))))):
        W, U, bx, bh = (P(f"{pre}.{d}.{n}") for n in ("W", "U", "bx", "bh"))
        h = h0
        for t in order:
            h = T.gru_cell(steps[t], h, W, U, bx, bh)
            outs[d, t] = h
    return [T.concat([outs["fwd", t], outs["bwd", t]], axis=1) for t in range(len(steps))]


def forward_am(params: ModelParams, mel: T.Node, frames: int | None = None) -> AmOutput:
    """Build the model graph on ``mel (B, frames, mel_bins)``.

    ``frames`` is only needed when ``mel`` is downstream of an unbound
    placeholder; otherwise it is read from the node's value.
    """
    cfg = params.config
    if frames is None:
        if mel.value is None:
            raise ValueError("frames must be given when the mel input is not yet evaluated")
        if mel.value.ndim != 3 or mel.value.shape[2] != cfg.mel_bins:
            raise T.ShapeError(f"forward_am: expected (B, frames, {cfg.mel_bins}), got {mel.value.shape}")
        frames = mel.value.shape[1]
    cache: dict[str, T.Node] = {}

    def P(name):
        if name not in cache:
            cache[name] = T.parameter(params[name])
        return cache[name]

    x = T.transpose(mel, (0, 2, 1))
    for i, s in enumerate(cfg.conv_strides, 1):
        x = T.tanh(T.add(T.conv1d(x, P(f"conv{i}.w"), stride=s), P(f"conv{i}.b")))
    steps_n = cfg.output_frames(frames)
    seq = T.transpose(x, (0, 2, 1))
    steps = [T.slice_(seq, 1, t) for t in range(steps_n)]
    for layer in (1, 2):
        steps = _gru_layer(steps, P, f"gru{layer}", cfg.hidden)
    states = T.concat(steps, axis=1, stack=True)  # (B, T', 2H)
    energy = T.tanh(T.add(T.matmul(states, P("att.W")), P("att.b")))
    scores = T.reshape(T.matmul(energy, P("att.v")), (-1, steps_n))
    attention = T.softmax(scores, axis=1)
    pooled = T.matmul(T.reshape(attention, (-1, 1, steps_n)), states)
    embedding = T.reshape(pooled, (-1, 2 * cfg.hidden))
    logits = T.add(T.matmul(embedding, P("head.W")), P("head.b"))
    return AmOutput(logits, embedding, attention)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CrcMismatchError(CheckpointError):
    pass


class UnknownTensorError(CheckpointError):
    pass


class MissingTensorError(CheckpointError):
    pass


def encode_tensors(tensors: list[tuple[str, np.ndarray]]) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(tensors))
    for name, value in tensors:
        raw = name.encode("utf-8")
        value = np.asarray(value, dtype="<f4")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", value.ndim) + struct.pack(f"<{value.ndim}I", *value.shape)
        out += value.tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def decode_tensors(data: bytes) -> list[tuple[str, np.ndarray]]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("bad magic")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(data) - 4:
            raise TruncatedCheckpointError("truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if len(data) < 16:
        raise TruncatedCheckpointError("truncated checkpoint")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {VERSION}")
    tensors = []
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        value = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
        tensors.append((name, value))
    if pos != len(data) - 4:
        raise CheckpointError("trailing bytes after last tensor")
    (crc,) = struct.unpack("<I", data[-4:])
    if crc != zlib.crc32(data[:-4]):
        raise CrcMismatchError("CRC32 mismatch")
    return tensors


def save_checkpoint(params: ModelParams, path) -> None:
    Path(path).write_bytes(encode_tensors([(p.name, p.value) for p in params]))


def infer_config(tensors: dict[str, np.ndarray]) -> ModelConfig:
    try:
        c1, c2 = tensors["conv1.w"], tensors["conv2.w"]
        return ModelConfig(
            mel_bins=c1.shape[1],
            conv_channels=(c1.shape[0], c2.shape[0]),
            conv_kernels=(c1.shape[2], c2.shape[2]),
            hidden=tensors["gru1.fwd.U"].shape[0],
            attention_dim=tensors["att.W"].shape[1],
            num_classes=tensors["head.W"].shape[1],
        )
    except KeyError as exc:
        raise MissingTensorError(f"missing tensor {exc.args[0]}") from None


def load_checkpoint(path, cfg: ModelConfig | None = None) -> ModelParams:
    """Read a checkpoint; validates names and shapes against ``cfg`` (or the
    config implied by the tensors themselves)."""
    tensors = dict(decode_tensors(Path(path).read_bytes()))
    cfg = cfg or infer_config(tensors)
    expected = {name: shape for name, shape, _ in parameter_shapes(cfg)}
    for name in tensors:
        if name not in expected:
            raise UnknownTensorError(f"unknown tensor {name}")
    params = []
    for name, shape in expected.items():
        if name not in tensors:
            raise MissingTensorError(f"missing tensor {name}")
        if tensors[name].shape != shape:
            raise CheckpointError(f"tensor {name} has shape {tensors[name].shape}, expected {shape}")
        params.append(Parameter(name, tensors[name]))
    return ModelParams(cfg, params)


def checkpoint_bytes(params: ModelParams) -> bytes:
    return encode_tensors([(p.name, p.value) for p in params])
