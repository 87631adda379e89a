"""Audio I/O, a differentiable log-mel front end, and SpecAugment masking.

The log-mel pipeline is built entirely from graph ops so that gradients reach
the waveform:

    frames  = strided windows of the signal (conv1d with hop as stride)
    re, im  = frames * hann @ cos-basis, frames * hann @ -sin-basis
    mag     = sqrt(re**2 + im**2)
    mel     = mag @ filterbank
    out     = log(mel + log_floor)

Windowing and the DFT are folded into one fixed kernel bank, so framing and
the DFT share a single conv1d per component.  Output layout is
``(batch, frames, mel_bins)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T

SAMPLE_RATE = 16000


class WavError(ValueError):
    pass


class MalformedWavError(WavError):
    pass


class UnsupportedSampleRateError(WavError):
    pass


class NotMonoError(WavError):
    pass


class NotPCM16Error(WavError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.sample_rate != SAMPLE_RATE:
            raise UnsupportedSampleRateError(f"unsupported sample rate {self.sample_rate}")
        if self.samples.ndim != 1 or len(self.samples) == 0:
            raise ValueError("waveform must be a non-empty 1-D sequence")

    def __len__(self):
        return len(self.samples)


def load_wav(path) -> Waveform:
    """Read a RIFF/WAVE PCM16 mono 16 kHz file, scaled by 1/32768."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")
    pos, fmt, pcm = 12, None, None
    while pos + 8 <= len(data):
        cid, size = data[pos:pos + 4], struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedWavError(f"{path}: chunk {cid!r} truncated")
        if cid == b"fmt ":
            if size < 16:
                raise MalformedWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif cid == b"data":
            pcm = body
        pos += 8 + size + (size & 1)
    if fmt is None or pcm is None:
        raise MalformedWavError(f"{path}: missing fmt or data chunk")
    tag, channels, rate, _, _, bits = fmt
    if tag != 1 or bits != 16:
        raise NotPCM16Error(f"{path}: only PCM16 is supported (format {tag}, {bits} bits)")
    if channels != 1:
        raise NotMonoError(f"{path}: expected mono, got {channels} channels")
    if rate != SAMPLE_RATE:
        raise UnsupportedSampleRateError(f"{path}: unsupported sample rate {rate}")
    if len(pcm) % 2:
        raise MalformedWavError(f"{path}: odd-sized PCM16 data chunk")
    samples = np.frombuffer(pcm, dtype="<i2").astype(np.float32) / 32768.0
    if len(samples) == 0:
        raise MalformedWavError(f"{path}: empty data chunk")
    return Waveform(samples)


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE) -> None:
    """Write PCM16 mono; input in [-1, 1] is scaled by 32768 and clipped."""
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767)
    payload = pcm.astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)


def fix_length(w: Waveform, target_len: int = SAMPLE_RATE) -> Waveform:
    """Zero-pad at the end or center-crop to ``target_len`` samples."""
    if target_len <= 0:
        raise ValueError("target_len must be positive")
    x = w.samples
    if len(x) < target_len:
        x = np.concatenate([x, np.zeros(target_len - len(x), dtype=x.dtype)])
    elif len(x) > target_len:
        start = (len(x) - target_len) // 2
        x = x[start:start + target_len]
    return Waveform(x.copy(), w.sample_rate)


# --------------------------------------------------------------------------
# log-mel
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MelConfig:
    frame_length: int = 400
    hop_length: int = 160
    fft_size: int = 512
    mel_bins: int = 40
    fmin: float = 20.0
    fmax: float = 8000.0
    log_floor: float = 1e-6

    def __post_init__(self):
        if not 0 < self.frame_length <= self.fft_size:
            raise ValueError("frame_length must satisfy 0 < frame_length <= fft_size")
        if self.hop_length < 1:
            raise ValueError("hop_length must be >= 1")
        if not 0 <= self.fmin < self.fmax <= SAMPLE_RATE / 2:
            raise ValueError("need 0 <= fmin < fmax <= 8000")
        if self.mel_bins < 1:
            raise ValueError("mel_bins must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.frame_length:
            raise ValueError(f"waveform of {num_samples} samples is shorter than one frame ({self.frame_length})")
        return 1 + (num_samples - self.frame_length) // self.hop_length


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(cfg: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    pts = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bins + 2))
    return pts[1:-1]


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular HTK-mel filters, shape ``(fft_size // 2 + 1, mel_bins)``, peak 1."""
    freqs = np.arange(cfg.fft_size // 2 + 1) * SAMPLE_RATE / cfg.fft_size
    pts = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bins + 2))
    lo, mid, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    up = (freqs[None] - lo) / (mid - lo)
    down = (hi - freqs[None]) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down)).T.astype(np.float32)


def dft_kernels(cfg: MelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed real/imaginary DFT bases as conv1d kernels ``(bins, 1, frame)``."""
    n = np.arange(cfg.frame_length)
    window = 0.5 - 0.5 * np.cos(2 * np.pi * n / cfg.frame_length)
    k = np.arange(cfg.fft_size // 2 + 1)[:, None]
    angle = 2 * np.pi * k * n[None] / cfg.fft_size
    re = (np.cos(angle) * window)[:, None, :].astype(np.float32)
    im = (-np.sin(angle) * window)[:, None, :].astype(np.float32)
    return re, im


_BASES: dict[MelConfig, tuple] = {}


def _bases(cfg: MelConfig):
    if cfg not in _BASES:
        _BASES[cfg] = (*dft_kernels(cfg), mel_filterbank(cfg))
    return _BASES[cfg]


def log_mel(signal, cfg: MelConfig = MelConfig()) -> T.Node:
    """Graph for the log-mel spectrogram of a ``(batch, samples)`` node.

    A ``Waveform`` or 1-D array is accepted for convenience and treated as a
    batch of one.
    """
    if isinstance(signal, Waveform):
        signal = signal.samples
    if not isinstance(signal, T.Node):
        arr = np.asarray(signal, dtype=np.float32)
        signal = T.constant(arr[None] if arr.ndim == 1 else arr)
    if signal.value is not None:
        cfg.num_frames(signal.value.shape[-1])
    re_k, im_k, fb = _bases(cfg)
    x = T.concat([signal], axis=1, stack=True)  # (B, 1, L)
    re = T.conv1d(x, T.constant(re_k), stride=cfg.hop_length)
    im = T.conv1d(x, T.constant(im_k), stride=cfg.hop_length)
    mag = T.sqrt(T.add(T.square(re), T.square(im)))
    mel = T.matmul(T.transpose(mag, (0, 2, 1)), T.constant(fb))
    return T.log(T.add(mel, np.asarray(cfg.log_floor, dtype=np.float32)))


def log_mel_array(samples, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Numpy convenience wrapper: ``(L,)`` or ``(B, L)`` -> log-mel array."""
    arr = np.asarray(samples, dtype=np.float32)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None]
    cfg.num_frames(arr.shape[1])
    out = T.evaluate(log_mel(T.constant(arr), cfg))
    return out[0] if squeeze else out


# --------------------------------------------------------------------------
# SpecAugment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpecAugmentConfig:
    num_freq_masks: int = 2
    max_freq_width: int = 7
    num_time_masks: int = 2
    max_time_width: int = 20

    def __post_init__(self):
        if min(self.num_freq_masks, self.max_freq_width, self.num_time_masks, self.max_time_width) < 0:
            raise ValueError("SpecAugment counts and widths must be >= 0")


def spec_augment(mel: np.ndarray, cfg: SpecAugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Zero random contiguous frequency and time stripes of a ``(frames, mel_bins)`` array.

    Widths are uniform on ``[0, max_width]`` (clipped to the axis length) and
    starts uniform over the valid range.  Returns a new array.
    """
    mel = np.asarray(mel)
    if mel.ndim != 2:
        raise ValueError(f"spec_augment expects a 2-D (frames, mel_bins) array, got {mel.shape}")
    out = mel.copy()
    frames, bins = mel.shape
    for _ in range(cfg.num_freq_masks):
        width = int(rng.integers(0, min(cfg.max_freq_width, bins) + 1))
        start = int(rng.integers(0, bins - width + 1))
        out[:, start:start + width] = 0
    for _ in range(cfg.num_time_masks):
        width = int(rng.integers(0, min(cfg.max_time_width, frames) + 1))
        start = int(rng.integers(0, frames - width + 1))
        out[start:start + width, :] = 0
    return out
