"""Trainable additive input transformation.

Two forms are supported:

* ``pad-mask``: ``x' = Pad(x) + M * theta``.  The target signal (length
  ``d_T``) sits at the start of a length ``d_S`` buffer; ``M`` is 0 over the
  occupied prefix and 1 elsewhere, so only unoccupied positions are perturbed.
* ``full``: ``x' = x + theta`` over the whole sequence.

Either form works in the waveform domain (``theta`` has one entry per sample)
or the feature domain (``theta`` is ``frames x mel_bins`` and is added to the
log-mel spectrogram).  Outputs are not clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Parameter

MODES = ("pad-mask", "full")
DOMAINS = ("waveform", "feature")


@dataclass
class ReprogramLayer:
    theta: Parameter
    mode: str = "full"
    domain: str = "waveform"
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")
        if self.mode == "pad-mask":
            if self.mask is None or self.mask.shape != self.theta.shape:
                raise ValueError("pad-mask mode needs a mask shaped like theta")
            if not np.isin(self.mask, (0, 1)).all():
                raise ValueError("mask entries must be 0 or 1")

    @property
    def num_params(self) -> int:
        return self.theta.size


def pad_mask(target_len: int, source_len: int) -> np.ndarray:
    """Mask that is 0 over the first ``target_len`` positions and 1 after."""
    if target_len > source_len:
        raise ValueError("target longer than source")
    mask = np.ones(source_len, dtype=np.float32)
    mask[:target_len] = 0
    return mask


def init_theta(shape, scale: float = 0.0, rng: np.random.Generator | None = None,
               name: str = "reprogram.theta") -> Parameter:
    """Uniform ``[-scale, scale]`` initialization; 16000 entries for one second of audio."""
    if scale < 0:
        raise ValueError("scale must be >= 0")
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    if scale == 0:
        # -0.0 is the exact additive identity: x + (-0.0) == x bit for bit,
        # including x = -0.0, where +0.0 would flip the sign.
        return Parameter(name, np.full(shape, -0.0, np.float32))
    rng = rng or np.random.default_rng(0)
    return Parameter(name, rng.uniform(-scale, scale, shape).astype(np.float32))


def make_layer(shape, mode: str = "full", domain: str = "waveform", scale: float = 0.0,
               rng: np.random.Generator | None = None, target_len: int | None = None) -> ReprogramLayer:
    theta = init_theta(shape, scale, rng)
    mask = None
    if mode == "pad-mask":
        if theta.value.ndim != 1:
            raise ValueError("pad-mask mode is defined for 1-D sequences")
        mask = pad_mask(target_len if target_len is not None else theta.size, theta.size)
    return ReprogramLayer(theta, mode, domain, mask)


def reprogram_pad(x, layer: ReprogramLayer) -> T.Node:
    """``Pad(x) + M * theta`` for a batch ``x (B, d_T)``."""
    if layer.mode != "pad-mask":
        raise ValueError("reprogram_pad needs a pad-mask layer")
    x = T._as_node(x)
    d_s = layer.theta.size
    d_t = x.value.shape[-1] if x.value is not None else d_s - int(layer.mask.sum())
    if d_t > d_s:
        raise ValueError("target longer than source")
    if d_t < d_s:
        if x.value is None:
            raise ValueError("reprogram_pad needs an evaluated input to pad")
        zeros = np.zeros((*x.value.shape[:-1], d_s - d_t), dtype=x.value.dtype)
        x = T.concat([x, T.constant(zeros)], axis=-1)
    delta = T.mul(T.constant(layer.mask), T.parameter(layer.theta))
    return T.add(x, delta)


def reprogram_full(x, layer: ReprogramLayer) -> T.Node:
    """``x + theta``; ``theta`` broadcasts over the leading batch axis."""
    x = T._as_node(x)
    if x.value is not None and x.value.shape[-layer.theta.value.ndim:] != layer.theta.shape:
        raise T.ShapeError(f"reprogram_full: input {x.value.shape} does not end in theta shape {layer.theta.shape}")
    return T.add(x, T.parameter(layer.theta))


def apply(x, layer: ReprogramLayer) -> T.Node:
    return reprogram_pad(x, layer) if layer.mode == "pad-mask" else reprogram_full(x, layer)
