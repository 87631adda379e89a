"""Many-to-one label mappings from source classes to target classes.

A target class is scored by the mean probability of its assigned source
classes; the per-target means are then renormalized into a distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .dsp import MelConfig, log_mel
from .model import ModelParams, forward_am
from .reprogram import ReprogramLayer, apply as apply_reprogram


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class LabelMapping:
    """``assignments[t]`` lists the source classes pooled into target ``t``."""

    assignments: tuple[tuple[int, ...], ...]
    num_sources: int

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(tuple(int(s) for s in a) for a in self.assignments))
        sizes = {len(a) for a in self.assignments}
        if len(sizes) != 1 or 0 in sizes:
            raise MappingError("every target needs the same, nonzero number of sources")
        flat = [s for a in self.assignments for s in a]
        if len(set(flat)) != len(flat):
            raise MappingError("source classes must not be shared between targets")
        bad = [s for s in flat if not 0 <= s < self.num_sources]
        if bad:
            raise MappingError(f"source class {bad[0]} out of range for {self.num_sources} sources")

    @property
    def k(self) -> int:
        return len(self.assignments[0])

    @property
    def num_targets(self) -> int:
        return len(self.assignments)

    def matrix(self) -> np.ndarray:
        """``(num_sources, num_targets)`` averaging matrix with entries 1/k."""
        m = np.zeros((self.num_sources, self.num_targets), dtype=np.float32)
        for t, sources in enumerate(self.assignments):
            m[list(sources), t] = 1.0 / self.k
        return m

    def to_dict(self) -> dict:
        return {"num_sources": self.num_sources, "k": self.k,
                "assignments": [list(a) for a in self.assignments]}

    @classmethod
    def from_dict(cls, d: dict) -> LabelMapping:
        return cls(tuple(tuple(a) for a in d["assignments"]), int(d["num_sources"]))


# --------------------------------------------------------------------------
# class representations and similarity
# --------------------------------------------------------------------------


def embed(params: ModelParams, waves: np.ndarray, mel_cfg: MelConfig = MelConfig(),
          reprogram: ReprogramLayer | None = None, batch_size: int = 64) -> np.ndarray:
    """Attention-pooled embeddings ``(N, 2 * hidden)`` for a batch of waveforms."""
    out = []
    for i in range(0, len(waves), batch_size):
        x = T.constant(np.asarray(waves[i:i + batch_size], dtype=np.float32))
        if reprogram is not None and reprogram.domain == "waveform":
            x = apply_reprogram(x, reprogram)
        mel = log_mel(x, mel_cfg)
        if reprogram is not None and reprogram.domain == "feature":
            mel = apply_reprogram(mel, reprogram)
        out.append(forward_am(params, mel).embedding.value)
    return np.concatenate(out).astype(np.float64)


def class_means(embeddings: np.ndarray, labels, num_classes: int) -> np.ndarray:
    """Mean embedding per class, ``(num_classes, dim)``."""
    labels = np.asarray(labels)
    means = []
    for c in range(num_classes):
        rows = embeddings[labels == c]
        if len(rows) == 0:
            raise MappingError(f"class {c} has no examples")
        means.append(rows.mean(axis=0))
    return np.stack(means)


def class_representations(params: ModelParams, waves: np.ndarray, labels, num_classes: int,
                          mel_cfg: MelConfig = MelConfig(),
                          reprogram: ReprogramLayer | None = None) -> np.ndarray:
    return class_means(embed(params, waves, mel_cfg, reprogram), labels, num_classes)


def cosine_similarity_matrix(targets: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Rows are targets, columns sources; zero-norm vectors get similarity 0."""
    targets = np.asarray(targets, dtype=np.float64)
    sources = np.asarray(sources, dtype=np.float64)
    if targets.shape[1] != sources.shape[1]:
        raise MappingError(f"embedding dimensions differ: {targets.shape[1]} vs {sources.shape[1]}")
    tn = np.linalg.norm(targets, axis=1, keepdims=True)
    sn = np.linalg.norm(sources, axis=1, keepdims=True)
    num = targets @ sources.T
    den = tn @ sn.T
    sim = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.clip(sim, -1.0, 1.0)


# --------------------------------------------------------------------------
# mapping construction
# --------------------------------------------------------------------------


def _check_capacity(num_sources, num_targets, k):
    if k < 1:
        raise MappingError("k must be >= 1")
    if k * num_targets > num_sources:
        raise MappingError(f"insufficient sources: {num_targets} targets x k={k} needs "
                           f"{k * num_targets}, have {num_sources}")


def build_similarity_mapping(sim: np.ndarray, k: int) -> LabelMapping:
    """Greedy disjoint assignment on a ``(targets, sources)`` similarity matrix.

    Repeatedly takes the largest remaining entry whose source is free and
    whose target still has fewer than ``k`` sources.  Ties go to the lower
    source index, then the lower target index.
    """
    sim = np.asarray(sim, dtype=np.float64)
    n_t, n_s = sim.shape
    _check_capacity(n_s, n_t, k)
    t_idx, s_idx = np.meshgrid(np.arange(n_t), np.arange(n_s), indexing="ij")
    order = np.lexsort((t_idx.ravel(), s_idx.ravel(), -sim.ravel()))
    chosen: list[list[int]] = [[] for _ in range(n_t)]
    used = np.zeros(n_s, dtype=bool)
    remaining = k * n_t
    for flat in order:
        t, s = divmod(int(flat), n_s)
        if used[s] or len(chosen[t]) >= k:
            continue
        chosen[t].append(s)
        used[s] = True
        remaining -= 1
        if remaining == 0:
            break
    return LabelMapping(tuple(tuple(c) for c in chosen), n_s)


def build_random_mapping(num_sources: int, num_targets: int, k: int,
                         rng: np.random.Generator) -> LabelMapping:
    """Disjoint k-subsets drawn uniformly at random."""
    _check_capacity(num_sources, num_targets, k)
    perm = rng.permutation(num_sources)[:k * num_targets]
    return LabelMapping(tuple(tuple(int(s) for s in perm[t * k:(t + 1) * k]) for t in range(num_targets)),
                        num_sources)


def build_one_to_one_mapping(num_sources: int, num_targets: int) -> LabelMapping:
    """Target ``t`` reads source class ``t``."""
    _check_capacity(num_sources, num_targets, 1)
    return LabelMapping(tuple((t,) for t in range(num_targets)), num_sources)


# --------------------------------------------------------------------------
# aggregation
# --------------------------------------------------------------------------


def aggregate_probs(source_probs: np.ndarray, mapping: LabelMapping) -> np.ndarray:
    """Mean of each target's source probabilities, renormalized over targets.

    Accepts ``(num_sources,)`` or a batch ``(N, num_sources)``.
    """
    p = np.asarray(source_probs, dtype=np.float64)
    if p.shape[-1] != mapping.num_sources:
        raise MappingError(f"expected {mapping.num_sources} source probabilities, got {p.shape[-1]}")
    if (p < 0).any():
        raise MappingError("source probabilities must be nonnegative")
    scores = p @ mapping.matrix().astype(np.float64)
    total = scores.sum(axis=-1, keepdims=True)
    uniform = np.full_like(scores, 1.0 / mapping.num_targets)
    return np.divide(scores, total, out=uniform, where=total > 0)


def mapped_log_scores(logits: T.Node, mapping: LabelMapping, floor: float = 1e-12) -> T.Node:
    """Graph for log of the (unnormalized) aggregated target scores.

    Feeding these into ``cross_entropy`` renormalizes them, so the loss is the
    negative log of the renormalized aggregated probability.
    """
    probs = T.softmax(logits, axis=-1)
    scores = T.matmul(probs, T.constant(mapping.matrix()))
    return T.log(T.add(scores, np.asarray(floor, dtype=np.float32)))
