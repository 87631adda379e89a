"""Dataset manifests, low-resource subsampling, and synthetic command audio.

Layout on disk is ``root/<class_name>/*.wav`` with an optional
``root/splits.json`` holding ``"validation"`` and ``"test"`` arrays of paths
relative to ``root``.  Without it, every fifth file of a class (sorted order)
goes to test and every fifth remaining file to validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, fix_length, load_wav, write_wav

SPLITS = ("train", "validation", "test")


class DatasetError(ValueError):
    pass


@dataclass
class DatasetManifest:
    root: str
    classes: list[str]
    train: list[tuple[str, int]] = field(default_factory=list)
    validation: list[tuple[str, int]] = field(default_factory=list)
    test: list[tuple[str, int]] = field(default_factory=list)

    def split(self, name: str) -> list[tuple[str, int]]:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)

    def check(self) -> None:
        seen: dict[str, str] = {}
        for name in SPLITS:
            for path, cid in self.split(name):
                if path in seen:
                    raise DatasetError(f"{path} appears in both {seen[path]} and {name}")
                seen[path] = name
                if not 0 <= cid < len(self.classes):
                    raise DatasetError(f"{path}: class id {cid} out of range")
        present = {cid for _, cid in self.train}
        missing = [c for i, c in enumerate(self.classes) if i not in present]
        if missing:
            raise DatasetError(f"class {missing[0]!r} has no training files")


def scan_dataset(root) -> DatasetManifest:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise DatasetError(f"dataset root {root} has no class folders")
    files: dict[int, list[str]] = {}
    for cid, name in enumerate(classes):
        wavs = sorted(p.relative_to(root).as_posix() for p in (root / name).glob("*.wav"))
        if not wavs:
            raise DatasetError(f"class folder {name!r} has no .wav files")
        files[cid] = wavs
    manifest = DatasetManifest(str(root), classes)
    split_file = root / "splits.json"
    if split_file.exists():
        spec = json.loads(split_file.read_text())
        held = {"validation": set(spec.get("validation", [])), "test": set(spec.get("test", []))}
        for cid, wavs in files.items():
            for w in wavs:
                dest = "test" if w in held["test"] else "validation" if w in held["validation"] else "train"
                manifest.split(dest).append((w, cid))
    else:
        for cid, wavs in files.items():
            rest = [w for i, w in enumerate(wavs) if i % 5 != 4]
            manifest.test.extend((w, cid) for w in wavs[4::5])
            for i, w in enumerate(rest):
                (manifest.validation if i % 5 == 4 else manifest.train).append((w, cid))
    manifest.check()
    return manifest


def limit_indices(labels, per_class_limit: int, rng: np.random.Generator) -> np.ndarray:
    """Indices keeping at most ``per_class_limit`` items per class, in original order."""
    if per_class_limit < 1:
        raise ValueError("per-class limit must be >= 1")
    labels = np.asarray(labels)
    keep = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) > per_class_limit:
            idx = rng.choice(idx, size=per_class_limit, replace=False)
        keep.extend(idx.tolist())
    return np.array(sorted(keep), dtype=np.int64)


def limit_split(manifest: DatasetManifest, per_class_limit: int, rng: np.random.Generator) -> DatasetManifest:
    """Subsample the train split per class; validation and test are untouched."""
    keep = limit_indices([c for _, c in manifest.train], per_class_limit, rng)
    return DatasetManifest(manifest.root, list(manifest.classes),
                           [manifest.train[i] for i in keep],
                           list(manifest.validation), list(manifest.test))


@dataclass
class Split:
    waves: np.ndarray  # (N, samples) float32
    labels: np.ndarray  # (N,) int64

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> Split:
        return Split(self.waves[idx], self.labels[idx])


@dataclass
class TaskData:
    classes: list[str]
    train: Split
    test: Split
    validation: Split | None = None

    @property
    def num_classes(self) -> int:
        return len(self.classes)


def load_split(manifest: DatasetManifest, split: str, length: int = SAMPLE_RATE) -> Split:
    items = manifest.split(split)
    root = Path(manifest.root)
    waves = np.zeros((len(items), length), dtype=np.float32)
    for i, (path, _) in enumerate(items):
        waves[i] = fix_length(load_wav(root / path), length).samples
    return Split(waves, np.array([c for _, c in items], dtype=np.int64))


def load_task(manifest: DatasetManifest, length: int = SAMPLE_RATE) -> TaskData:
    if not manifest.test:
        raise DatasetError(f"dataset {manifest.root} has an empty test split")
    val = load_split(manifest, "validation", length) if manifest.validation else None
    return TaskData(list(manifest.classes), load_split(manifest, "train", length),
                    load_split(manifest, "test", length), val)


# --------------------------------------------------------------------------
# synthetic audio
# --------------------------------------------------------------------------

ENVELOPES = ("hann", "attack", "decay", "double")


@dataclass(frozen=True)
class Prototype:
    """One class: a chirp ``base_freq + chirp_rate * t`` under an envelope."""

    name: str
    base_freq: float
    chirp_rate: float = 0.0
    envelope: str = "hann"
    harmonic: float = 0.0  # relative amplitude of the second harmonic

    def __post_init__(self):
        if self.envelope not in ENVELOPES:
            raise ValueError(f"envelope must be one of {ENVELOPES}")


@dataclass(frozen=True)
class SynthSpec:
    prototypes: tuple[Prototype, ...]
    noise: float = 0.02
    length: int = SAMPLE_RATE
    counts: tuple[int, int, int] = (20, 5, 10)  # train, validation, test per class
    seed: int = 0
    freq_jitter: float = 0.0  # relative, uniform in +-freq_jitter
    max_shift: int = 0  # onset delay in samples, uniform in [0, max_shift]
    active: float = 0.6  # seconds of sound per utterance

    def __post_init__(self):
        nyq = SAMPLE_RATE / 2
        for p in self.prototypes:
            top = max(p.base_freq, p.base_freq + p.chirp_rate * self.active) * (1 + self.freq_jitter)
            if p.harmonic:
                top *= 2
            if not 0 < p.base_freq or top >= nyq:
                raise ValueError(f"prototype {p.name!r} reaches {top:.0f} Hz, above Nyquist")
        if self.noise < 0:
            raise ValueError("noise level must be >= 0")


def _envelope(kind: str, n: int) -> np.ndarray:
    u = np.linspace(0.0, 1.0, n, endpoint=False)
    if kind == "hann":
        return np.sin(np.pi * u) ** 2
    if kind == "attack":
        return np.minimum(1.0, u / 0.1) * np.exp(-3.0 * u)
    if kind == "decay":
        return np.minimum(1.0, (1.0 - u) / 0.1) * np.exp(-3.0 * (1.0 - u))
    return np.sin(2 * np.pi * u) ** 2  # double


def synth_utterance(proto: Prototype, spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n_active = int(spec.active * SAMPLE_RATE)
    scale = 1.0 + (rng.uniform(-spec.freq_jitter, spec.freq_jitter) if spec.freq_jitter else 0.0)
    shift = int(rng.integers(0, spec.max_shift + 1)) if spec.max_shift else 0
    t = np.arange(n_active) / SAMPLE_RATE
    freq = (proto.base_freq + proto.chirp_rate * t) * scale
    phase = 2 * np.pi * np.cumsum(freq) / SAMPLE_RATE
    tone = np.sin(phase) + proto.harmonic * np.sin(2 * phase)
    tone *= 0.5 / (1.0 + proto.harmonic) * _envelope(proto.envelope, n_active)
    out = np.zeros(spec.length)
    start = min(shift + (spec.length - n_active) // 4, spec.length - n_active)
    out[start:start + n_active] = tone
    if spec.noise:
        out += rng.normal(0.0, spec.noise, spec.length)
    return np.clip(out, -1.0, 32767 / 32768)


def generate_synthetic(spec: SynthSpec, out_dir) -> DatasetManifest:
    """Write PCM16 WAVs plus ``splits.json``; byte-identical for a fixed seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    held: dict[str, list[str]] = {"validation": [], "test": []}
    for proto in spec.prototypes:
        (out / proto.name).mkdir(exist_ok=True)
        for split, count in zip(SPLITS, spec.counts):
            for i in range(count):
                rel = f"{proto.name}/{split}_{i:04d}.wav"
                write_wav(out / rel, synth_utterance(proto, spec, rng))
                if split != "train":
                    held[split].append(rel)
    (out / "splits.json").write_text(json.dumps(held, indent=1, sort_keys=True) + "\n")
    return scan_dataset(out)


def default_source_prototypes() -> tuple[Prototype, ...]:
    """Six source commands spread over frequency, sweep and envelope."""
    return (
        Prototype("s0_low", 400.0, 300.0, "hann", 0.3),
        Prototype("s1_lowmid", 700.0, -300.0, "attack", 0.0),
        Prototype("s2_mid", 1100.0, 800.0, "decay", 0.5),
        Prototype("s3_midhigh", 1700.0, -900.0, "double", 0.2),
        Prototype("s4_high", 2500.0, 1000.0, "hann", 0.0),
        Prototype("s5_top", 3000.0, -1000.0, "attack", 0.4),
    )


def planted_target_prototypes(source: tuple[Prototype, ...], num_targets: int,
                              rng: np.random.Generator, perturb: float = 0.06
                              ) -> tuple[tuple[Prototype, ...], list[int]]:
    """Target classes as perturbed copies of distinct source classes.

    Returns the prototypes and, for each target, the index of the source
    class it was derived from.
    """
    if num_targets > len(source):
        raise ValueError("more targets than source classes")
    picks = sorted(rng.choice(len(source), size=num_targets, replace=False).tolist())
    protos = []
    for t, s in enumerate(picks):
        p = source[s]
        protos.append(Prototype(
            f"t{t}",
            p.base_freq * (1.0 + rng.uniform(-perturb, perturb)),
            p.chirp_rate * (1.0 + rng.uniform(-3 * perturb, 3 * perturb)),
            p.envelope,
            p.harmonic * (1.0 + rng.uniform(-0.5, 0.5)),
        ))
    return tuple(protos), picks


@dataclass(frozen=True)
class DeskScenario:
    """Source/target pair with planted correspondences, sized for one CPU.

    Target classes are perturbed copies of ``num_targets`` distinct source
    classes, so a similarity mapping has a known right answer.
    """

    num_targets: int = 3
    noise: float = 0.15
    freq_jitter: float = 0.12
    max_shift: int = 3200
    source_counts: tuple[int, int, int] = (200, 10, 20)
    target_counts: tuple[int, int, int] = (20, 5, 20)
    perturb: float = 0.06

    def _common(self):
        return dict(noise=self.noise, freq_jitter=self.freq_jitter, max_shift=self.max_shift)

    def source_spec(self, seed: int = 0) -> SynthSpec:
        return SynthSpec(default_source_prototypes(), counts=self.source_counts, seed=seed, **self._common())

    def target_spec(self, seed: int = 0) -> tuple[SynthSpec, list[int]]:
        protos, planted = planted_target_prototypes(default_source_prototypes(), self.num_targets,
                                                    np.random.default_rng(seed), self.perturb)
        return SynthSpec(protos, counts=self.target_counts, seed=seed + 1, **self._common()), planted

    def generate(self, out_dir, seed: int = 0) -> tuple[DatasetManifest, DatasetManifest, list[int]]:
        out = Path(out_dir)
        source = generate_synthetic(self.source_spec(seed), out / "source")
        spec, planted = self.target_spec(seed)
        return source, generate_synthetic(spec, out / "target"), planted
