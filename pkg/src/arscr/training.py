"""Training regimes and the multi-run evaluation protocol.

Regimes:

* ``baseline`` - fresh model, target classes as the output layer.
* ``tl``       - pretrained model, output layer replaced, everything fine-tuned.
* ``ar``       - pretrained model frozen; only the reprogram offset is trained,
                 through the label mapping.
* ``ar_tl``    - reprogram offset and pretrained model trained together,
                 through the label mapping (the source output layer is kept).

Defaults: Adam, 50 epochs, batch 16.  Model weights trained from scratch use
lr 1e-3.  Weights fine-tuned from a checkpoint use 1e-4, because Adam's
normalized first steps at 1e-3 knock an already well-mapped model far off its
starting point.  The offset uses 1e-3.  When a validation split exists the
best-validation state is kept, otherwise the final epoch.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .data import Split, TaskData, limit_indices
from .dsp import MelConfig, SpecAugmentConfig, log_mel, spec_augment
from .mapping import (
    LabelMapping,
    aggregate_probs,
    build_one_to_one_mapping,
    build_random_mapping,
    build_similarity_mapping,
    class_representations,
    cosine_similarity_matrix,
    mapped_log_scores,
)
from .model import ModelConfig, ModelParams, forward_am, init_model, replace_head
from .reprogram import ReprogramLayer, apply as apply_reprogram, make_layer

log = logging.getLogger(__name__)

REGIMES = ("baseline", "tl", "ar", "ar_tl")
MAPPINGS = ("similarity", "random", "one_to_one")


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    regime: str = "ar_tl"
    lr_am: float = 1e-3
    lr_finetune: float = 1e-4  # model weights that start from a checkpoint (tl, ar_tl)
    lr_theta: float = 1e-3
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    mapping: str = "similarity"
    k: int = 2
    domain: str = "waveform"
    mode: str = "full"
    theta_scale: float = 0.0
    source_length: int = 16000  # d_S for pad-mask mode, in samples
    augment: bool = False
    limit: int | None = None
    mel: MelConfig = field(default_factory=MelConfig)
    specaugment: SpecAugmentConfig = field(default_factory=SpecAugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.mapping not in MAPPINGS:
            raise ValueError(f"mapping must be one of {MAPPINGS}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    @property
    def uses_reprogram(self) -> bool:
        return self.regime in ("ar", "ar_tl")


@dataclass
class RunReport:
    run_index: int
    seed: int
    accuracy: float
    trainable_params: int
    loss_curve: list[float] = field(default_factory=list)
    initial_loss: float | None = None
    final_loss: float | None = None
    val_curve: list[float] = field(default_factory=list)
    mapping: dict | None = None


@dataclass
class RunResult:
    params: ModelParams
    layer: ReprogramLayer | None
    mapping: LabelMapping | None
    report: RunReport


# --------------------------------------------------------------------------
# graph helpers
# --------------------------------------------------------------------------


def features(waves: np.ndarray, mel_cfg: MelConfig, batch_size: int = 128) -> np.ndarray:
    """Log-mel arrays ``(N, frames, mel_bins)`` for inputs that need no gradient."""
    out = [log_mel(T.constant(waves[i:i + batch_size]), mel_cfg).value for i in range(0, len(waves), batch_size)]
    return np.concatenate(out)


def _mel_input(waves, mels, idx, layer: ReprogramLayer | None, mel_cfg, aug_masks=None) -> T.Node:
    if layer is not None and layer.domain == "waveform":
        mel = log_mel(apply_reprogram(T.constant(waves[idx]), layer), mel_cfg)
    else:
        mel = T.constant(mels[idx])
    if aug_masks is not None:
        mel = T.mul(mel, T.constant(aug_masks))
    if layer is not None and layer.domain == "feature":
        mel = apply_reprogram(mel, layer)
    return mel


def _loss(params, mel, labels, mapping):
    logits = forward_am(params, mel).logits
    if mapping is not None:
        logits = mapped_log_scores(logits, mapping)
    return T.cross_entropy(logits, labels)


def _augment_masks(shape, cfg: SpecAugmentConfig, rng) -> np.ndarray:
    ones = np.ones(shape[1:], dtype=np.float32)
    return np.stack([spec_augment(ones, cfg, rng) for _ in range(shape[0])])


def predict_probs(params: ModelParams, waves: np.ndarray, mel_cfg: MelConfig = MelConfig(),
                  layer: ReprogramLayer | None = None, mapping: LabelMapping | None = None,
                  mels: np.ndarray | None = None, batch_size: int = 64) -> np.ndarray:
    if mels is None and (layer is None or layer.domain == "feature"):
        mels = features(waves, mel_cfg)
    out = []
    for i in range(0, len(waves), batch_size):
        idx = np.arange(i, min(i + batch_size, len(waves)))
        mel = _mel_input(waves, mels, idx, layer, mel_cfg)
        probs = T.softmax(forward_am(params, mel).logits, axis=-1).value.astype(np.float64)
        out.append(aggregate_probs(probs, mapping) if mapping is not None else probs)
    return np.concatenate(out)


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty test set")
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    return float((predictions == labels).mean())


def evaluate(params: ModelParams, test: Split, mel_cfg: MelConfig = MelConfig(),
             layer: ReprogramLayer | None = None, mapping: LabelMapping | None = None,
             mels: np.ndarray | None = None) -> float:
    """Fraction of utterances whose (aggregated) argmax matches the label."""
    if len(test) == 0:
        raise ValueError("empty test set")
    if mapping is None and params.config.num_classes <= int(test.labels.max()):
        raise RegimeError("model has fewer outputs than the test labels need; pass a label mapping")
    probs = predict_probs(params, test.waves, mel_cfg, layer, mapping, mels)
    return accuracy(probs.argmax(axis=1), test.labels)


def _full_loss(params, waves, mels, labels, layer, mapping, mel_cfg, batch_size=64) -> float:
    total = 0.0
    for i in range(0, len(labels), batch_size):
        idx = np.arange(i, min(i + batch_size, len(labels)))
        loss = _loss(params, _mel_input(waves, mels, idx, layer, mel_cfg), labels[idx], mapping)
        total += float(loss.value) * len(idx)
    return total / len(labels)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def fit(params: ModelParams, train: Split, cfg: TrainConfig, rng: np.random.Generator,
        layer: ReprogramLayer | None = None, mapping: LabelMapping | None = None,
        validation: Split | None = None) -> RunReport:
    """Adam training loop shared by every regime.  Mutates ``params``/``layer``
    in place and leaves them at the best-validation (or final) state."""
    mel_cfg = cfg.mel
    needs_wave_graph = layer is not None and layer.domain == "waveform"
    mels = None if needs_wave_graph else features(train.waves, mel_cfg)
    val_mels = None
    if validation is not None and not needs_wave_graph:
        val_mels = features(validation.waves, mel_cfg)
    am_state = T.AdamState(lr=cfg.lr_am if cfg.regime == "baseline" else cfg.lr_finetune)
    theta_state = T.AdamState(lr=cfg.lr_theta)
    trainables = [p for p in params if p.trainable]
    n_trainable = sum(p.size for p in trainables) + (layer.num_params if layer is not None else 0)

    report = RunReport(0, cfg.seed, float("nan"), n_trainable)
    report.initial_loss = _full_loss(params, train.waves, mels, train.labels, layer, mapping, mel_cfg)
    best = (-1.0, None)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = None
            if cfg.augment:
                frames = mel_cfg.num_frames(train.waves.shape[1])
                masks = _augment_masks((len(idx), frames, mel_cfg.mel_bins), cfg.specaugment, rng)
            mel = _mel_input(train.waves, mels, idx, layer, mel_cfg, masks)
            loss = _loss(params, mel, train.labels[idx], mapping)
            grads = T.backward(loss)
            T.adam_step(trainables, grads, am_state)
            if layer is not None:
                T.adam_step([layer.theta], grads, theta_state)
            losses.append(float(loss.value))
        report.loss_curve.append(float(np.mean(losses)))
        if validation is not None:
            acc = evaluate(params, validation, mel_cfg, layer, mapping, val_mels)
            report.val_curve.append(acc)
            if acc > best[0]:
                best = (acc, _snapshot(params, layer))
    if best[1] is not None:
        _restore(params, layer, best[1])
    report.final_loss = _full_loss(params, train.waves, mels, train.labels, layer, mapping, mel_cfg)
    return report


def _snapshot(params, layer):
    return [p.value.copy() for p in params], None if layer is None else layer.theta.value.copy()


def _restore(params, layer, snap):
    values, theta = snap
    for p, v in zip(params, values):
        p.value = v
    if layer is not None:
        layer.theta.value = theta


def pretrain_source(source: TaskData, cfg: TrainConfig, model_cfg: ModelConfig | None = None
                    ) -> tuple[ModelParams, RunReport]:
    """Supervised cross-entropy training of the acoustic model on the source task."""
    if len(source.train) == 0:
        raise ValueError("source dataset is empty")
    model_cfg = model_cfg or replace(cfg.model, num_classes=source.num_classes)
    rng = np.random.default_rng(cfg.seed)
    params = init_model(model_cfg, rng)
    report = fit(params, source.train, replace(cfg, regime="baseline"), rng, validation=source.validation)
    report.accuracy = evaluate(params, source.test, cfg.mel)
    log.info("pretrain: test accuracy %.4f", report.accuracy)
    return params, report


def source_representations(pretrained: ModelParams, source: TaskData, mel_cfg: MelConfig = MelConfig()) -> np.ndarray:
    return class_representations(pretrained, source.train.waves, source.train.labels,
                                 source.num_classes, mel_cfg)


def build_mapping(cfg: TrainConfig, pretrained: ModelParams, target_train: Split, num_targets: int,
                  source_reps: np.ndarray | None, rng: np.random.Generator) -> tuple[LabelMapping, np.ndarray | None]:
    """Label mapping for a reprogramming run; returns the similarity matrix too when used."""
    num_sources = pretrained.config.num_classes
    if cfg.mapping == "one_to_one":
        return build_one_to_one_mapping(num_sources, num_targets), None
    if cfg.mapping == "random":
        return build_random_mapping(num_sources, num_targets, cfg.k, rng), None
    if source_reps is None:
        raise RegimeError("similarity mapping needs source-class representations")
    # target representations use the untrained (zero) offset, i.e. the raw input
    target_reps = class_representations(pretrained, target_train.waves, target_train.labels, num_targets, cfg.mel)
    sim = cosine_similarity_matrix(target_reps, source_reps)
    return build_similarity_mapping(sim, cfg.k), sim


def _theta_shape(cfg: TrainConfig, num_samples: int):
    if cfg.mode == "pad-mask":
        if cfg.domain != "waveform":
            raise RegimeError("pad-mask mode is only defined in the waveform domain")
        if num_samples > cfg.source_length:
            raise RegimeError("target longer than source")
        return (cfg.source_length,)
    if cfg.domain == "waveform":
        return (num_samples,)
    return (cfg.mel.num_frames(num_samples), cfg.mel.mel_bins)


def train_regime(cfg: TrainConfig, target: TaskData, pretrained: ModelParams | None = None,
                 source_reps: np.ndarray | None = None, mapping: LabelMapping | None = None,
                 run_index: int = 0) -> RunResult:
    """Train one system for ``cfg.regime`` on ``target``; ``pretrained`` is left untouched."""
    if cfg.regime == "baseline" and pretrained is not None:
        raise RegimeError("baseline trains from scratch and must not receive a checkpoint")
    if cfg.regime != "baseline" and pretrained is None:
        raise RegimeError(f"regime {cfg.regime!r} needs a pretrained checkpoint")
    rng = np.random.default_rng(cfg.seed)
    train = target.train
    if cfg.limit is not None:
        train = train.subset(limit_indices(train.labels, cfg.limit, rng))
    layer = None
    if cfg.regime == "baseline":
        params = init_model(replace(cfg.model, num_classes=target.num_classes), rng)
    elif cfg.regime == "tl":
        params = replace_head(pretrained, target.num_classes, rng)
        params.set_trainable(True)
    else:
        params = pretrained.copy()
        params.set_trainable(cfg.regime == "ar_tl")
        if mapping is None:
            mapping, _ = build_mapping(cfg, pretrained, train, target.num_classes, source_reps, rng)
        layer = make_layer(_theta_shape(cfg, train.waves.shape[1]), cfg.mode, cfg.domain,
                           cfg.theta_scale, rng, target_len=train.waves.shape[1])
    report = fit(params, train, cfg, rng, layer, mapping, target.validation)
    report.run_index = run_index
    report.accuracy = evaluate(params, target.test, cfg.mel, layer, mapping)
    report.mapping = mapping.to_dict() if mapping is not None else None
    log.info("%s run %d (seed %d): accuracy %.4f", cfg.regime, run_index, cfg.seed, report.accuracy)
    return RunResult(params, layer, mapping, report)


# --------------------------------------------------------------------------
# protocol
# --------------------------------------------------------------------------


def rel_improvement(acc: float, baseline_acc: float) -> float:
    """Relative improvement in percent."""
    if baseline_acc == 0:
        raise ZeroDivisionError("baseline accuracy must be nonzero")
    return 100.0 * (acc - baseline_acc) / baseline_acc


def mean_std(values) -> tuple[float, float]:
    """Mean and sample (n - 1) standard deviation."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        raise ValueError("need at least two runs for a sample std")
    return float(values.mean()), float(values.std(ddof=1))


@dataclass
class ExperimentReport:
    system: str
    runs: list[RunReport]
    limit: int | None = None
    baseline_avg: float | None = None

    @property
    def accuracies_pct(self) -> list[float]:
        return [100.0 * r.accuracy for r in self.runs]

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def average(self) -> float:
        return mean_std(self.accuracies_pct)[0]

    @property
    def std(self) -> float:
        return mean_std(self.accuracies_pct)[1]

    @property
    def rel_improvement(self) -> float | None:
        if self.baseline_avg is None:
            return None
        return rel_improvement(self.average, self.baseline_avg)

    @property
    def trainable_params(self) -> int:
        return self.runs[0].trainable_params if self.runs else 0

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "limit": self.limit,
            "baseline_avg": self.baseline_avg,
            "n_runs": self.n_runs,
            "avg_acc_pct": self.average,
            "std_pct": self.std,
            "rel_imp_pct": self.rel_improvement,
            "trainable_params": self.trainable_params,
            "runs": [asdict(r) for r in self.runs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentReport:
        return cls(d["system"], [RunReport(**r) for r in d["runs"]], d.get("limit"), d.get("baseline_avg"))


def _one_run(args):
    cfg, target, pretrained, source_reps, i = args
    return train_regime(replace(cfg, seed=cfg.seed + i), target, pretrained, source_reps, run_index=i).report


def run_experiment(cfg: TrainConfig, target: TaskData, pretrained: ModelParams | None = None,
                   source_reps: np.ndarray | None = None, n_runs: int = 10,
                   baseline_avg: float | None = None, workers: int = 1,
                   system: str | None = None) -> ExperimentReport:
    """Repeat ``train_regime`` with seeds ``seed, seed + 1, ...`` and summarize."""
    if n_runs < 2:
        raise ValueError("n_runs must be >= 2")
    jobs = [(cfg, target, pretrained, source_reps, i) for i in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_one_run, jobs))
    else:
        runs = [_one_run(j) for j in jobs]
    runs.sort(key=lambda r: r.run_index)
    return ExperimentReport(system or cfg.regime, runs, cfg.limit, baseline_avg)
