"""Command-line entry point.

    arscr synth       CONFIG --out DIR     generate synthetic source/target datasets
    arscr pretrain    CONFIG               train the source model, write ``checkpoint``
    arscr map-labels  CONFIG               label mapping + similarity matrix CSV
    arscr train       CONFIG               one run of ``regime``
    arscr evaluate    CONFIG               test accuracy of a ``train`` output directory
    arscr experiment  CONFIG [--runs N]    multi-run protocol, JSON + CSV reports

Every command takes one JSON config; ``--seed``, ``--out`` and ``--runs``
override the matching keys.  Failures exit nonzero with one JSON line on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import typing
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from . import data as D
from .dsp import MelConfig, SpecAugmentConfig
from .mapping import LabelMapping
from .model import ModelConfig, decode_tensors, encode_tensors, load_checkpoint, save_checkpoint
from .reprogram import DOMAINS, MODES, ReprogramLayer
from .tensor import Parameter
from .training import (
    MAPPINGS,
    REGIMES,
    ExperimentReport,
    TrainConfig,
    build_mapping,
    evaluate,
    pretrain_source,
    run_experiment,
    source_representations,
    train_regime,
)

log = logging.getLogger("arscr")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class CliConfig:
    regime: str = "ar_tl"
    lr_am: float = 1e-3
    lr_finetune: float = 1e-4
    lr_theta: float = 1e-3
    epochs: int = 50
    pretrain_epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    mapping: str = "similarity"
    k: int = 2
    domain: str = "waveform"
    mode: str = "full"
    theta_scale: float = 0.0
    source_length: int = 16000
    augment: bool = False
    limit: int | None = None
    runs: int = 10
    system: str | None = None
    workers: int = 1
    dataset: str | None = None
    source_dataset: str | None = None
    checkpoint: str | None = None
    baseline_report: str | None = None
    out: str = "out"
    mel: MelConfig = field(default_factory=MelConfig)
    specaugment: SpecAugmentConfig = field(default_factory=SpecAugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    synth: D.DeskScenario = field(default_factory=D.DeskScenario)

    def train_config(self, **overrides) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        values = {k: getattr(self, k) for k in names}
        values.update(overrides)
        return TrainConfig(**values)


_ENUMS = {"regime": REGIMES, "mapping": MAPPINGS, "domain": DOMAINS, "mode": MODES}


def _convert(tp, value, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if is_dataclass(tp):
        return _build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, list) or len(value) != len(args):
            raise ConfigError(path, f"expected a list of {len(args)} items")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected a boolean")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    raise ConfigError(path, f"unsupported type {tp}")


def _build(cls, doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")
    values = {k: _convert(hints[k], v, f"{path}.{k}") for k, v in doc.items()}
    for k, v in values.items():
        if k in _ENUMS and cls is CliConfig and v not in _ENUMS[k]:
            raise ConfigError(f"{path}.{k}", f"must be one of {list(_ENUMS[k])}, got {v!r}")
    try:
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def read_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError("$", f"cannot read config {path}: {exc.strerror}") from None
    if not isinstance(doc, dict):
        raise ConfigError("$", "expected an object")
    return doc


def parse_config(path=None, doc: dict | None = None) -> CliConfig:
    """Load and validate a JSON config; errors carry the JSON path of the field."""
    cfg = _build(CliConfig, read_config(path) if doc is None else doc, "$")
    if cfg.mapping in ("similarity", "random") and cfg.k not in (2, 3):
        raise ConfigError("$.k", "k must be 2 or 3")
    if cfg.limit is not None and cfg.limit < 1:
        raise ConfigError("$.limit", "must be >= 1")
    if cfg.runs < 2:
        raise ConfigError("$.runs", "must be >= 2")
    if cfg.model.mel_bins != cfg.mel.mel_bins:
        raise ConfigError("$.model.mel_bins", "must equal mel.mel_bins")
    return cfg


def _require(cfg: CliConfig, key: str, kind: str = "dir") -> Path:
    value = getattr(cfg, key)
    if value is None:
        raise ConfigError(f"$.{key}", "required for this command")
    p = Path(value)
    if kind == "dir" and not p.is_dir():
        raise ConfigError(f"$.{key}", f"directory {value} does not exist")
    if kind == "file" and not p.is_file():
        raise ConfigError(f"$.{key}", f"file {value} does not exist")
    return p


def validate_paths(cfg: CliConfig, command: str) -> None:
    """Check every path a command will read before any work starts."""
    if command == "pretrain":
        _require(cfg, "source_dataset")
        if cfg.checkpoint is None:
            raise ConfigError("$.checkpoint", "required for this command")
    elif command == "map-labels":
        _require(cfg, "checkpoint", "file")
        _require(cfg, "source_dataset")
        _require(cfg, "dataset")
    elif command in ("train", "experiment"):
        _require(cfg, "dataset")
        if cfg.regime != "baseline":
            _require(cfg, "checkpoint", "file")
        if cfg.regime in ("ar", "ar_tl") and cfg.mapping == "similarity":
            _require(cfg, "source_dataset")
        if command == "experiment" and cfg.baseline_report is not None:
            _require(cfg, "baseline_report", "file")
    elif command == "evaluate":
        _require(cfg, "dataset")
        model = Path(cfg.out) / "model.arsc"
        if not model.is_file():
            raise ConfigError("$.out", f"{model} does not exist; run `train` first")


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

CSV_COLUMNS = ("system", "limit", "avg_acc_pct", "rel_imp_pct", "std_pct", "n_runs", "trainable_params")


def report_rows(reports: list[ExperimentReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        rel = r.rel_improvement
        rows.append([r.system, "" if r.limit is None else str(r.limit), f"{r.average:.2f}",
                     "" if rel is None else f"{rel:.2f}", f"{r.std:.2f}", str(r.n_runs), str(r.trainable_params)])
    return rows


def write_report(report: ExperimentReport | list[ExperimentReport], path, fmt: str = "json") -> None:
    """CSV: one summary row per system at two decimals.  JSON: full per-run detail."""
    reports = report if isinstance(report, list) else [report]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(report_rows(reports))
        Path(path).write_text(buf.getvalue())
    elif fmt == "json":
        doc = [r.to_dict() for r in reports]
        Path(path).write_text(json.dumps(doc if isinstance(report, list) else doc[0], indent=2) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def read_report(path) -> ExperimentReport:
    doc = json.loads(Path(path).read_text())
    return ExperimentReport.from_dict(doc[0] if isinstance(doc, list) else doc)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _load(root, cfg: CliConfig) -> D.TaskData:
    return D.load_task(D.scan_dataset(root))


def cmd_synth(cfg: CliConfig, out: Path) -> dict:
    _, _, planted = cfg.synth.generate(out, cfg.seed)
    doc = {"planted": planted, "source": str(out / "source"), "target": str(out / "target")}
    _write_json(out / "planted.json", doc)
    return doc


def cmd_pretrain(cfg: CliConfig, out: Path) -> dict:
    source = _load(cfg.source_dataset, cfg)
    tcfg = cfg.train_config(epochs=cfg.pretrain_epochs)
    params, report = pretrain_source(source, tcfg, replace(cfg.model, num_classes=source.num_classes))
    save_checkpoint(params, cfg.checkpoint)
    doc = {"checkpoint": cfg.checkpoint, "test_accuracy": report.accuracy, "params": params.count(),
           "loss_curve": report.loss_curve, "val_curve": report.val_curve}
    _write_json(out / "pretrain.json", doc)
    return {"checkpoint": cfg.checkpoint, "test_accuracy": report.accuracy}


def _source_reps(cfg, pretrained):
    if cfg.source_dataset is None:
        return None
    return source_representations(pretrained, _load(cfg.source_dataset, cfg), cfg.mel)


def cmd_map_labels(cfg: CliConfig, out: Path) -> dict:
    pretrained = load_checkpoint(cfg.checkpoint)
    source = _load(cfg.source_dataset, cfg)
    target = _load(cfg.dataset, cfg)
    train = target.train
    if cfg.limit is not None:
        train = train.subset(D.limit_indices(train.labels, cfg.limit, np.random.default_rng(cfg.seed)))
    reps = source_representations(pretrained, source, cfg.mel)
    tcfg = cfg.train_config(mapping="similarity")
    mapping, sim = build_mapping(tcfg, pretrained, train, target.num_classes, reps, np.random.default_rng(cfg.seed))
    with open(out / "similarity.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["target"] + source.classes)
        for name, row in zip(target.classes, sim):
            writer.writerow([name] + [f"{v:.6f}" for v in row])
    doc = {**mapping.to_dict(), "targets": target.classes,
           "sources": [[source.classes[s] for s in a] for a in mapping.assignments]}
    _write_json(out / "mapping.json", doc)
    return doc


def _pretrained(cfg):
    return None if cfg.regime == "baseline" else load_checkpoint(cfg.checkpoint)


def cmd_train(cfg: CliConfig, out: Path) -> dict:
    target = _load(cfg.dataset, cfg)
    pretrained = _pretrained(cfg)
    reps = _source_reps(cfg, pretrained) if cfg.regime in ("ar", "ar_tl") and cfg.mapping == "similarity" else None
    result = train_regime(cfg.train_config(), target, pretrained, reps)
    save_checkpoint(result.params, out / "model.arsc")
    if result.layer is not None:
        tensors = [(result.layer.theta.name, result.layer.theta.value)]
        if result.layer.mask is not None:
            tensors.append(("reprogram.mask", result.layer.mask))
        (out / "theta.arsc").write_bytes(encode_tensors(tensors))
    if result.mapping is not None:
        _write_json(out / "mapping.json", result.mapping.to_dict())
    r = result.report
    doc = {"regime": cfg.regime, "seed": r.seed, "accuracy": r.accuracy, "trainable_params": r.trainable_params,
           "initial_loss": r.initial_loss, "final_loss": r.final_loss, "loss_curve": r.loss_curve}
    _write_json(out / "run.json", doc)
    return {"accuracy": r.accuracy, "trainable_params": r.trainable_params}


def cmd_evaluate(cfg: CliConfig, out: Path) -> dict:
    target = _load(cfg.dataset, cfg)
    params = load_checkpoint(out / "model.arsc")
    layer = mapping = None
    theta_file = out / "theta.arsc"
    if theta_file.exists():
        tensors = decode_tensors(theta_file.read_bytes())
        name, value = tensors[0]
        mask = tensors[1][1] if len(tensors) > 1 else None
        layer = ReprogramLayer(Parameter(name, value), "full" if mask is None else "pad-mask", cfg.domain, mask)
    if (out / "mapping.json").exists():
        mapping = LabelMapping.from_dict(json.loads((out / "mapping.json").read_text()))
    acc = evaluate(params, target.test, cfg.mel, layer, mapping)
    doc = {"accuracy": acc, "n_test": len(target.test)}
    _write_json(out / "evaluation.json", doc)
    return doc


def cmd_experiment(cfg: CliConfig, out: Path) -> dict:
    target = _load(cfg.dataset, cfg)
    pretrained = _pretrained(cfg)
    reps = _source_reps(cfg, pretrained) if cfg.regime in ("ar", "ar_tl") and cfg.mapping == "similarity" else None
    baseline_avg = read_report(cfg.baseline_report).average if cfg.baseline_report else None
    report = run_experiment(cfg.train_config(), target, pretrained, reps, cfg.runs, baseline_avg, cfg.workers,
                            cfg.system)
    write_report(report, out / "report.json", "json")
    write_report(report, out / "report.csv", "csv")
    return {"avg_acc_pct": report.average, "std_pct": report.std, "n_runs": report.n_runs}


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "map-labels": cmd_map_labels,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arscr", description="Adversarial reprogramming for spoken commands")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?" if name == "synth" else None, help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--runs", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = read_config(args.config) if args.config else {}
        for key in ("seed", "out", "runs"):
            if getattr(args, key) is not None:
                doc[key] = getattr(args, key)
        cfg = parse_config(doc=doc)
        validate_paths(cfg, args.command)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(out / "arscr.log")
        handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
        root = logging.getLogger("arscr")
        root.addHandler(handler)
        root.setLevel(logging.INFO)
        try:
            result = COMMANDS[args.command](cfg, out)
        finally:
            root.removeHandler(handler)
            handler.close()
    except Exception as exc:  # noqa: BLE001 - reported as one machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
