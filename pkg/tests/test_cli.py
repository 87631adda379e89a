import csv
import json

import pytest

from arscr import cli
from arscr.training import ExperimentReport, RunReport

TINY_MODEL = {"conv_channels": [6, 8], "hidden": 6, "attention_dim": 6}


def test_minimal_config_gets_defaults():
    cfg = cli.parse_config(doc={"regime": "baseline", "dataset": "d"})
    assert cfg.regime == "baseline" and cfg.dataset == "d"
    assert cfg.lr_am == 1e-3 and cfg.epochs == 50
    assert cfg.mel.hop_length == 160 and cfg.mel.mel_bins == 40
    assert cfg.specaugment.max_time_width == 20


def test_config_file(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"regime": "tl", "mel": {"mel_bins": 32}, "model": {"mel_bins": 32}}))
    cfg = cli.parse_config(f)
    assert cfg.mel.mel_bins == 32 and cfg.train_config().model.mel_bins == 32
    f.write_text("{oops")
    with pytest.raises(cli.ConfigError, match="invalid JSON"):
        cli.parse_config(f)
    with pytest.raises(cli.ConfigError, match="cannot read config"):
        cli.parse_config(tmp_path / "missing.json")


@pytest.mark.parametrize("doc, path, msg", [
    ({"regime": "arr"}, "$.regime", "must be one of"),
    ({"k": 4}, "$.k", "k must be 2 or 3"),
    ({"colour": 1}, "$.colour", "unknown key"),
    ({"mel": {"hop": 10}}, "$.mel.hop", "unknown key"),
    ({"epochs": "ten"}, "$.epochs", "integer"),
    ({"lr_am": True}, "$.lr_am", "number"),
    ({"augment": 1}, "$.augment", "boolean"),
    ({"mapping": "nearest"}, "$.mapping", "must be one of"),
    ({"model": {"conv_channels": [1]}}, "$.model.conv_channels", "list of 2"),
    ({"mel": {"frame_length": 1024}}, "$.mel", "frame_length"),
    ({"runs": 1}, "$.runs", ">= 2"),
])
def test_config_errors_carry_json_path(doc, path, msg):
    with pytest.raises(cli.ConfigError, match=msg) as info:
        cli.parse_config(doc=doc)
    assert info.value.path == path


def test_one_to_one_allows_k1():
    assert cli.parse_config(doc={"mapping": "one_to_one", "k": 1}).k == 1


def test_paths_validated_before_work(tmp_path):
    cfg = cli.parse_config(doc={"regime": "tl", "dataset": str(tmp_path), "checkpoint": str(tmp_path / "no.arsc")})
    with pytest.raises(cli.ConfigError, match="no.arsc") as info:
        cli.validate_paths(cfg, "train")
    assert info.value.path == "$.checkpoint"
    with pytest.raises(cli.ConfigError, match="required"):
        cli.validate_paths(cli.parse_config(doc={}), "experiment")


def _report(accs, params=216400, baseline=None, system="ar_tl", limit=None):
    return ExperimentReport(system, [RunReport(i, i, a, params) for i, a in enumerate(accs)], limit, baseline)


def test_csv_row_layout(tmp_path):
    d = 2.56 / 2 ** 0.5
    rep = _report([(82.3 - d) / 100, (82.3 + d) / 100], baseline=64.0)
    cli.write_report(rep, tmp_path / "r.csv", "csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(cli.CSV_COLUMNS)
    assert lines[1] == "ar_tl,,82.30,28.59,2.56,2,216400"


def test_json_round_trip(tmp_path):
    rep = _report([0.5, 0.625, 0.75], params=16000, baseline=40.0, system="ar", limit=10)
    cli.write_report(rep, tmp_path / "r.json")
    assert cli.read_report(tmp_path / "r.json") == rep
    with pytest.raises(ValueError):
        cli.write_report(rep, tmp_path / "r.txt", "txt")


def test_main_reports_errors_as_one_json_line(tmp_path, capsys):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"regime": "arr"}))
    assert cli.main(["train", str(f)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    doc = json.loads(err[0])
    assert doc["error"] == "ConfigError" and "$.regime" in doc["message"]


# ---------------------------------------------------------------- end to end


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    synth = {"synth": {"source_counts": [16, 2, 4], "target_counts": [6, 2, 4], "num_targets": 2}}
    assert cli.main(["synth", _write(root / "synth.json", synth), "--out", str(root / "data")]) == 0
    base = {
        "source_dataset": str(root / "data" / "source"),
        "dataset": str(root / "data" / "target"),
        "checkpoint": str(root / "pre.arsc"),
        "model": TINY_MODEL,
        "pretrain_epochs": 2,
        "epochs": 2,
        "lr_theta": 1e-3,
    }
    assert cli.main(["pretrain", _write(root / "pre.json", base), "--out", str(root / "pre")]) == 0
    return root, base


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_synth_outputs(pipeline):
    root, _ = pipeline
    planted = json.loads((root / "data" / "planted.json").read_text())
    assert len(planted["planted"]) == 2
    assert (root / "data" / "source" / "splits.json").exists()


def test_pretrain_writes_checkpoint(pipeline, capsys):
    root, _ = pipeline
    assert (root / "pre.arsc").stat().st_size > 0
    assert "test_accuracy" in json.loads((root / "pre" / "pretrain.json").read_text())
    assert "pretrain: test accuracy" in (root / "pre" / "arscr.log").read_text()


def test_map_labels_outputs(pipeline):
    root, base = pipeline
    assert cli.main(["map-labels", _write(root / "m.json", {**base, "k": 3}), "--out", str(root / "map")]) == 0
    mapping = json.loads((root / "map" / "mapping.json").read_text())
    assert mapping["k"] == 3 and len(mapping["assignments"]) == 2
    rows = list(csv.reader((root / "map" / "similarity.csv").open()))
    assert len(rows) == 3 and len(rows[0]) == 7
    assert all(-1 <= float(v) <= 1 for r in rows[1:] for v in r[1:])


def test_train_then_evaluate(pipeline):
    root, base = pipeline
    cfg = _write(root / "t.json", {**base, "regime": "ar"})
    assert cli.main(["train", cfg, "--out", str(root / "ar")]) == 0
    run = json.loads((root / "ar" / "run.json").read_text())
    assert run["trainable_params"] == 16000
    assert (root / "ar" / "model.arsc").read_bytes() == (root / "pre.arsc").read_bytes()
    assert cli.main(["evaluate", cfg, "--out", str(root / "ar")]) == 0
    ev = json.loads((root / "ar" / "evaluation.json").read_text())
    assert ev["accuracy"] == run["accuracy"]


def test_pad_mask_train_then_evaluate(pipeline):
    root, base = pipeline
    cfg = _write(root / "p.json", {**base, "regime": "ar", "mode": "pad-mask", "source_length": 17600,
                                   "epochs": 1})
    assert cli.main(["train", cfg, "--out", str(root / "pad")]) == 0
    run = json.loads((root / "pad" / "run.json").read_text())
    assert run["trainable_params"] == 17600
    assert cli.main(["evaluate", cfg, "--out", str(root / "pad")]) == 0
    assert json.loads((root / "pad" / "evaluation.json").read_text())["accuracy"] == run["accuracy"]


def test_experiment_is_byte_identical(pipeline):
    root, base = pipeline
    cfg = _write(root / "e.json", {**base, "regime": "ar_tl", "runs": 2, "epochs": 1})
    outputs = []
    for name in ("e1", "e2"):
        assert cli.main(["experiment", cfg, "--out", str(root / name)]) == 0
        outputs.append({f: (root / name / f).read_bytes() for f in ("report.json", "report.csv")})
    assert outputs[0] == outputs[1]
    assert cli.read_report(root / "e1" / "report.json").n_runs == 2
