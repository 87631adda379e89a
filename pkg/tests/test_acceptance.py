"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary)
before asserting, so a failing criterion still reports what it measured.
The desk-scale criteria share one synthetic scenario and one pretrained
source model.
"""

import json
import statistics
import time
from dataclasses import replace

import numpy as np
import pytest

from arscr import cli
from arscr import data as D
from arscr import dsp
from arscr import mapping as L
from arscr import model as M
from arscr import reprogram as R
from arscr import tensor as T
from arscr import training as TR
from arscr.dsp import SpecAugmentConfig
from arscr.model import ModelConfig
from arscr.training import TrainConfig

from gradcases import check_all_ops
from oracles import lex_best_assignment

DESK = D.DeskScenario()
DESK_MODEL = ModelConfig(num_classes=6)
PRETRAIN_EPOCHS = 15
RUNS = 10
LIMIT = 10


# ---------------------------------------------------------------- desk scenario


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    src_m, tgt_m, planted = DESK.generate(root, seed=0)
    source, target = D.load_task(src_m), D.load_task(tgt_m)
    t0 = time.perf_counter()
    pretrained, report = TR.pretrain_source(source, TrainConfig(epochs=PRETRAIN_EPOCHS, model=DESK_MODEL))
    print(f"desk pretrain: {time.perf_counter() - t0:.0f}s, source test accuracy {report.accuracy:.3f}")
    reps = TR.source_representations(pretrained, source)
    return {"root": root, "source": source, "target": target, "planted": planted,
            "pretrained": pretrained, "reps": reps, "reports": {}, "seconds": {}}


SYSTEMS = {
    "baseline": dict(regime="baseline"),
    "tl": dict(regime="tl"),
    "tl_aug": dict(regime="tl", augment=True),
    "ar_sim": dict(regime="ar", mapping="similarity"),
    "ar_random": dict(regime="ar", mapping="random"),
    "ar_tl": dict(regime="ar_tl", mapping="similarity"),
}


def desk_report(desk, system: str) -> TR.ExperimentReport:
    """Ten-seed experiment for one system, computed once per session."""
    if system not in desk["reports"]:
        cfg = TrainConfig(limit=LIMIT, model=DESK_MODEL, **SYSTEMS[system])
        pre = None if cfg.regime == "baseline" else desk["pretrained"]
        t0 = time.perf_counter()
        desk["reports"][system] = TR.run_experiment(cfg, desk["target"], pre, desk["reps"], n_runs=RUNS,
                                                    system=system)
        desk["seconds"][system] = time.perf_counter() - t0
    return desk["reports"][system]


# ---------------------------------------------------------------- 1


def _pipeline_error() -> float:
    """Waveform offset -> log-mel -> acoustic model -> mapped cross-entropy."""
    cfg = ModelConfig(conv_channels=(6, 8), hidden=6, attention_dim=6, num_classes=6)
    params = M.init_model(cfg, np.random.default_rng(0))
    params.set_trainable(False)
    x = np.random.default_rng(1).normal(0, 0.1, (2, 4000)).astype(np.float32)
    layer = R.make_layer(4000, scale=0.01, rng=np.random.default_rng(3))
    mapping = L.LabelMapping(((0, 3), (5, 1), (2, 4)), 6)
    labels = np.array([0, 2])

    def loss(ps):
        mel = dsp.log_mel(R.apply(T.constant(x), layer))
        return T.cross_entropy(L.mapped_log_scores(M.forward_am(params, mel).logits, mapping), labels)

    return T.grad_check(loss, [layer.theta], 1e-4, n_samples=30, rng=np.random.default_rng(4), dtype=np.float64)


def test_1_gradient_correctness(verdict):
    t0 = time.perf_counter()
    worst = check_all_ops(trials=100, seed=0)
    op_name, op_err = max(worst.items(), key=lambda kv: kv[1])
    pipe_err = _pipeline_error()
    seconds = time.perf_counter() - t0
    ok = op_err < 1e-3 and pipe_err < 1e-2 and seconds < 60
    verdict(1, ok, f"{len(worst)} ops x 100 trials, worst {op_name} {op_err:.1e} (< 1e-3); "
                   f"pipeline {pipe_err:.1e} (< 1e-2); {seconds:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2


def test_2_reprogramming_algebra(verdict):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    failures = []
    for i in range(200):
        d_t = int(rng.integers(1, 40))
        d_s = d_t + int(rng.integers(0, 20))
        x = (rng.normal(size=(2, d_t)) * 10.0 ** rng.integers(-3, 3)).astype(np.float32)
        if T.evaluate(R.reprogram_full(x, R.make_layer(d_t))).tobytes() != x.tobytes():
            failures.append(f"identity {i}")
        theta = R.init_theta(d_t, 1.0, rng)
        full = T.evaluate(R.reprogram_full(x, R.ReprogramLayer(theta, "full", "waveform")))
        ones = R.ReprogramLayer(theta, "pad-mask", "waveform", np.ones(d_t, np.float32))
        if T.evaluate(R.reprogram_pad(x, ones)).tobytes() != full.tobytes():
            failures.append(f"reduction {i}")
        layer = R.make_layer(d_s, "pad-mask", scale=1.0, rng=rng, target_len=d_t)
        out = T.evaluate(R.reprogram_pad(x, layer))
        expect = np.concatenate([x, np.broadcast_to(layer.theta.value[d_t:], (2, d_s - d_t))], axis=1)
        if not (np.array_equal(layer.mask, np.r_[np.zeros(d_t), np.ones(d_s - d_t)])
                and out.tobytes() == expect.astype(np.float32).tobytes()):
            failures.append(f"mask {i}")
    seconds = time.perf_counter() - t0
    ok = not failures and seconds < 1.0
    verdict(2, ok, f"200 instances, identity/reduction/mask failures {failures[:3]}; {seconds:.2f}s")
    assert ok


# ---------------------------------------------------------------- 3


def _instance(rng, small: bool):
    k = int(rng.integers(1, 4))
    n_t = int(rng.integers(1, (4 if small else 10) + 1))
    hi = 8 if small else 35
    while k * n_t > hi:
        n_t -= 1
    n_s = int(rng.integers(k * n_t, hi + 1))
    if rng.random() < 0.3:  # coarse values force ties
        return rng.integers(-2, 3, (n_t, n_s)) / 2, k
    return rng.uniform(-1, 1, (n_t, n_s)), k


def test_3_label_mapping_invariants(verdict):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    bad, brute = [], 0
    for i in range(1000):
        sim, k = _instance(rng, small=i % 2 == 0)
        n_t, n_s = sim.shape
        m = L.build_similarity_mapping(sim, k)
        flat = [s for a in m.assignments for s in a]
        if len(set(flat)) != len(flat) or any(len(a) != k for a in m.assignments):
            bad.append(f"disjoint/exact-k {i}")
        p = rng.dirichlet(np.ones(n_s))
        q = L.aggregate_probs(p, m)
        if abs(q.sum() - 1.0) > 1e-6 or (q < 0).any():
            bad.append(f"distribution {i}")
        if np.argmax(L.aggregate_probs(p * rng.uniform(1e-3, 1e3), m)) != np.argmax(q):
            bad.append(f"scaling {i}")
        if n_t <= 4 and n_s <= 8:
            brute += 1
            if tuple(tuple(sorted(a)) for a in m.assignments) != lex_best_assignment(sim, k):
                bad.append(f"brute force {i}")
    seconds = time.perf_counter() - t0
    ok = not bad and brute >= 400 and seconds < 60
    verdict(3, ok, f"1000 instances ({brute} brute-forced), failures {bad[:3]}; {seconds:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4


def test_4_planted_correspondence_recovery(desk, verdict, tmp_path):
    t0 = time.perf_counter()
    hits = []
    for seed in range(10):
        spec, planted = DESK.target_spec(seed=100 + seed)
        target = D.load_task(D.generate_synthetic(spec, tmp_path / f"t{seed}"))
        reps = L.class_representations(desk["pretrained"], target.train.waves, target.train.labels,
                                       target.num_classes)
        m = L.build_similarity_mapping(L.cosine_similarity_matrix(reps, desk["reps"]), 1)
        hits.append([s for (s,) in m.assignments] == planted)
    seconds = time.perf_counter() - t0
    ok = sum(hits) >= 9 and seconds < 300
    verdict(4, ok, f"planted pairing recovered in {sum(hits)}/10 seeds; {seconds:.0f}s")
    assert ok


# ---------------------------------------------------------------- 5


def test_5_freeze_contract(desk, verdict):
    pre = desk["pretrained"]
    before = M.checkpoint_bytes(pre)
    cfg = TrainConfig(regime="ar", limit=LIMIT, epochs=3, model=DESK_MODEL)
    res = TR.train_regime(cfg, desk["target"], pre, desk["reps"])
    same = M.checkpoint_bytes(res.params) == before and M.checkpoint_bytes(pre) == before
    n = res.report.trainable_params
    ok = same and n == 16000 and res.layer.theta.shape == (16000,)
    verdict(5, ok, f"checkpoint bytes identical after AR: {same}; trainable params {n} (== 16000)")
    assert ok


# ---------------------------------------------------------------- 6


def test_6_desk_scale_trends(desk, verdict):
    reps = {s: desk_report(desk, s) for s in ("baseline", "tl", "ar_tl", "ar_sim", "ar_random")}
    avg = {s: r.average for s, r in reps.items()}
    seconds = sum(desk["seconds"][s] for s in reps)
    for s, r in reps.items():
        print(f"{s:10s} {r.average:6.2f} +- {r.std:5.2f}  ({desk['seconds'][s]:.0f}s)")
    ok = (avg["ar_tl"] >= avg["tl"] >= avg["baseline"] and avg["ar_sim"] >= avg["ar_random"]
          and seconds < 900)
    verdict(6, ok, f"AR+TL {avg['ar_tl']:.1f} >= TL {avg['tl']:.1f} >= Baseline {avg['baseline']:.1f}; "
                   f"AR-sim {avg['ar_sim']:.1f} >= AR-random {avg['ar_random']:.1f}; {RUNS} seeds, {seconds:.0f}s")
    assert ok


# ---------------------------------------------------------------- 7


def test_7_protocol_arithmetic(verdict):
    r1 = round(TR.rel_improvement(82.3, 64.0), 2)
    r2 = round(TR.rel_improvement(88.6, 70.3), 1)
    checks = [r1 == 28.59, r2 == 26.0]
    lists = [[50.0, 62.5, 75.0], [81.0, 83.5, 79.25, 90.0], [100.0, 100.0], [12.5, 40.0, 33.0, 33.0, 71.25]]
    for accs in lists:
        runs = [TR.RunReport(i, i, a / 100, 1) for i, a in enumerate(accs)]
        rep = TR.ExperimentReport("x", runs)
        checks.append(abs(rep.std - statistics.stdev(accs)) < 1e-9)
        checks.append(abs(rep.average - statistics.mean(accs)) < 1e-9)
    # [50, 62.5, 75]: deviations -12.5, 0, 12.5 -> 312.5 / (3 - 1) -> 12.5
    checks.append(abs(TR.ExperimentReport("x", [TR.RunReport(i, i, a / 100, 1)
                                                for i, a in enumerate(lists[0])]).std - 12.5) < 1e-9)
    ok = all(checks)
    verdict(7, ok, f"rel_improvement 28.59 -> {r1}, 26.0 -> {r2}; sample std matches hand oracle on "
                   f"{len(lists)} lists: {all(checks[2:])}")
    assert ok


# ---------------------------------------------------------------- 8


def test_8_experiment_determinism(verdict, tmp_path):
    def write(name, doc):
        (tmp_path / name).write_text(json.dumps(doc))
        return str(tmp_path / name)

    synth = {"synth": {"source_counts": [12, 2, 4], "target_counts": [6, 2, 4], "num_targets": 2}}
    assert cli.main(["synth", write("s.json", synth), "--out", str(tmp_path / "data")]) == 0
    base = {"source_dataset": str(tmp_path / "data" / "source"), "dataset": str(tmp_path / "data" / "target"),
            "checkpoint": str(tmp_path / "pre.arsc"), "pretrain_epochs": 2, "epochs": 2, "runs": 2,
            "model": {"conv_channels": [6, 8], "hidden": 6, "attention_dim": 6}}
    assert cli.main(["pretrain", write("p.json", base), "--out", str(tmp_path / "pre")]) == 0
    identical = []
    for regime, extra in [("baseline", {}), ("ar_tl", {"augment": True}), ("ar", {"mapping": "random"})]:
        cfg = write(f"{regime}.json", {**base, "regime": regime, **extra})
        outs = []
        for rep in ("a", "b"):
            assert cli.main(["experiment", cfg, "--out", str(tmp_path / f"{regime}_{rep}")]) == 0
            outs.append([(tmp_path / f"{regime}_{rep}" / f).read_bytes() for f in ("report.json", "report.csv")])
        identical.append(outs[0] == outs[1])
    ok = all(identical)
    verdict(8, ok, f"repeated experiment reports byte-identical for baseline/ar_tl+aug/ar-random: {identical}")
    assert ok


# ---------------------------------------------------------------- 9


def test_9_parameter_budget(verdict):
    n = M.init_model(ModelConfig(), np.random.default_rng(0)).count()
    ok = abs(n - 200_400) <= 0.05 * 200_400
    verdict(9, ok, f"default model has {n} parameters (200400 +- 5%)")
    assert ok


# ---------------------------------------------------------------- 10


def _spec_augment_contract() -> list[str]:
    rng = np.random.default_rng(0)
    bad = []
    for i in range(300):
        frames, bins = int(rng.integers(5, 120)), int(rng.integers(5, 60))
        nf, nt = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        wf, wt = int(rng.integers(0, 15)), int(rng.integers(0, 40))
        mel = rng.uniform(1, 2, (frames, bins)).astype(np.float32)
        seed = int(rng.integers(2**32))
        out = dsp.spec_augment(mel, SpecAugmentConfig(nf, wf, nt, wt), np.random.default_rng(seed))
        changed = out != mel
        if (out[changed] != 0).any():
            bad.append(f"non-zero change {i}")
        # each single-stripe config zeroes one contiguous run no wider than its bound
        one_f = dsp.spec_augment(mel, SpecAugmentConfig(1, wf, 0, 0), np.random.default_rng(seed))
        one_t = dsp.spec_augment(mel, SpecAugmentConfig(0, 0, 1, wt), np.random.default_rng(seed))
        cols = np.flatnonzero((one_f == 0).all(axis=0))
        rows = np.flatnonzero((one_t == 0).all(axis=1))
        if len(cols) > min(wf, bins) or (len(cols) and cols[-1] - cols[0] + 1 != len(cols)):
            bad.append(f"freq width {i}")
        if len(rows) > min(wt, frames) or (len(rows) and rows[-1] - rows[0] + 1 != len(rows)):
            bad.append(f"time width {i}")
        again = dsp.spec_augment(mel, SpecAugmentConfig(nf, wf, nt, wt), np.random.default_rng(seed))
        if again.tobytes() != out.tobytes():
            bad.append(f"determinism {i}")
    return bad


def test_10_spec_augment(desk, verdict):
    bad = _spec_augment_contract()
    tl, aug = desk_report(desk, "tl"), desk_report(desk, "tl_aug")
    drop = tl.average - aug.average
    ok = not bad and drop <= 5.0
    verdict(10, ok, f"mask contract failures {bad[:3]}; TL {tl.average:.1f} +- {tl.std:.1f}, "
                    f"TL+aug {aug.average:.1f} +- {aug.std:.1f} (drop {drop:.1f} <= 5 points, {RUNS} seeds)")
    assert ok
