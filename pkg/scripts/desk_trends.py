"""Desk-scale comparison of all systems on the synthetic planted scenario.

Generates the source/target pair, pretrains once, then runs every system
for ``--runs`` seeds with ``--limit`` training examples per target class.

    python3 scripts/desk_trends.py --runs 10 --out desk_out
"""

import argparse
import json
import logging
import time
from pathlib import Path

from arscr import data as D
from arscr import training as TR
from arscr.model import ModelConfig
from arscr.training import TrainConfig

SYSTEMS = [
    ("baseline", dict(regime="baseline")),
    ("tl", dict(regime="tl")),
    ("tl_aug", dict(regime="tl", augment=True)),
    ("ar_random", dict(regime="ar", mapping="random")),
    ("ar_sim", dict(regime="ar")),
    ("ar_tl", dict(regime="ar_tl")),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--limit", type=int, default=10)
    ap.add_argument("--pretrain-epochs", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="desk_out")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    src_m, tgt_m, planted = D.DeskScenario().generate(out / "data", args.seed)
    source, target = D.load_task(src_m), D.load_task(tgt_m)
    model = ModelConfig(num_classes=source.num_classes)
    pre, rep = TR.pretrain_source(source, TrainConfig(epochs=args.pretrain_epochs, model=model, seed=args.seed))
    reps = TR.source_representations(pre, source)
    print(f"planted sources {planted}; source test accuracy {rep.accuracy:.3f}")

    rows, baseline = [], None
    for name, kw in SYSTEMS:
        cfg = TrainConfig(limit=args.limit, model=model, seed=args.seed, **kw)
        t0 = time.perf_counter()
        r = TR.run_experiment(cfg, target, None if cfg.regime == "baseline" else pre, reps,
                              n_runs=args.runs, baseline_avg=baseline, workers=args.workers, system=name)
        baseline = baseline if baseline is not None else r.average
        rows.append(r.to_dict())
        rel = "" if r.rel_improvement is None else f"{r.rel_improvement:+7.2f}%"
        print(f"{name:10s} {r.average:6.2f} +- {r.std:5.2f} {rel:>9s}  params {r.trainable_params:7d}"
              f"  {time.perf_counter() - t0:5.0f}s")
    (out / "trends.json").write_text(json.dumps(rows, indent=1) + "\n")


if __name__ == "__main__":
    main()
