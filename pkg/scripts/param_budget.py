"""Print the per-tensor parameter breakdown of a model configuration.

    python3 scripts/param_budget.py
    python3 scripts/param_budget.py --hidden 64 --num-classes 10
"""

import argparse
import math
from dataclasses import replace

from arscr.model import ModelConfig, parameter_shapes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int)
    ap.add_argument("--num-classes", type=int)
    ap.add_argument("--mel-bins", type=int)
    args = ap.parse_args()
    cfg = ModelConfig()
    overrides = {k: v for k, v in vars(args).items() if v is not None}
    cfg = replace(cfg, **overrides)
    total = 0
    for name, shape, _ in parameter_shapes(cfg):
        n = math.prod(shape)
        total += n
        print(f"{name:28s} {str(shape):18s} {n:8d}")
    print(f"{'total':28s} {'':18s} {total:8d}")


if __name__ == "__main__":
    main()
