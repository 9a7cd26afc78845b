#!/usr/bin/env python3
"""Grid search for the fixed-lambda TpV baseline.

Runs the reweighted solver at the schedule's final sparsity exponent over
a small phantom batch and prints mean RE per lambda. The committed
defaults in inctpv.experiment.DEFAULT_FIXED_LAMBDA come from this script
at each task's default intensity scale.

Usage: python3 scripts/search_lambda.py deblur --count 4 --side 128
"""

import argparse

import numpy as np

from inctpv import (
    FanBeamGeometry,
    FanBeamOperator,
    GaussianBlurOperator,
    IrConfig,
    NoiseModel,
    StackedOperator,
    corrupt,
    estimate_operator_norm,
    fbp_reconstruct,
    generate_batch,
    ir_solve,
    relative_error,
)

DEFAULTS = {
    "deblur": {"nu": 0.02, "scale": 255.0, "k_ir": 270, "p": 0.5 ** 3,
               "grid": (1.0, 5.0, 20.0, 50.0, 70.0, 100.0, 140.0, 200.0, 500.0)},
    "ct": {"nu": 0.005, "scale": 1.0, "k_ir": 1000, "p": 0.7 ** 5,
           "grid": (0.0002, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02)},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=("deblur", "ct"))
    ap.add_argument("--count", type=int, default=4)
    ap.add_argument("--side", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lambdas", type=float, nargs="*", default=None)
    args = ap.parse_args()

    d = DEFAULTS[args.task]
    grid = args.lambdas if args.lambdas else d["grid"]
    images = generate_batch(args.count, side=args.side, seed=args.seed)
    if args.task == "deblur":
        K = GaussianBlurOperator(args.side)
    else:
        K = FanBeamOperator(FanBeamGeometry(image_side=args.side))
    norm = estimate_operator_norm(StackedOperator(K))
    s = d["scale"]

    rows = []
    for lam in grid:
        errors = []
        for i, gt in enumerate(images):
            y = corrupt(gt, K, NoiseModel(d["nu"], seed=1000 + i))
            x0 = y if args.task == "deblur" else fbp_reconstruct(y, operator=K)
            cfg = IrConfig(p=d["p"], lam=lam, k_ir=d["k_ir"])
            x, _ = ir_solve(K, s * y, s * x0, cfg, op_norm=norm)
            errors.append(relative_error(x / s, gt))
        rows.append((lam, float(np.mean(errors))))
        print(f"lambda={lam:<10g} mean RE={rows[-1][1]:.4f}", flush=True)
    best = min(rows, key=lambda r: r[1])
    print(f"best: lambda={best[0]:g} (mean RE {best[1]:.4f})")


if __name__ == "__main__":
    main()
