"""Command line entry point: train guess networks from an exported
training-pair dataset."""

import argparse
import sys

from .resunet import ResUNetSpec
from .train import train_all


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="resunet-train",
        description="Train the H guess networks on an exported pair dataset "
                    "and write psi_{h}.onnx files plus per-epoch loss logs.",
    )
    parser.add_argument("--dataset", required=True,
                        help="dataset directory with manifest.jsonl")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--mode", required=True, choices=("gt", "mb"),
                        help="target regime: ground truth or incremental "
                             "solver outputs")
    parser.add_argument("-H", "--steps", type=int, required=True,
                        help="number of networks to train")
    parser.add_argument("--levels", type=int, default=3)
    parser.add_argument("--base-width", type=int, default=64)
    parser.add_argument("--kernel", type=int, default=3)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    spec = ResUNetSpec(levels=args.levels, base_width=args.base_width,
                       kernel_size=args.kernel)
    try:
        summaries = train_all(
            args.dataset, args.out, H=args.steps, mode=args.mode, spec=spec,
            epochs=args.epochs, learning_rate=args.lr,
            batch_size=args.batch_size, seed=args.seed,
        )
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for s in summaries:
        print(f"psi_{s['h']}: {s['model']} ({s['parameters']} parameters, "
              f"final train MSE {s['train_mse']:.3e}, "
              f"val MSE {s['val_mse']:.3e})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
