"""Training of the guess networks.

Each step h gets its own network. Inputs at h = 0 are the start images
from the dataset; at h >= 1 they are chained through the previously
trained networks, so every network sees the inputs it will receive at
inference time. Targets are either the ground-truth images (gt mode) or
the next incremental solver output (mb mode, ground-truth-free).

Training is Adam on mean squared error with a fixed seed and in-process
data loading, so runs are reproducible on one machine. Exact bitwise
reproducibility across hardware is not guaranteed.
"""

import csv
import os
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch.utils.data import DataLoader

from .data import PairDataset, TrainingSet
from .onnx_export import export_resunet
from .resunet import ResUNetSpec, build_resunet


@dataclass(frozen=True)
class TrainingRun:
    """Hyperparameters for one network's training."""

    mode: str
    h: int
    learning_rate: float = 0.001
    epochs: int = 100
    batch_size: int = 8
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.mode not in ("gt", "mb"):
            raise ValueError(f"mode must be 'gt' or 'mb', got {self.mode!r}")
        if self.h < 0:
            raise ValueError(f"h must be >= 0, got {self.h}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(
                f"val_fraction must be in [0, 1), got {self.val_fraction}"
            )


def _split_indices(n: int, run: TrainingRun):
    """Shuffle sample indices under the run seed and split them 90/10
    (or per val_fraction). Small sets may end up with an empty
    validation side."""
    order = np.random.default_rng(run.seed).permutation(n)
    n_val = int(round(n * run.val_fraction))
    n_val = min(n_val, n - 1)
    return order[: n - n_val].tolist(), order[n - n_val:].tolist()


def _mse_over(net, dataset, indices) -> float:
    if not indices:
        return float("nan")
    net.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for i in indices:
            x, t = dataset[i]
            pred = net(x.unsqueeze(0))
            total += float(torch.mean((pred - t.unsqueeze(0)) ** 2))
            count += 1
    return total / count


def train_guess_network(inputs, targets, run: TrainingRun,
                        spec: ResUNetSpec, out_path):
    """Train one network and export it; returns (network, log rows).

    Log rows are dicts with epoch, train_mse, and val_mse, each evaluating
    the epoch-end network on the two splits; epoch 0 is the freshly
    initialized network before any update.
    """
    dataset = PairDataset(inputs, targets)
    side = dataset.inputs[0].shape[-1]
    train_idx, val_idx = _split_indices(len(dataset), run)

    torch.manual_seed(run.seed + 1009 * run.h)
    net = build_resunet(spec)
    optimizer = torch.optim.Adam(net.parameters(), lr=run.learning_rate)
    loader = DataLoader(
        torch.utils.data.Subset(dataset, train_idx),
        batch_size=run.batch_size, shuffle=True,
        generator=torch.Generator().manual_seed(run.seed + 1),
        num_workers=0,
    )

    log = [{
        "epoch": 0,
        "train_mse": _mse_over(net, dataset, train_idx),
        "val_mse": _mse_over(net, dataset, val_idx),
    }]
    for epoch in range(1, run.epochs + 1):
        net.train()
        for x, t in loader:
            optimizer.zero_grad()
            loss = torch.mean((net(x) - t) ** 2)
            loss.backward()
            optimizer.step()
        log.append({
            "epoch": epoch,
            "train_mse": _mse_over(net, dataset, train_idx),
            "val_mse": _mse_over(net, dataset, val_idx),
        })

    if log[-1]["train_mse"] >= log[0]["train_mse"]:
        warnings.warn(
            f"step {run.h} ({run.mode}): training MSE did not decrease over "
            f"{run.epochs} epochs ({log[0]['train_mse']:.3e} -> "
            f"{log[-1]['train_mse']:.3e})"
        )

    net.eval()
    export_resunet(net, side, out_path)
    return net, log


def _chain(net, inputs):
    """Push every input through the network, clamping to the nonnegative
    range like the inference-time guess operator does."""
    net.eval()
    out = []
    with torch.no_grad():
        for x in inputs:
            t = torch.from_numpy(
                np.asarray(x, dtype=np.float32)
            ).reshape(1, 1, *x.shape)
            out.append(np.maximum(net(t).numpy()[0, 0].astype(np.float64), 0.0))
    return out


def _write_log(path, log):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_mse", "val_mse"])
        writer.writeheader()
        writer.writerows(log)


def train_all(dataset_dir, out_dir, *, H: int, mode: str,
              spec: ResUNetSpec = ResUNetSpec(), epochs: int = 100,
              learning_rate: float = 0.001, batch_size: int = 8,
              seed: int = 0):
    """Train the H guess networks in sequence.

    Writes psi_{h}.onnx and psi_{h}_log.csv for h = 0..H-1 under out_dir
    and returns a list of per-step summaries (model path, log path,
    parameter count, final train/val MSE).
    """
    if H < 1:
        raise ValueError(f"H must be >= 1, got {H}")
    data = TrainingSet(dataset_dir)
    os.makedirs(out_dir, exist_ok=True)

    inputs = data.starts
    summaries = []
    for h in range(H):
        targets = data.targets_for(mode, h)
        run = TrainingRun(mode=mode, h=h, learning_rate=learning_rate,
                          epochs=epochs, batch_size=batch_size, seed=seed)
        model_path = os.path.join(out_dir, f"psi_{h}.onnx")
        net, log = train_guess_network(inputs, targets, run, spec, model_path)
        log_path = os.path.join(out_dir, f"psi_{h}_log.csv")
        _write_log(log_path, log)
        summaries.append({
            "h": h,
            "model": model_path,
            "log": log_path,
            "parameters": net.parameter_count,
            "train_mse": log[-1]["train_mse"],
            "val_mse": log[-1]["val_mse"],
        })
        if h + 1 < H:
            inputs = _chain(net, inputs)
    return summaries
