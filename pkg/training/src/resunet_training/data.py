"""Training-pair dataset IO.

Reads the dataset directory written by the solver toolkit's
export-training step: 16-bit grayscale PNGs plus a JSON-lines manifest
whose header row describes the pairing and whose item rows point at the
start image, the optional ground truth, and the optional incremental
snapshots for each sample.
"""

import json
import os

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset


def load_png(path) -> np.ndarray:
    """Read one grayscale PNG as float64 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.dtype == np.uint16:
        return arr.astype(np.float64) / 65535.0
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    raise ValueError(f"{path}: unsupported PNG pixel type {arr.dtype}")


def load_manifest(dataset_dir):
    """Return (header, items) from the dataset manifest.

    Raises ValueError when the manifest is missing, has no header row, or
    the header does not describe a training-pairs dataset.
    """
    path = os.path.join(dataset_dir, "manifest.jsonl")
    if not os.path.exists(path):
        raise ValueError(f"{dataset_dir}: no manifest.jsonl")
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    if not rows or rows[0].get("record") != "header":
        raise ValueError(f"{path}: manifest has no header row")
    header = rows[0]
    if header.get("kind") != "training-pairs":
        raise ValueError(f"{path}: expected a training-pairs manifest, "
                         f"got kind {header.get('kind')!r}")
    items = [r for r in rows[1:] if r.get("record") == "item"]
    if not items:
        raise ValueError(f"{path}: manifest has no items")
    return header, items


class TrainingSet:
    """All images of one dataset, loaded into memory.

    starts[i] is the h = 0 input. gts[i] is the ground truth (None when
    the dataset was exported without it). snapshots[i] is the list of
    incremental outputs, coarsest step first (empty when absent).
    """

    def __init__(self, dataset_dir):
        self.header, items = load_manifest(dataset_dir)
        self.side = int(self.header["side"])
        self.starts, self.gts, self.snapshots = [], [], []
        for row in items:
            self.starts.append(load_png(os.path.join(dataset_dir, row["start"])))
            gt_rel = row.get("gt")
            self.gts.append(
                load_png(os.path.join(dataset_dir, gt_rel)) if gt_rel else None
            )
            self.snapshots.append([
                load_png(os.path.join(dataset_dir, rel))
                for rel in row.get("snapshots") or []
            ])

    def __len__(self):
        return len(self.starts)

    def targets_for(self, mode: str, h: int):
        """Target images for training step h under the given mode."""
        if mode == "gt":
            if any(g is None for g in self.gts):
                raise ValueError(
                    "gt targets requested but the dataset has no ground-truth "
                    "images; re-export with mode gt or both"
                )
            return list(self.gts)
        if mode == "mb":
            if any(len(s) <= h for s in self.snapshots):
                raise ValueError(
                    f"mb targets for step {h} need snapshot {h + 1} but the "
                    "dataset does not include it; re-export with a deeper run"
                )
            return [s[h] for s in self.snapshots]
        raise ValueError(f"mode must be 'gt' or 'mb', got {mode!r}")


class PairDataset(Dataset):
    """Input/target image pairs as float32 tensors with a channel axis."""

    def __init__(self, inputs, targets):
        if len(inputs) != len(targets):
            raise ValueError(f"{len(inputs)} inputs vs {len(targets)} targets")
        self.inputs = [torch.from_numpy(np.asarray(x, dtype=np.float32))
                       .unsqueeze(0) for x in inputs]
        self.targets = [torch.from_numpy(np.asarray(t, dtype=np.float32))
                        .unsqueeze(0) for t in targets]

    def __len__(self):
        return len(self.inputs)

    def __getitem__(self, i):
        return self.inputs[i], self.targets[i]
