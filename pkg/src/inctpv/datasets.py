"""Dataset IO: the noise model, 16-bit PNG image files, dataset manifests,
and export of training pairs for the guess networks.

Images travel as 16-bit grayscale PNG in [0, 1]; observations that are not
image-shaped (sinograms) use .npy files. Manifests are JSON lines.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .operators import LinearOperator


@dataclass(frozen=True)
class NoiseModel:
    nu: float
    seed: int = 0

    def __post_init__(self):
        if self.nu < 0.0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")


def corrupt(x, K: LinearOperator, noise: NoiseModel) -> np.ndarray:
    """y = Kx + nu * (||Kx|| / ||e||) * e with e drawn i.i.d. standard normal.

    The scaling makes the relative noise norm ||y - Kx|| / ||Kx|| equal nu
    exactly. A zero signal is returned unchanged.
    """
    clean = K.apply(np.asarray(x, dtype=np.float64))
    if noise.nu == 0.0:
        return clean
    signal = np.linalg.norm(clean)
    if signal == 0.0:
        return clean
    rng = np.random.default_rng(noise.seed)
    e = rng.standard_normal(clean.shape)
    return clean + noise.nu * (signal / np.linalg.norm(e)) * e


# ------------------------------------------------------------------ files

PNG_PEAK = 65535


def save_png16(path, img) -> None:
    """Write an image in [0, 1] as 16-bit grayscale PNG (values clipped)."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    scaled = np.round(arr * PNG_PEAK).astype(np.uint16)
    Image.fromarray(scaled).save(path)


def load_png(path) -> np.ndarray:
    """Read a grayscale PNG (8- or 16-bit) rescaled to [0, 1]."""
    with Image.open(path) as im:
        if im.mode == "I;16":
            return np.asarray(im, dtype=np.float64) / PNG_PEAK
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        if im.mode == "I":
            return np.asarray(im, dtype=np.float64) / PNG_PEAK
        converted = im.convert("L")
        return np.asarray(converted, dtype=np.float64) / 255.0


def load_image_folder(path):
    """Load every PNG in a directory (sorted), rescaled to [0, 1].

    Returns a list of 2-D arrays; errors on mixed sizes."""
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".png"))
    images = []
    for name in names:
        img = load_png(os.path.join(path, name))
        if images and img.shape != images[0].shape:
            raise ValueError(
                f"{name}: size {img.shape} differs from {images[0].shape}"
            )
        images.append(img)
    return images


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_phantom_dataset(out_dir, images, base_seed: int, side: int) -> str:
    """Write ground-truth images plus a manifest; returns the manifest path."""
    os.makedirs(os.path.join(out_dir, "gt"), exist_ok=True)
    rows = [{"record": "header", "kind": "phantoms", "side": side,
             "count": len(images), "base_seed": base_seed}]
    for i, img in enumerate(images):
        rel = f"gt/{i:04d}.png"
        save_png16(os.path.join(out_dir, rel), img)
        rows.append({"record": "item", "index": i, "file": rel,
                     "seed": base_seed + i,
                     "sha256": sha256_file(os.path.join(out_dir, rel))})
    manifest = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return manifest


def read_manifest(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


# --------------------------------------------------------- training export

def export_training_pairs(items, out_dir, mode: str, H: int) -> str:
    """Write the training dataset for the guess networks; returns the
    manifest path.

    items: iterable of dicts with keys "start" (the h = 0 input image),
    "gt" (ground truth, required in gt mode), and "snapshots" (the H
    incremental outputs, required in mb mode). Mode "both" materializes
    gt and snapshots so one directory serves either training regime.

    Pairing: at h = 0 the input is the start image; at h >= 1 the trainer
    chains inputs through its own previously trained networks, so only the
    targets are materialized here (gt mode: the ground truth at every h;
    mb mode: the h-th incremental output).
    """
    if mode not in ("gt", "mb", "both"):
        raise ValueError(f"mode must be 'gt', 'mb', or 'both', got {mode!r}")
    want_gt = mode in ("gt", "both")
    want_mb = mode in ("mb", "both")
    os.makedirs(os.path.join(out_dir, "start"), exist_ok=True)
    if want_gt:
        os.makedirs(os.path.join(out_dir, "gt"), exist_ok=True)
    if want_mb:
        os.makedirs(os.path.join(out_dir, "snap"), exist_ok=True)

    records = []
    side = None
    for i, item in enumerate(items):
        start = np.asarray(item["start"], dtype=np.float64)
        side = start.shape[0]
        rel_start = f"start/{i:04d}.png"
        save_png16(os.path.join(out_dir, rel_start), start)
        row = {"record": "item", "index": i, "start": rel_start,
               "gt": None, "snapshots": []}
        if want_gt:
            if item.get("gt") is None:
                raise ValueError(f"item {i}: gt mode needs a ground-truth image")
            rel_gt = f"gt/{i:04d}.png"
            save_png16(os.path.join(out_dir, rel_gt), item["gt"])
            row["gt"] = rel_gt
        if want_mb:
            snaps = item.get("snapshots") or []
            if len(snaps) < H:
                raise ValueError(
                    f"item {i}: mb mode needs {H} snapshots, got {len(snaps)}"
                )
            for h in range(H):
                rel = f"snap/{i:04d}_h{h + 1}.png"
                save_png16(os.path.join(out_dir, rel), snaps[h])
                row["snapshots"].append(rel)
        records.append(row)

    header = {
        "record": "header", "kind": "training-pairs", "mode": mode, "H": H,
        "side": side, "count": len(records), "range": [0.0, 1.0],
        "pairing": {
            "h0_input": "start",
            "h_ge_1_input": "chain through previously trained networks",
            "target": {"gt": "gt", "mb": "snapshot h+1",
                       "both": "gt or snapshot h+1"}[mode],
        },
    }
    manifest = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for row in records:
            fh.write(json.dumps(row) + "\n")
    return manifest


def load_training_manifest(dataset_dir):
    """Read a training dataset manifest into (header, item rows)."""
    rows = read_manifest(os.path.join(dataset_dir, "manifest.jsonl"))
    if not rows or rows[0].get("record") != "header":
        raise ValueError(f"{dataset_dir}: manifest has no header row")
    return rows[0], [r for r in rows[1:] if r.get("record") == "item"]
