"""Quality metrics: relative error, structural similarity, batch statistics."""

from dataclasses import dataclass

import numpy as np
from skimage.metrics import structural_similarity


def relative_error(x, gt) -> float:
    """l2 relative error ||x - gt|| / ||gt||; rejects a zero ground truth."""
    x = np.asarray(x, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if x.shape != gt.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {gt.shape}")
    denom = np.linalg.norm(gt)
    if denom == 0.0:
        raise ValueError("ground truth has zero norm")
    return float(np.linalg.norm(x - gt) / denom)


def ssim(x, gt, data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), C1 = (k1*L)^2,
    C2 = (k2*L)^2 with L = data_range."""
    x = np.asarray(x, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if x.shape != gt.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {gt.shape}")
    return float(
        structural_similarity(
            x, gt, win_size=11, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=data_range, K1=k1, K2=k2,
        )
    )


@dataclass(frozen=True)
class BatchStats:
    mean: float
    std: float
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def batch_stats(values) -> BatchStats:
    """Mean, population std, and linear-interpolation quartiles."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("batch_stats needs a nonempty list")
    q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    return BatchStats(
        mean=float(values.mean()),
        std=float(values.std()),
        minimum=float(values.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        maximum=float(values.max()),
    )
