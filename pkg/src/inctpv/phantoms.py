"""Synthetic ellipse phantoms: piecewise-constant grayscale test images.

Each phantom is a large body ellipse plus overlapping uniform-intensity
inner ellipses (some at very low contrast) and a few thin line elements,
additively composed and clipped to [0, 1]. Generation is deterministic for
a fixed seed.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EllipsePhantomSpec:
    side: int = 256
    seed: int = 0
    min_ellipses: int = 6
    max_ellipses: int = 12
    min_lines: int = 1
    max_lines: int = 3
    body_intensity_range: tuple = (0.25, 0.4)
    inner_intensity_max: float = 0.2
    line_intensity_max: float = 0.15

    def __post_init__(self):
        if self.side < 8:
            raise ValueError(f"side must be at least 8, got {self.side}")
        if self.min_ellipses < 0 or self.max_ellipses < self.min_ellipses:
            raise ValueError("invalid ellipse count range")
        if self.min_lines < 0 or self.max_lines < self.min_lines:
            raise ValueError("invalid line count range")


def _ellipse_mask(side, cx, cy, ax, ay, angle):
    ii, jj = np.mgrid[0:side, 0:side].astype(np.float64)
    x = jj - cx
    y = ii - cy
    c, s = np.cos(angle), np.sin(angle)
    u = x * c + y * s
    v = -x * s + y * c
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0


def _line_mask(side, cx, cy, length, width, angle):
    ii, jj = np.mgrid[0:side, 0:side].astype(np.float64)
    x = jj - cx
    y = ii - cy
    c, s = np.cos(angle), np.sin(angle)
    u = x * c + y * s
    v = -x * s + y * c
    return (np.abs(u) <= length / 2.0) & (np.abs(v) <= width / 2.0)


def generate_phantom(spec: EllipsePhantomSpec) -> np.ndarray:
    """Rasterize one phantom; values lie in [0, 1]."""
    rng = np.random.default_rng(spec.seed)
    side = spec.side
    center = (side - 1) / 2.0
    img = np.zeros((side, side))

    # body ellipse
    body_ax = side * rng.uniform(0.36, 0.44)
    body_ay = side * rng.uniform(0.33, 0.41)
    body_cx = center + side * rng.uniform(-0.02, 0.02)
    body_cy = center + side * rng.uniform(-0.02, 0.02)
    body_angle = rng.uniform(-np.pi / 12, np.pi / 12)
    img += rng.uniform(*spec.body_intensity_range) * _ellipse_mask(
        side, body_cx, body_cy, body_ax, body_ay, body_angle
    )

    # overlapping uniform-intensity inner ellipses
    count = int(rng.integers(spec.min_ellipses, spec.max_ellipses + 1))
    for k in range(count):
        radius = side * rng.uniform(0.0, 0.26)
        theta = rng.uniform(0.0, 2 * np.pi)
        cx = body_cx + radius * np.cos(theta)
        cy = body_cy + radius * np.sin(theta)
        ax = side * rng.uniform(0.03, 0.16)
        ay = side * rng.uniform(0.03, 0.16)
        angle = rng.uniform(0.0, np.pi)
        delta = rng.uniform(-spec.inner_intensity_max, spec.inner_intensity_max)
        if abs(delta) < 0.02:
            delta = 0.02 * np.sign(delta) if delta != 0.0 else 0.02
        if k % 4 == 3:
            delta = np.sign(delta) * 0.02  # keep some very-low-contrast elements
        img += delta * _ellipse_mask(side, cx, cy, ax, ay, angle)

    # thin low-contrast lines
    count = int(rng.integers(spec.min_lines, spec.max_lines + 1))
    for _ in range(count):
        radius = side * rng.uniform(0.0, 0.2)
        theta = rng.uniform(0.0, 2 * np.pi)
        cx = body_cx + radius * np.cos(theta)
        cy = body_cy + radius * np.sin(theta)
        length = side * rng.uniform(0.15, 0.45)
        width = rng.uniform(1.0, 2.5)
        angle = rng.uniform(0.0, np.pi)
        delta = rng.choice([-1.0, 1.0]) * rng.uniform(0.05, spec.line_intensity_max)
        img += delta * _line_mask(side, cx, cy, length, width, angle)

    return np.clip(img, 0.0, 1.0)


def generate_batch(count: int, side: int = 256, seed: int = 0, **kwargs):
    """Generate `count` phantoms with per-item seeds seed+index."""
    return [
        generate_phantom(EllipsePhantomSpec(side=side, seed=seed + i, **kwargs))
        for i in range(count)
    ]
