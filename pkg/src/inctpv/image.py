"""Discrete image gradients and the TpV objective.

Images are 2-D float64 arrays (row-major). The derivative operator D uses
forward differences with a replicate (Neumann) boundary: the difference at
the last column/row is zero. The adjoint implemented here satisfies the
dot-product identity <Dx, z> == <x, D^T z> exactly up to floating round-off.
"""

from typing import NamedTuple

import numpy as np


class GradientField(NamedTuple):
    """Horizontal and vertical forward differences of an image."""

    h: np.ndarray
    v: np.ndarray


def gradient(x: np.ndarray) -> GradientField:
    """Forward-difference gradient with Neumann boundary.

    h[i, j] = x[i, j+1] - x[i, j] for j < width-1, else 0; v analogous in rows.
    """
    x = np.asarray(x, dtype=np.float64)
    h = np.zeros_like(x)
    v = np.zeros_like(x)
    h[:, :-1] = x[:, 1:] - x[:, :-1]
    v[:-1, :] = x[1:, :] - x[:-1, :]
    return GradientField(h, v)


def gradient_magnitude(g: GradientField) -> np.ndarray:
    """Pointwise Euclidean norm sqrt(h^2 + v^2) of a gradient field."""
    return np.hypot(g.h, g.v)


def gradient_adjoint(g: GradientField) -> np.ndarray:
    """Adjoint D^T of the forward-difference gradient (a negative divergence).

    out[i, j] = h[i, j-1]*[j>=1] - h[i, j]*[j<W-1] plus the same pattern
    over rows for the vertical component.
    """
    h = np.asarray(g.h, dtype=np.float64)
    v = np.asarray(g.v, dtype=np.float64)
    out = np.zeros_like(h)
    out[:, 1:] += h[:, :-1]
    out[:, :-1] -= h[:, :-1]
    out[1:, :] += v[:-1, :]
    out[:-1, :] -= v[:-1, :]
    return out


def tpv_objective(x, y, K, lam: float, p: float) -> float:
    """Evaluate 0.5*||Kx - y||^2 + lam * sum_i |Dx|_i^p.

    The convention 0^p = 0 keeps the prior finite on flat regions.
    Rejects p outside (0, 1] and lam <= 0.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    x = np.asarray(x, dtype=np.float64)
    residual = K.apply(x) - np.asarray(y, dtype=np.float64)
    mag = gradient_magnitude(gradient(x))
    return 0.5 * float(np.vdot(residual, residual)) + lam * float(np.sum(mag**p))
