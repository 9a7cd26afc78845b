"""Chambolle-Pock solver for the weighted convex subproblem.

Minimizes data_scale*||Kx - y||^2 + lam*sum_i w_i*|Dx|_i over x >= 0 by
running a fixed number of primal-dual iterations on M = [K; D] with
sigma = tau = 1/||M|| and extrapolation theta = 1.

The default data_scale = 1.0 matches the weighted subproblem as the
reweighting loop states it; pass data_scale = 0.5 for the variant whose data
term carries a 1/2 factor (the two differ only by a rescaling of lam).
"""

import numpy as np

from .image import GradientField, gradient, gradient_adjoint
from .operators import LinearOperator, StackedOperator, estimate_operator_norm


class DivergenceError(RuntimeError):
    """Raised when iterates go non-finite (usually a step-size violation)."""


def subproblem_objective(x, K, y, w, lam: float) -> float:
    """Evaluate ||Kx - y||^2 + lam * sum_i w_i * |Dx|_i."""
    x = np.asarray(x, dtype=np.float64)
    residual = K.apply(x) - np.asarray(y, dtype=np.float64)
    g = gradient(x)
    mag = np.hypot(g.h, g.v)
    return float(np.vdot(residual, residual)) + lam * float(np.sum(w * mag))


def cp_solve(
    K: LinearOperator,
    y,
    w,
    lam: float,
    x0,
    iters: int,
    *,
    op_norm: float = None,
    data_scale: float = 1.0,
    callback=None,
) -> np.ndarray:
    """Run exactly `iters` Chambolle-Pock iterations and return the primal.

    Parameters
    ----------
    K : forward operator
    y : observation, shaped like K's output
    w : positive per-pixel weights for the gradient-magnitude term
    lam : regularization parameter, > 0
    x0 : starting image, clamped to >= 0 on entry
    iters : iteration count, >= 1
    op_norm : precomputed ||[K; D]||; estimated by power method when omitted
    data_scale : multiplier on the squared-residual data term
    callback : optional per-iteration hook receiving a state dict
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    if data_scale <= 0.0:
        raise ValueError(f"data_scale must be positive, got {data_scale}")
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if op_norm is None:
        op_norm = estimate_operator_norm(StackedOperator(K), iters=100)
    if op_norm <= 0.0:
        raise ValueError("operator norm must be positive")

    sigma = tau = 1.0 / op_norm
    denom = 1.0 + sigma / (2.0 * data_scale)
    radius = lam * w

    x = np.maximum(np.asarray(x0, dtype=np.float64), 0.0)
    x_bar = x.copy()
    q = np.zeros(K.out_shape)
    zh = np.zeros_like(x)
    zv = np.zeros_like(x)

    for it in range(iters):
        q = (q + sigma * (K.apply(x_bar) - y)) / denom

        g = gradient(x_bar)
        zh = zh + sigma * g.h
        zv = zv + sigma * g.v
        mag = np.hypot(zh, zv)
        shrink = np.ones_like(mag)
        over = mag > radius
        shrink[over] = radius[over] / mag[over]
        zh *= shrink
        zv *= shrink

        x_prev = x
        descent = K.apply_adjoint(q) + gradient_adjoint(GradientField(zh, zv))
        x = np.maximum(x - tau * descent, 0.0)
        x_bar = 2.0 * x - x_prev

        if not np.all(np.isfinite(x_bar)):
            raise DivergenceError(
                f"non-finite primal iterate at iteration {it + 1} "
                f"(sigma=tau={sigma:.3e}, op_norm={op_norm:.3e})"
            )
        if callback is not None:
            callback({"iter": it, "x": x, "q": q, "zh": zh, "zv": zv, "radius": radius})

    return x
