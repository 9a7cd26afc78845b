"""Forward models and the linear-operator contract.

Concrete operators: identity, Gaussian blur (reflective boundary), a sparse
fan-beam projector with an exact-transpose adjoint, and the stacked operator
M = [K; D] used by the primal-dual solver. Also provides power-method norm
estimation and a ramp-filtered backprojection initializer.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse

from .image import GradientField, gradient, gradient_adjoint

KERNEL_HALF = 5  # fixed 11x11 blur kernel support


class LinearOperator:
    """Abstract linear map with an exact adjoint.

    Subclasses set in_shape/out_shape and implement apply/apply_adjoint so
    that <apply(x), r> == <x, apply_adjoint(r)> for all x, r.
    """

    in_shape: tuple
    out_shape: tuple

    @property
    def n(self) -> int:
        return int(np.prod(self.in_shape))

    @property
    def m(self) -> int:
        return int(np.prod(self.out_shape))

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_adjoint(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, arr, shape, what):
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != shape:
            raise ValueError(f"{what} shape {arr.shape} does not match {shape}")
        return arr


class IdentityOperator(LinearOperator):
    def __init__(self, shape):
        self.in_shape = tuple(shape)
        self.out_shape = tuple(shape)

    def apply(self, x):
        return self._check(x, self.in_shape, "input").copy()

    def apply_adjoint(self, r):
        return self._check(r, self.out_shape, "observation").copy()


def make_gaussian_kernel(sigma_g: float) -> np.ndarray:
    """11x11 kernel exp(-0.5*(i^2+j^2)/sigma_g^2), normalized to unit sum."""
    if sigma_g <= 0:
        raise ValueError(f"sigma_g must be positive, got {sigma_g}")
    offsets = np.arange(-KERNEL_HALF, KERNEL_HALF + 1, dtype=np.float64)
    sq = offsets[:, None] ** 2 + offsets[None, :] ** 2
    kernel = np.exp(-0.5 * sq / sigma_g**2)
    return kernel / kernel.sum()


class GaussianBlurOperator(LinearOperator):
    """Convolution with a normalized 11x11 Gaussian kernel, reflective boundary.

    The kernel is doubly symmetric and the reflective boundary preserves the
    symmetry, so the operator is exactly self-adjoint.
    """

    def __init__(self, side: int, sigma_g: float = 1.3):
        if side < 2 * KERNEL_HALF + 1:
            raise ValueError(f"image side must be at least {2 * KERNEL_HALF + 1}, got {side}")
        self.in_shape = (side, side)
        self.out_shape = (side, side)
        self.sigma_g = float(sigma_g)
        self.kernel = make_gaussian_kernel(sigma_g)

    def apply(self, x):
        x = self._check(x, self.in_shape, "input")
        return ndimage.convolve(x, self.kernel, mode="reflect")

    def apply_adjoint(self, r):
        r = self._check(r, self.out_shape, "observation")
        return ndimage.convolve(r, self.kernel, mode="reflect")


@dataclass(frozen=True)
class FanBeamGeometry:
    """Flat-detector fan-beam scan geometry; lengths are in pixel units.

    detector_spacing defaults to the value that makes the fan tangent to the
    circle circumscribing the image, so every view covers the full diagonal.
    """

    image_side: int = 256
    num_views: int = 60
    detector_count: int = 500
    angular_range: float = 180.0
    source_to_origin: float = 512.0
    origin_to_detector: float = 512.0
    detector_spacing: float = field(default=0.0)

    def __post_init__(self):
        if self.num_views < 1 or self.detector_count < 1:
            raise ValueError("num_views and detector_count must be at least 1")
        radius = self.image_side * np.sqrt(2.0) / 2.0
        if self.source_to_origin <= radius:
            raise ValueError(
                f"source_to_origin {self.source_to_origin} must exceed the image "
                f"circumradius {radius:.2f}"
            )
        if self.detector_spacing <= 0.0:
            span = self.source_to_origin + self.origin_to_detector
            width = 2.0 * span * np.tan(np.arcsin(radius / self.source_to_origin))
            object.__setattr__(self, "detector_spacing", width / self.detector_count)


def _fan_system_matrix(geo: FanBeamGeometry) -> sparse.csr_matrix:
    """Ray-driven line-integral matrix: one row per (view, detector cell).

    Rays step along the dominant axis; at each grid line crossing the two
    nearest pixels get bilinear weights scaled by the path length per step.
    """
    s = geo.image_side
    half = (s - 1) / 2.0
    col_x = np.arange(s) - half
    row_y = half - np.arange(s)
    axis = np.arange(s)
    t_count = geo.detector_count
    det_off = (np.arange(t_count) - (t_count - 1) / 2.0) * geo.detector_spacing
    betas = np.deg2rad(geo.angular_range) * np.arange(geo.num_views) / geo.num_views

    rows, cols, vals = [], [], []

    def emit(ray_rows, pix_cols, weights, keep):
        rows.append(ray_rows[keep].astype(np.int32))
        cols.append(pix_cols[keep].astype(np.int32))
        vals.append(weights[keep])

    for v, beta in enumerate(betas):
        cb, sb = np.cos(beta), np.sin(beta)
        sx, sy = geo.source_to_origin * cb, geo.source_to_origin * sb
        px = -geo.origin_to_detector * cb - det_off * sb
        py = -geo.origin_to_detector * sb + det_off * cb
        dx, dy = px - sx, py - sy
        ray_ids = v * t_count + np.arange(t_count)
        x_driven = np.abs(dx) >= np.abs(dy)

        for along_x in (True, False):
            sel = np.nonzero(x_driven if along_x else ~x_driven)[0]
            if sel.size == 0:
                continue
            if along_x:
                cross = sy + (col_x[None, :] - sx) * (dy[sel] / dx[sel])[:, None]
                cont = half - cross  # continuous row coordinate
                step_len = np.hypot(dx[sel], dy[sel]) / np.abs(dx[sel])
            else:
                cross = sx + (row_y[None, :] - sy) * (dx[sel] / dy[sel])[:, None]
                cont = cross + half  # continuous column coordinate
                step_len = np.hypot(dx[sel], dy[sel]) / np.abs(dy[sel])
            lo = np.floor(cont).astype(np.int64)
            frac = cont - lo
            weight = np.broadcast_to(step_len[:, None], cont.shape)
            fixed = np.broadcast_to(axis[None, :], cont.shape)
            ray_rows = np.broadcast_to(ray_ids[sel][:, None], cont.shape)
            for neighbor, wfrac in ((lo, (1.0 - frac) * weight), (lo + 1, frac * weight)):
                keep = (neighbor >= 0) & (neighbor < s)
                pix = neighbor * s + fixed if along_x else fixed * s + neighbor
                emit(ray_rows, pix, wfrac, keep)

    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(geo.num_views * t_count, s * s),
    )
    return matrix.tocsr()


class FanBeamOperator(LinearOperator):
    """Sparse-matrix fan-beam projector; the adjoint is the exact transpose."""

    def __init__(self, geo: FanBeamGeometry):
        self.geo = geo
        self.in_shape = (geo.image_side, geo.image_side)
        self.out_shape = (geo.num_views, geo.detector_count)
        self.matrix = _fan_system_matrix(geo)
        self._matrix_t = self.matrix.T.tocsr()

    def apply(self, x):
        x = self._check(x, self.in_shape, "input")
        return (self.matrix @ x.ravel()).reshape(self.out_shape)

    def apply_adjoint(self, r):
        r = self._check(r, self.out_shape, "sinogram")
        return (self._matrix_t @ r.ravel()).reshape(self.in_shape)


class StackedOperator(LinearOperator):
    """Row-wise stack M = [K; D] mapping an image to (Kx, D_h x, D_v x)."""

    def __init__(self, K: LinearOperator):
        self.K = K
        self.in_shape = K.in_shape
        self.out_shape = (K.m + 2 * K.n,)

    def apply(self, x):
        x = self._check(x, self.in_shape, "input")
        g = gradient(x)
        return np.concatenate([self.K.apply(x).ravel(), g.h.ravel(), g.v.ravel()])

    def apply_adjoint(self, r):
        r = self._check(r, self.out_shape, "stacked observation")
        m, n = self.K.m, self.K.n
        obs = r[:m].reshape(self.K.out_shape)
        zh = r[m : m + n].reshape(self.in_shape)
        zv = r[m + n :].reshape(self.in_shape)
        return self.K.apply_adjoint(obs) + gradient_adjoint(GradientField(zh, zv))


def estimate_operator_norm(M: LinearOperator, iters: int = 50, seed: int = 0) -> float:
    """Power-method estimate of the largest singular value of M."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(M.in_shape)
    scale = np.linalg.norm(b)
    if scale == 0.0:
        return 0.0
    b /= scale
    s = 0.0
    for _ in range(iters):
        b = M.apply_adjoint(M.apply(b))
        s = np.linalg.norm(b)
        if s == 0.0:
            return 0.0
        b /= s
    return float(np.sqrt(s))


def fbp_reconstruct(y, geo: FanBeamGeometry = None, operator: FanBeamOperator = None):
    """Ramp-filtered backprojection via the projector adjoint, clamped to >= 0.

    Detector rows are cosine-weighted, filtered with a frequency-domain ramp
    (zero-padded), and backprojected; a least-squares scalar then fits the
    reconstruction scale to the data, absorbing discretization constants.
    """
    if operator is None:
        if geo is None:
            raise ValueError("either geo or operator is required")
        operator = FanBeamOperator(geo)
    geo = operator.geo
    y = np.asarray(y, dtype=np.float64).reshape(operator.out_shape)

    t_count = geo.detector_count
    det_off = (np.arange(t_count) - (t_count - 1) / 2.0) * geo.detector_spacing
    span = geo.source_to_origin + geo.origin_to_detector
    weighted = y * (span / np.hypot(span, det_off))[None, :]

    nfft = 1 << int(np.ceil(np.log2(max(2 * t_count, 2))))
    ramp = np.abs(np.fft.rfftfreq(nfft, d=geo.detector_spacing))
    spectrum = np.fft.rfft(weighted, n=nfft, axis=1) * ramp[None, :]
    filtered = np.fft.irfft(spectrum, n=nfft, axis=1)[:, :t_count]

    back = operator.apply_adjoint(filtered)
    reproj = operator.apply(back)
    denom = float(np.vdot(reproj, reproj))
    if denom == 0.0:
        return np.zeros(operator.in_shape)
    alpha = float(np.vdot(reproj, y)) / denom
    return np.maximum(alpha * back, 0.0)
