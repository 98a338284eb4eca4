"""Five-point face alignment: closed-form similarity solve plus bilinear crop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import DegenerateInputError

# roughly centered frontal layout for a 224x224 crop; configurable via file
DEFAULT_TEMPLATE = np.array([
    (74.0, 112.0),   # left eye
    (150.0, 112.0),  # right eye
    (112.0, 140.0),  # nose
    (88.0, 170.0),   # mouth left
    (136.0, 170.0),  # mouth right
])


@dataclass
class AlignmentSpec:
    reference_points: np.ndarray = field(default_factory=lambda: DEFAULT_TEMPLATE.copy())
    crop_width: int = 224
    crop_height: int = 224

    def __post_init__(self):
        self.reference_points = np.asarray(self.reference_points, dtype=np.float64).reshape(-1, 2)
        if self.reference_points.shape[0] != 5:
            raise ValueError("alignment template needs exactly five points")
        rp = self.reference_points
        if (rp[:, 0].min() < 0 or rp[:, 0].max() > self.crop_width or
                rp[:, 1].min() < 0 or rp[:, 1].max() > self.crop_height):
            raise ValueError("template points must lie inside the crop")


@dataclass(frozen=True)
class SimilarityTransform:
    """x' = scale * R(theta) x + t, in image (u, v) coordinates."""

    scale: float
    theta: float
    tx: float
    ty: float

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.array([[self.scale * c, -self.scale * s, self.tx],
                         [self.scale * s, self.scale * c, self.ty]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        m = self.matrix()
        return pts @ m[:, :2].T + m[:, 2]

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c, s = np.cos(-self.theta), np.sin(-self.theta)
        tx = -inv_scale * (c * self.tx - s * self.ty)
        ty = -inv_scale * (s * self.tx + c * self.ty)
        return SimilarityTransform(inv_scale, -self.theta, tx, ty)


def solve_similarity(src_points, dst_points) -> SimilarityTransform:
    """Least-squares scale/rotation/translation mapping src onto dst.

    Closed form via the complex-number formulation: dst ~ a*src + b with
    a = scale*exp(i theta).  Reflections are excluded by construction.
    """
    src = np.asarray(src_points, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst_points, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape or src.shape[0] < 2:
        raise ValueError("need matching point sets of at least two points")
    if not (np.isfinite(src).all() and np.isfinite(dst).all()):
        raise ValueError("points must be finite")

    centered = src - src.mean(axis=0)
    spread = np.linalg.svd(centered, compute_uv=False)
    if spread[0] < 1e-12 or spread[-1] / spread[0] < 1e-9:
        raise DegenerateInputError("alignment points are (near-)collinear")

    zs = src[:, 0] + 1j * src[:, 1]
    zd = dst[:, 0] + 1j * dst[:, 1]
    zs_c = zs - zs.mean()
    a = np.vdot(zs_c, zd - zd.mean()) / np.vdot(zs_c, zs_c)
    b = zd.mean() - a * zs.mean()
    return SimilarityTransform(scale=abs(a), theta=float(np.angle(a)),
                               tx=b.real, ty=b.imag)


def align_crop(image, five_points, spec: AlignmentSpec | None = None):
    """Crop + resample `image` so the five detected points land on the template.

    Returns (cropped image, transform); the transform maps source-image
    coordinates into the crop frame, so its inverse takes fitted landmarks
    back to the original photo.
    """
    spec = spec or AlignmentSpec()
    pts = np.asarray(five_points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] != 5:
        raise ValueError("five alignment points required")
    transform = solve_similarity(pts, spec.reference_points)

    inv = transform.inverse().matrix()
    us, vs = np.meshgrid(np.arange(spec.crop_width) + 0.5,
                         np.arange(spec.crop_height) + 0.5)
    src_u = inv[0, 0] * us + inv[0, 1] * vs + inv[0, 2]
    src_v = inv[1, 0] * us + inv[1, 1] * vs + inv[1, 2]
    img = np.asarray(image, dtype=np.float64)
    # map_coordinates indexes (row, col) = (v - 0.5, u - 0.5)
    coords = np.stack([src_v - 0.5, src_u - 0.5])
    out = np.stack([
        map_coordinates(img[:, :, ch], coords, order=1, mode="nearest")
        for ch in range(img.shape[2])
    ], axis=-1)
    return out, transform
