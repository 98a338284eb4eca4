"""Spherical-harmonics shading of per-vertex albedo (band 2, 9 functions).

Gamma holds 27 values, channel-major: 9 SH coefficients for red, then
green, then blue.  Basis order is fixed as
[Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22].
"""

from __future__ import annotations

import torch

from .errors import DimensionMismatchError
from .morphable import DTYPE, _t

# Real-SH normalization constants (graphics convention).
C0 = 0.282095
C1 = 0.488603
C2 = 1.092548
C20 = 0.315392
C22 = 0.546274


def sh_basis(normals) -> torch.Tensor:
    """Evaluate the 9 band-0..2 real SH basis functions at unit normals.

    Accepts a single 3-vector or an (N, 3) batch; returns (9,) or (N, 9).
    """
    n = _t(normals)
    single = n.ndim == 1
    n = n.reshape(-1, 3)
    lengths = n.norm(dim=1)
    if bool((abs(lengths - 1.0) > 1e-6).any()):
        raise ValueError("sh_basis requires unit-length normals")
    x, y, z = n[:, 0], n[:, 1], n[:, 2]
    basis = torch.stack([
        torch.full_like(x, C0),
        C1 * y,
        C1 * z,
        C1 * x,
        C2 * x * y,
        C2 * y * z,
        C20 * (3.0 * z * z - 1.0),
        C2 * x * z,
        C22 * (x * x - y * y),
    ], dim=1)
    return basis[0] if single else basis


def shade(albedo, normals, gamma, clamp: bool = True) -> torch.Tensor:
    """Per-vertex color: albedo * (SH basis . gamma) per channel.

    Output is clamped to [0, 1] for rendering (straight-through gradient
    inside the clamp); pass clamp=False for the raw radiance.
    """
    alb = _t(albedo).reshape(-1, 3)
    g = _t(gamma).reshape(-1)
    if g.numel() != 27:
        raise DimensionMismatchError("gamma must have 27 entries (9 per channel)")
    basis = sh_basis(normals)  # (V, 9)
    if basis.shape[0] != alb.shape[0]:
        raise DimensionMismatchError("albedo and normals disagree on vertex count")
    irradiance = basis @ g.reshape(3, 9).T  # (V, 3), per-channel SH dot
    out = alb * irradiance
    return out.clamp(0.0, 1.0) if clamp else out
