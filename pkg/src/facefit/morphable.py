"""Linear morphable-model evaluation: shape, texture, pose, projection.

All geometric operations are written against torch tensors so the fitting
engine can differentiate straight through them; plain numpy arrays are
accepted and converted (call ``.numpy()`` on results if you live in numpy).
Everything runs in float64 on CPU.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import DimensionMismatchError, FittingDomainError
from .model_store import FaceModel

DTYPE = torch.float64


def _t(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(np.asarray(x), dtype=DTYPE)


@dataclass
class FaceParams:
    """Full coefficient vector of one reconstructed face.

    Flat-vector order is frozen: alpha_id, alpha_exp, alpha_tex,
    gamma (27), angles (3, radians), translation (3, model units).
    For the Basel configuration this is 80+64+80+27+3+3 = 257 entries.
    """

    alpha_id: np.ndarray
    alpha_exp: np.ndarray
    alpha_tex: np.ndarray
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(27))
    angles: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("alpha_id", "alpha_exp", "alpha_tex", "gamma", "angles", "translation"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.gamma.size != 27:
            raise DimensionMismatchError("gamma must have 27 entries")
        if self.angles.size != 3 or self.translation.size != 3:
            raise DimensionMismatchError("angles and translation must have 3 entries")
        if not all(np.isfinite(getattr(self, n)).all() for n in
                   ("alpha_id", "alpha_exp", "alpha_tex", "gamma", "angles", "translation")):
            raise ValueError("FaceParams entries must be finite")

    @classmethod
    def zeros(cls, model: FaceModel, z: float = 10.0) -> "FaceParams":
        """All-zero coefficients with the face placed z model units out."""
        return cls(
            alpha_id=np.zeros(model.k_id),
            alpha_exp=np.zeros(model.k_exp),
            alpha_tex=np.zeros(model.k_tex),
            translation=np.array([0.0, 0.0, z]),
        )

    @classmethod
    def initial(cls, model: FaceModel, z: float = 10.0) -> "FaceParams":
        """Fitting start point: zero coefficients, ambient-identity lighting.

        The constant SH term is set to 1/Y00 per channel so the initial
        render shows the mean albedo; an all-zero gamma renders black and
        kills the multiplicative texture-lighting gradients.
        """
        params = cls.zeros(model, z=z)
        params.gamma[[0, 9, 18]] = 1.0 / 0.282095
        return params

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha_id, self.alpha_exp, self.alpha_tex,
                               self.gamma, self.angles, self.translation])

    @classmethod
    def from_vector(cls, vec, k_id: int, k_exp: int, k_tex: int) -> "FaceParams":
        vec = np.asarray(vec, dtype=np.float64)
        expected = k_id + k_exp + k_tex + 33
        if vec.size != expected:
            raise DimensionMismatchError(f"expected {expected} entries, got {vec.size}")
        splits = np.cumsum([k_id, k_exp, k_tex, 27, 3])
        a_id, a_exp, a_tex, gamma, angles, trans = np.split(vec, splits)
        return cls(a_id, a_exp, a_tex, gamma, angles, trans)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera at the origin looking along +z, principal point centered."""

    width: int
    height: int
    focal: float = 0.0  # 0 -> default 1015 * width / 224

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.focal == 0.0:
            object.__setattr__(self, "focal", 1015.0 * self.width / 224.0)
        if self.focal <= 0:
            raise ValueError("focal length must be positive")


@dataclass
class SurfaceMesh:
    """Posed, shaded mesh ready for rasterization (camera space)."""

    positions: torch.Tensor  # (V, 3)
    normals: torch.Tensor    # (V, 3) unit
    colors: torch.Tensor     # (V, 3) in [0, 1]
    triangles: np.ndarray    # (T, 3) shared topology


def evaluate_shape(model: FaceModel, alpha_id, alpha_exp) -> torch.Tensor:
    """s = mean + id_basis @ a_id + exp_basis @ a_exp, as (V, 3)."""
    a_id, a_exp = _t(alpha_id), _t(alpha_exp)
    if a_id.numel() != model.k_id or a_exp.numel() != model.k_exp:
        raise DimensionMismatchError(
            f"coefficient lengths ({a_id.numel()}, {a_exp.numel()}) do not match "
            f"model bases ({model.k_id}, {model.k_exp})")
    flat = (_t(model.mean_shape)
            + _t(model.id_basis) @ a_id.reshape(-1)
            + _t(model.exp_basis) @ a_exp.reshape(-1))
    return flat.reshape(-1, 3)


def evaluate_texture(model: FaceModel, alpha_tex, clamp: bool = True) -> torch.Tensor:
    """t = mean + tex_basis @ a_tex as (V, 3); clamped to [0,1] unless clamp=False."""
    a_tex = _t(alpha_tex)
    if a_tex.numel() != model.k_tex:
        raise DimensionMismatchError(
            f"alpha_tex length {a_tex.numel()} != K_tex {model.k_tex}")
    flat = _t(model.mean_texture) + _t(model.tex_basis) @ a_tex.reshape(-1)
    tex = flat.reshape(-1, 3)
    return tex.clamp(0.0, 1.0) if clamp else tex


def rotation_matrix(angles) -> torch.Tensor:
    """R = R_z(z) @ R_y(y) @ R_x(x) for rotations about the fixed axes."""
    a = _t(angles).reshape(3)
    cx, cy, cz = torch.cos(a[0]), torch.cos(a[1]), torch.cos(a[2])
    sx, sy, sz = torch.sin(a[0]), torch.sin(a[1]), torch.sin(a[2])
    one = torch.ones((), dtype=DTYPE)
    zero = torch.zeros((), dtype=DTYPE)
    rx = torch.stack([one, zero, zero, zero, cx, -sx, zero, sx, cx]).reshape(3, 3)
    ry = torch.stack([cy, zero, sy, zero, one, zero, -sy, zero, cy]).reshape(3, 3)
    rz = torch.stack([cz, -sz, zero, sz, cz, zero, zero, zero, one]).reshape(3, 3)
    return rz @ ry @ rx


def apply_pose(positions, rotation, translation) -> torch.Tensor:
    """p' = R p + T per vertex."""
    return _t(positions) @ _t(rotation).T + _t(translation).reshape(1, 3)


def vertex_normals(positions, triangles) -> torch.Tensor:
    """Area-weighted average of incident face normals, normalized per vertex.

    Vertices with no incident triangles get (0, 0, 1).
    """
    pos = _t(positions)
    tris = torch.as_tensor(np.asarray(triangles, dtype=np.int64))
    v = pos.shape[0]
    if tris.numel() == 0:
        out = torch.zeros((v, 3), dtype=DTYPE)
        out[:, 2] = 1.0
        return out
    p0, p1, p2 = pos[tris[:, 0]], pos[tris[:, 1]], pos[tris[:, 2]]
    face = torch.cross(p1 - p0, p2 - p0, dim=1)  # length = 2 * area
    acc = torch.zeros((v, 3), dtype=DTYPE)
    for k in range(3):
        acc = acc.index_add(0, tris[:, k], face)
    norm = acc.norm(dim=1, keepdim=True)
    fallback = torch.tensor([0.0, 0.0, 1.0], dtype=DTYPE).expand(v, 3)
    safe = torch.where(norm > 1e-12, acc / norm.clamp_min(1e-300), fallback)
    return safe


def project(positions, camera: Camera) -> torch.Tensor:
    """Pinhole projection to (u, v, depth); v grows downward in the image."""
    pos = _t(positions)
    z = pos[:, 2]
    if z.numel() and float(z.detach().min()) <= 0.0:
        raise FittingDomainError("vertex at non-positive depth; face behind camera")
    u = camera.focal * pos[:, 0] / z + camera.width / 2.0
    v = camera.height / 2.0 - camera.focal * pos[:, 1] / z
    return torch.stack([u, v, z], dim=1)


def landmark_positions(model: FaceModel, projected) -> torch.Tensor:
    """Gather projected (u, v) at the model's landmark vertices, in order."""
    proj = _t(projected)
    idx = torch.as_tensor(np.asarray(model.landmark_indices, dtype=np.int64))
    return proj[idx, :2]


def pose_mesh(model: FaceModel, params: FaceParams | None = None, *,
              alpha_id=None, alpha_exp=None, angles=None, translation=None) -> torch.Tensor:
    """Shape evaluation followed by rotation and translation (camera space)."""
    if params is not None:
        alpha_id, alpha_exp = params.alpha_id, params.alpha_exp
        angles, translation = params.angles, params.translation
    shaped = evaluate_shape(model, alpha_id, alpha_exp)
    return apply_pose(shaped, rotation_matrix(angles), translation)
