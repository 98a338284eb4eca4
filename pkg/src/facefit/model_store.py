"""Morphable-model asset container and its portable binary format.

The on-disk format ("MFM1") is deliberately dumb: a magic tag, eight
little-endian uint32 header words (V, T, K_id, K_exp, K_tex, L, 0, 0),
then float32 arrays in the field order of :class:`FaceModel`.  Basis
matrices are stored column by column, each column one basis vector of
length 3V.  Index arrays (triangles, landmarks) are stored as float32
too; every index fits a float32 mantissa exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import BadMagicError, InvariantViolationError, TruncatedFileError

MAGIC = b"MFM1"
_HEADER = struct.Struct("<8I")


@dataclass(frozen=True)
class FaceModel:
    """Linear morphable face model: mean + bases for shape and albedo.

    All float arrays are float32; shape/texture arrays are flat with
    interleaved (x, y, z) / (r, g, b) per vertex.  Immutable after
    construction, safe to share between threads.
    """

    mean_shape: np.ndarray      # (3V,)
    id_basis: np.ndarray        # (3V, K_id)
    exp_basis: np.ndarray       # (3V, K_exp)
    mean_texture: np.ndarray    # (3V,) albedo in [0, 1]
    tex_basis: np.ndarray       # (3V, K_tex)
    triangles: np.ndarray       # (T, 3) int32, 0-based
    landmark_indices: np.ndarray  # (L,) int32, 0-based, distinct
    skin_weights: np.ndarray    # (V,) in [0, 1]

    @property
    def vertex_count(self) -> int:
        return self.mean_shape.size // 3

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]

    @property
    def k_id(self) -> int:
        return self.id_basis.shape[1]

    @property
    def k_exp(self) -> int:
        return self.exp_basis.shape[1]

    @property
    def k_tex(self) -> int:
        return self.tex_basis.shape[1]

    @property
    def landmark_count(self) -> int:
        return self.landmark_indices.size

    @property
    def param_count(self) -> int:
        """Total trainable coefficient count: bases + 27 SH + 3 angles + 3 T."""
        return self.k_id + self.k_exp + self.k_tex + 27 + 3 + 3


def validate_model(model: FaceModel) -> None:
    """Raise InvariantViolationError if any FaceModel invariant is broken."""
    v = model.vertex_count
    if v < 1 or model.mean_shape.size != 3 * v:
        raise InvariantViolationError("mean_shape length is not a multiple of 3")
    for name in ("id_basis", "exp_basis", "tex_basis"):
        b = getattr(model, name)
        if b.ndim != 2 or b.shape[0] != 3 * v or b.shape[1] < 1:
            raise InvariantViolationError(f"{name} shape {b.shape} inconsistent with V={v}")
    if model.mean_texture.size != 3 * v:
        raise InvariantViolationError("mean_texture length != 3V")
    if model.triangles.ndim != 2 or model.triangles.shape[1] != 3:
        raise InvariantViolationError("triangles must be (T, 3)")
    if model.triangles.size and (model.triangles.min() < 0 or model.triangles.max() >= v):
        raise InvariantViolationError("triangle index out of range")
    lm = model.landmark_indices
    if lm.size and (lm.min() < 0 or lm.max() >= v):
        raise InvariantViolationError("landmark index out of range")
    if len(np.unique(lm)) != lm.size:
        raise InvariantViolationError("landmark indices are not distinct")
    if model.skin_weights.size != v:
        raise InvariantViolationError("skin_weights length != V")
    tex = model.mean_texture
    if tex.size and (tex.min() < 0.0 or tex.max() > 1.0):
        raise InvariantViolationError("mean_texture values outside [0, 1]")
    sw = model.skin_weights
    if sw.size and (sw.min() < 0.0 or sw.max() > 1.0):
        raise InvariantViolationError("skin_weights values outside [0, 1]")
    for name in ("mean_shape", "id_basis", "exp_basis", "mean_texture", "tex_basis", "skin_weights"):
        if not np.isfinite(getattr(model, name)).all():
            raise InvariantViolationError(f"{name} contains non-finite values")


def _field_arrays(model: FaceModel):
    """Payload arrays in the normative on-disk order."""
    return [
        np.asarray(model.mean_shape, dtype="<f4").ravel(),
        np.asarray(model.id_basis, dtype="<f4").ravel(order="F"),
        np.asarray(model.exp_basis, dtype="<f4").ravel(order="F"),
        np.asarray(model.mean_texture, dtype="<f4").ravel(),
        np.asarray(model.tex_basis, dtype="<f4").ravel(order="F"),
        np.asarray(model.triangles, dtype="<f4").ravel(),
        np.asarray(model.landmark_indices, dtype="<f4").ravel(),
        np.asarray(model.skin_weights, dtype="<f4").ravel(),
    ]


def save_model(model: FaceModel, path) -> None:
    """Write `model` to `path` in the MFM1 binary format."""
    validate_model(model)
    v, t, l = model.vertex_count, model.triangle_count, model.landmark_count
    header = _HEADER.pack(v, t, model.k_id, model.k_exp, model.k_tex, l, 0, 0)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        for arr in _field_arrays(model):
            fh.write(arr.tobytes())


def _payload_layout(v, t, k_id, k_exp, k_tex, l):
    """(name, element count) pairs in on-disk order."""
    return [
        ("mean_shape", 3 * v),
        ("id_basis", 3 * v * k_id),
        ("exp_basis", 3 * v * k_exp),
        ("mean_texture", 3 * v),
        ("tex_basis", 3 * v * k_tex),
        ("triangles", 3 * t),
        ("landmark_indices", l),
        ("skin_weights", v),
    ]


def load_model(path) -> FaceModel:
    """Read an MFM1 file; raises a distinct error per failure mode."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an MFM1 file")
    if len(data) < 4 + _HEADER.size:
        raise TruncatedFileError(f"{path}: truncated header")
    v, t, k_id, k_exp, k_tex, l, _, _ = _HEADER.unpack_from(data, 4)
    if min(v, t, k_id, k_exp, k_tex) < 1:
        raise InvariantViolationError(f"{path}: non-positive count in header")
    layout = _payload_layout(v, t, k_id, k_exp, k_tex, l)
    expected = 4 + _HEADER.size + 4 * sum(n for _, n in layout)
    if len(data) != expected:
        raise TruncatedFileError(
            f"{path}: payload is {len(data)} bytes, header implies {expected}")
    fields = {}
    offset = 4 + _HEADER.size
    for name, count in layout:
        fields[name] = np.frombuffer(data, dtype="<f4", count=count, offset=offset).copy()
        offset += 4 * count

    def _as_indices(arr, what):
        idx = arr.astype(np.int32)
        if not np.array_equal(idx.astype("<f4"), arr):
            raise InvariantViolationError(f"{path}: non-integral {what}")
        return idx

    model = FaceModel(
        mean_shape=fields["mean_shape"],
        id_basis=fields["id_basis"].reshape(k_id, 3 * v).T.copy(),
        exp_basis=fields["exp_basis"].reshape(k_exp, 3 * v).T.copy(),
        mean_texture=fields["mean_texture"],
        tex_basis=fields["tex_basis"].reshape(k_tex, 3 * v).T.copy(),
        triangles=_as_indices(fields["triangles"], "triangle index").reshape(t, 3),
        landmark_indices=_as_indices(fields["landmark_indices"], "landmark index"),
        skin_weights=fields["skin_weights"],
    )
    validate_model(model)
    return model


def _smooth_field(rng, v_grid, columns, amplitude):
    """Gaussian-smoothed random basis columns, shape (3*v_grid^2, columns)."""
    out = np.empty((3 * v_grid * v_grid, columns), dtype=np.float32)
    radius = v_grid / 4.0
    for k in range(columns):
        field = rng.standard_normal((v_grid, v_grid, 3))
        for c in range(3):
            field[:, :, c] = gaussian_filter(field[:, :, c], sigma=radius, mode="nearest")
        peak = np.abs(field).max()
        if peak > 0:
            field *= amplitude / peak
        out[:, k] = field.reshape(-1).astype(np.float32)
    return out


def make_toy_model(seed: int, v_grid: int = 16, k_id: int = 8, k_exp: int = 6,
                   k_tex: int = 8, n_landmarks: int = 5) -> FaceModel:
    """Deterministic dome-shaped toy model for desk-scale testing.

    The mean shape is a v_grid x v_grid height-field dome of unit diameter
    bulging toward -z (the camera side), triangulated into 2(v_grid-1)^2
    triangles.  Bases are smooth low-amplitude random fields, sized so
    coefficients in [-3, 3] never collapse a triangle.
    """
    if v_grid < 3:
        raise ValueError("v_grid must be >= 3")
    if min(k_id, k_exp, k_tex) < 1:
        raise ValueError("basis counts must be >= 1")
    if not 1 <= n_landmarks <= v_grid * v_grid:
        raise ValueError("n_landmarks out of range")
    rng = np.random.default_rng(seed)
    v = v_grid * v_grid

    lin = np.linspace(-0.5, 0.5, v_grid)
    gx, gy = np.meshgrid(lin, lin, indexing="xy")
    r2 = gx**2 + gy**2
    gz = -0.5 * np.maximum(0.25 - r2, 0.0)
    mean_shape = np.stack([gx, gy, gz], axis=-1).reshape(-1).astype(np.float32)

    tris = []
    for j in range(v_grid - 1):
        for i in range(v_grid - 1):
            a = j * v_grid + i
            b = a + 1
            c = a + v_grid
            d = c + 1
            tris.append((a, b, d))
            tris.append((a, d, c))
    triangles = np.asarray(tris, dtype=np.int32)

    # Worst-case vertex offset with coefficients in [-3,3] is
    # 3*(K_id+K_exp)*amp; keeping it under a quarter of the grid spacing
    # guarantees every triangle stays strictly non-degenerate.
    spacing = 1.0 / (v_grid - 1)
    shape_amp = min(0.05, spacing / (12.0 * (k_id + k_exp)))
    id_basis = _smooth_field(rng, v_grid, k_id, shape_amp)
    exp_basis = _smooth_field(rng, v_grid, k_exp, shape_amp)

    smooth_tex = _smooth_field(rng, v_grid, 1, 0.2)[:, 0]
    mean_texture = np.clip(0.5 + smooth_tex, 0.25, 0.75).astype(np.float32)
    # [-3,3] texture coefficients keep albedo inside (0.1, 0.9): no clamping.
    tex_basis = _smooth_field(rng, v_grid, k_tex, min(0.05, 0.15 / (3.0 * k_tex)))

    # Landmarks: vertices nearest to evenly spaced points on the silhouette.
    angles = 2.0 * np.pi * np.arange(n_landmarks) / n_landmarks
    ring = np.stack([0.45 * np.cos(angles), 0.45 * np.sin(angles)], axis=-1)
    xy = mean_shape.reshape(-1, 3)[:, :2]
    chosen: list[int] = []
    for p in ring:
        order = np.argsort(((xy - p) ** 2).sum(axis=1))
        pick = next(int(i) for i in order if int(i) not in chosen)
        chosen.append(pick)
    landmark_indices = np.asarray(chosen, dtype=np.int32)

    model = FaceModel(
        mean_shape=mean_shape,
        id_basis=id_basis,
        exp_basis=exp_basis,
        mean_texture=mean_texture,
        tex_basis=tex_basis,
        triangles=triangles,
        landmark_indices=landmark_indices,
        skin_weights=np.ones(v, dtype=np.float32),
    )
    validate_model(model)
    return model
