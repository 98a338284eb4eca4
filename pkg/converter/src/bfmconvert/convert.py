"""Conversion pipeline: MAT-format Basel assets -> one MFM1 file.

Inputs are four locally licensed files:

* ``base``    -- MAT file with the mean shape, identity basis, mean
  texture and texture basis over the full source mesh.
* ``exp``     -- MAT file with the expression basis over the full mesh.
* ``info``    -- MAT file with the cropped-mesh triangulation, landmark
  vertex list and per-vertex region masks (MATLAB 1-based indices).
* ``indices`` -- text file, one 0-based source-vertex index per line,
  listing which source vertices the cropped mesh keeps, in order.

Gathering is pure indexing: kept-vertex coordinates are copied from the
source arrays without resampling, so they match the source exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.io import loadmat

from .mfm import OutputValidationError, write_mfm

# Accepted spellings per logical field; different releases of the asset
# family name them differently.  The first one present wins and the
# chosen name is recorded in the conversion report.
FIELD_SYNONYMS = {
    "mean_shape": ("shapeMU", "meanshape", "mu_shape"),
    "id_basis": ("shapePC", "idBase", "w_shape"),
    "mean_texture": ("texMU", "meantex", "mu_tex"),
    "tex_basis": ("texPC", "texBase", "w_tex"),
    "exp_basis": ("expPC", "exBase", "w_exp"),
    "triangles": ("tri", "tl", "faces"),
    "landmarks": ("keypoints", "landmarks", "kpt_ind"),
    "skin_mask": ("skinmask", "skin_mask", "frontmask", "face_mask"),
}


class ConversionError(Exception):
    """Any failure that makes the conversion impossible."""


class MissingFieldError(ConversionError):
    """A required logical field was found under none of its spellings."""


class IndexRangeError(ConversionError):
    """An index in the crop list, triangulation or landmark set is out of range."""


@dataclass
class ConversionManifest:
    """Everything one conversion needs: inputs, output, and options."""

    base_path: str
    exp_path: str
    info_path: str
    indices_path: str
    out_path: str
    k_id: int = 80
    k_exp: int = 64
    k_tex: int = 80
    source_vertices: int = 53215
    expected_vertices: int = 35709
    scale: float = 1.0
    recenter: bool = False

    def __post_init__(self):
        if min(self.k_id, self.k_exp, self.k_tex) < 1:
            raise ValueError("basis sizes must be positive")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 1 <= self.expected_vertices <= self.source_vertices:
            raise ValueError("expected vertex count must be in [1, source]")


@dataclass
class ConversionReport:
    """Counts, field mapping and payload checksum of one conversion."""

    out_path: str
    vertices: int
    triangles: int
    k_id: int
    k_exp: int
    k_tex: int
    landmarks: int
    field_mapping: dict = field(default_factory=dict)
    texture_values_clipped: int = 0
    payload_sha256: str = ""

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def _pick_field(mat: dict, logical: str, path: str) -> tuple[str, np.ndarray]:
    for name in FIELD_SYNONYMS[logical]:
        if name in mat:
            return name, np.asarray(mat[name], dtype=np.float64)
    raise MissingFieldError(
        f"{path}: no field for '{logical}' (tried {', '.join(FIELD_SYNONYMS[logical])})")


def _load_mat(path: str) -> dict:
    if not os.path.exists(path):
        raise ConversionError(f"input file missing: {path}")
    try:
        return loadmat(path)
    except Exception as err:
        raise ConversionError(f"{path}: not a readable MAT file ({err})") from err


def _read_indices(path: str, manifest: ConversionManifest) -> np.ndarray:
    if not os.path.exists(path):
        raise ConversionError(f"input file missing: {path}")
    raw = np.loadtxt(path, dtype=np.int64, ndmin=1)
    if raw.size != manifest.expected_vertices:
        raise ConversionError(
            f"{path}: {raw.size} crop indices, expected {manifest.expected_vertices}")
    if raw.min() < 0 or raw.max() >= manifest.source_vertices:
        raise IndexRangeError(
            f"{path}: crop index {int(raw[np.argmax(np.abs(raw))])} outside "
            f"[0, {manifest.source_vertices})")
    return raw


def _gather_vertices(arr: np.ndarray, kept: np.ndarray, what: str,
                     source_vertices: int) -> np.ndarray:
    """Select the (x, y, z)/(r, g, b) rows of the kept vertices, in order."""
    arr = arr.reshape(3 * source_vertices, -1) if arr.ndim == 2 \
        else arr.reshape(3 * source_vertices, 1)
    if arr.shape[0] != 3 * source_vertices:
        raise ConversionError(
            f"{what}: {arr.shape[0]} rows, expected {3 * source_vertices}")
    rows = (kept[:, None] * 3 + np.arange(3)).ravel()
    return arr[rows]


def _truncate_basis(basis: np.ndarray, k: int, what: str) -> np.ndarray:
    if basis.shape[1] < k:
        raise ConversionError(
            f"{what}: {basis.shape[1]} basis columns, need at least {k}")
    return basis[:, :k]


def _as_vertex_indices(arr: np.ndarray, v: int, what: str) -> np.ndarray:
    """MATLAB 1-based indices into the cropped mesh -> 0-based int32."""
    flat = np.asarray(arr, dtype=np.float64)
    idx = np.rint(flat).astype(np.int64)
    if not np.allclose(flat, idx):
        raise ConversionError(f"{what}: non-integral index values")
    idx = idx - 1
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        raise IndexRangeError(f"{what}: index outside [1, {v}] (1-based)")
    return idx.astype(np.int32)


def convert(manifest: ConversionManifest) -> ConversionReport:
    """Run one conversion; writes the MFM1 file and returns the report."""
    base = _load_mat(manifest.base_path)
    exp = _load_mat(manifest.exp_path)
    info = _load_mat(manifest.info_path)
    kept = _read_indices(manifest.indices_path, manifest)
    sv, v = manifest.source_vertices, manifest.expected_vertices

    mapping = {}

    def pick(mat, logical, path):
        name, arr = _pick_field(mat, logical, path)
        mapping[logical] = name
        return arr

    mean_shape = _gather_vertices(pick(base, "mean_shape", manifest.base_path),
                                  kept, "mean shape", sv)[:, 0]
    id_basis = _truncate_basis(
        _gather_vertices(pick(base, "id_basis", manifest.base_path),
                         kept, "identity basis", sv),
        manifest.k_id, "identity basis")
    exp_basis = _truncate_basis(
        _gather_vertices(pick(exp, "exp_basis", manifest.exp_path),
                         kept, "expression basis", sv),
        manifest.k_exp, "expression basis")

    # texture is stored 0-255 in the source asset; the format wants [0, 1]
    raw_tex = _gather_vertices(pick(base, "mean_texture", manifest.base_path),
                               kept, "mean texture", sv)[:, 0] / 255.0
    clipped = int(((raw_tex < 0.0) | (raw_tex > 1.0)).sum())
    mean_texture = np.clip(raw_tex, 0.0, 1.0)
    tex_basis = _truncate_basis(
        _gather_vertices(pick(base, "tex_basis", manifest.base_path),
                         kept, "texture basis", sv),
        manifest.k_tex, "texture basis") / 255.0

    if manifest.recenter:
        centered = mean_shape.reshape(v, 3)
        mean_shape = (centered - centered.mean(axis=0)).reshape(-1)
    if manifest.scale != 1.0:
        mean_shape = mean_shape * manifest.scale
        id_basis = id_basis * manifest.scale
        exp_basis = exp_basis * manifest.scale

    triangles = _as_vertex_indices(pick(info, "triangles", manifest.info_path),
                                   v, "triangles").reshape(-1, 3)
    landmarks = _as_vertex_indices(pick(info, "landmarks", manifest.info_path),
                                   v, "landmarks").reshape(-1)
    skin = pick(info, "skin_mask", manifest.info_path).reshape(-1)
    if skin.size != v:
        raise ConversionError(
            f"skin mask has {skin.size} entries, cropped mesh has {v}")
    skin = np.clip(skin, 0.0, 1.0)

    try:
        payload = write_mfm(manifest.out_path, mean_shape, id_basis, exp_basis,
                            mean_texture, tex_basis, triangles, landmarks, skin)
    except OutputValidationError as err:
        raise ConversionError(f"output failed validation: {err}") from err

    return ConversionReport(
        out_path=manifest.out_path, vertices=v, triangles=triangles.shape[0],
        k_id=manifest.k_id, k_exp=manifest.k_exp, k_tex=manifest.k_tex,
        landmarks=landmarks.size, field_mapping=mapping,
        texture_values_clipped=clipped,
        payload_sha256=hashlib.sha256(payload).hexdigest())
