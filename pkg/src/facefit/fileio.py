"""File formats around the fitter: PNG images, landmark text files,
parameter binaries ("MFP1") and OBJ meshes with per-vertex color."""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .errors import BadMagicError, DimensionMismatchError, TruncatedFileError
from .model_store import FaceModel
from .morphable import FaceParams

PARAM_MAGIC = b"MFP1"


def read_image(path) -> np.ndarray:
    """8-bit RGB PNG -> float image in [0, 1] (linear /255, no gamma)."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def write_image(path, image) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def read_landmarks(path) -> np.ndarray:
    """UTF-8 text, one "u v" pair per line -> (L, 2) array."""
    points = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            u, v = line.split()
            points.append((float(u), float(v)))
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)


def write_landmarks(path, points) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in pts:
            fh.write(f"{float(u)!r} {float(v)!r}\n")


def save_params(path, params: FaceParams) -> None:
    """MFP1 binary: magic, uint32 count, float32 values in frozen order."""
    vec = params.to_vector().astype("<f4")
    with open(path, "wb") as fh:
        fh.write(PARAM_MAGIC)
        fh.write(struct.pack("<I", vec.size))
        fh.write(vec.tobytes())


def load_params(path, model: FaceModel) -> FaceParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != PARAM_MAGIC:
        raise BadMagicError(f"{path}: not an MFP1 file")
    if len(data) < 8:
        raise TruncatedFileError(f"{path}: truncated header")
    (count,) = struct.unpack_from("<I", data, 4)
    if len(data) != 8 + 4 * count:
        raise TruncatedFileError(f"{path}: payload length disagrees with header")
    vec = np.frombuffer(data, dtype="<f4", count=count, offset=8).astype(np.float64)
    expected = model.param_count
    if count != expected:
        raise DimensionMismatchError(
            f"{path}: {count} values, model expects {expected}")
    return FaceParams.from_vector(vec, model.k_id, model.k_exp, model.k_tex)


def write_obj(path, positions, colors, triangles) -> None:
    """OBJ with the per-vertex-color extension: "v x y z r g b" lines.

    Faces use 1-based indices, per the OBJ convention.
    """
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    col = np.clip(np.asarray(colors, dtype=np.float64).reshape(-1, 3), 0.0, 1.0)
    if pos.shape != col.shape:
        raise DimensionMismatchError("positions and colors disagree on vertex count")
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# facefit mesh export (vertex colors as v x y z r g b)\n")
        for p, c in zip(pos, col):
            fh.write(f"v {p[0]:.8f} {p[1]:.8f} {p[2]:.8f} "
                     f"{c[0]:.6f} {c[1]:.6f} {c[2]:.6f}\n")
        for t in tris:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def read_obj_vertices(path):
    """Read back positions/colors/faces from our OBJ flavor (for tests)."""
    pos, col, tris = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vals = [float(x) for x in parts[1:]]
                pos.append(vals[:3])
                col.append(vals[3:6] if len(vals) >= 6 else [1.0, 1.0, 1.0])
            elif parts[0] == "f":
                tris.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return (np.asarray(pos), np.asarray(col), np.asarray(tris, dtype=np.int64))
