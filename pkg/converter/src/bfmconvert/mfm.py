"""MFM1 writer and pre-flight validation.

The byte layout is normative and shared with the consumer package:
magic "MFM1"; eight little-endian uint32 header words
(V, T, K_id, K_exp, K_tex, L, 0, 0); then little-endian float32 arrays
in the order mean_shape, id_basis, exp_basis, mean_texture, tex_basis,
triangles, landmark_indices, skin_weights.  Basis matrices are stored
column by column (each column one basis vector of length 3V); index
arrays are stored as float32, which is exact for every index in range.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MFM1"
_HEADER = struct.Struct("<8I")


class OutputValidationError(ValueError):
    """The assembled arrays would not form a loadable MFM1 file."""


def validate_arrays(mean_shape, id_basis, exp_basis, mean_texture, tex_basis,
                    triangles, landmark_indices, skin_weights) -> None:
    """Enforce the format's invariants before anything touches the disk."""
    v = mean_shape.size // 3
    if v < 1 or mean_shape.size != 3 * v:
        raise OutputValidationError("mean shape length is not a multiple of 3")
    for name, basis in (("identity", id_basis), ("expression", exp_basis),
                        ("texture", tex_basis)):
        if basis.ndim != 2 or basis.shape[0] != 3 * v or basis.shape[1] < 1:
            raise OutputValidationError(
                f"{name} basis shape {basis.shape} inconsistent with V={v}")
    if mean_texture.size != 3 * v:
        raise OutputValidationError("mean texture length != 3V")
    if mean_texture.size and not (0.0 <= mean_texture.min()
                                  and mean_texture.max() <= 1.0):
        raise OutputValidationError("mean texture values outside [0, 1]")
    if triangles.ndim != 2 or triangles.shape[1] != 3 or triangles.shape[0] < 1:
        raise OutputValidationError("triangles must be a non-empty (T, 3) array")
    if triangles.min() < 0 or triangles.max() >= v:
        raise OutputValidationError("triangle index out of range")
    lm = np.asarray(landmark_indices)
    if lm.size and (lm.min() < 0 or lm.max() >= v):
        raise OutputValidationError("landmark index out of range")
    if len(np.unique(lm)) != lm.size:
        raise OutputValidationError("landmark indices are not distinct")
    if skin_weights.size != v:
        raise OutputValidationError("skin weights length != V")
    if skin_weights.size and not (0.0 <= skin_weights.min()
                                  and skin_weights.max() <= 1.0):
        raise OutputValidationError("skin weights outside [0, 1]")
    for name, arr in (("mean shape", mean_shape), ("identity basis", id_basis),
                      ("expression basis", exp_basis),
                      ("mean texture", mean_texture),
                      ("texture basis", tex_basis),
                      ("skin weights", skin_weights)):
        if not np.isfinite(arr).all():
            raise OutputValidationError(f"{name} contains non-finite values")


def write_mfm(path, mean_shape, id_basis, exp_basis, mean_texture, tex_basis,
              triangles, landmark_indices, skin_weights) -> bytes:
    """Write the arrays as an MFM1 file; returns the payload bytes written."""
    payload_arrays = [
        np.ascontiguousarray(mean_shape, dtype="<f4").ravel(),
        np.asarray(id_basis, dtype="<f4").ravel(order="F"),
        np.asarray(exp_basis, dtype="<f4").ravel(order="F"),
        np.ascontiguousarray(mean_texture, dtype="<f4").ravel(),
        np.asarray(tex_basis, dtype="<f4").ravel(order="F"),
        np.asarray(triangles, dtype="<f4").ravel(),
        np.asarray(landmark_indices, dtype="<f4").ravel(),
        np.ascontiguousarray(skin_weights, dtype="<f4").ravel(),
    ]
    # validate the float32-truncated values: that is what the file holds
    validate_arrays(payload_arrays[0],
                    payload_arrays[1].reshape(id_basis.shape, order="F"),
                    payload_arrays[2].reshape(exp_basis.shape, order="F"),
                    payload_arrays[3],
                    payload_arrays[4].reshape(tex_basis.shape, order="F"),
                    np.asarray(triangles), np.asarray(landmark_indices),
                    payload_arrays[7])
    v = mean_shape.size // 3
    header = _HEADER.pack(v, np.asarray(triangles).shape[0],
                          id_basis.shape[1], exp_basis.shape[1],
                          tex_basis.shape[1], np.asarray(landmark_indices).size,
                          0, 0)
    payload = b"".join(a.tobytes() for a in payload_arrays)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        fh.write(payload)
    return payload
