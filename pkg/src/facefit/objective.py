"""Fitting losses: masked photometric MSE, landmark MSE, coefficient
regularizer, and their weighted total."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import DimensionMismatchError
from .morphable import DTYPE, FaceParams, _t
from .raster import RenderOutput


@dataclass
class Observation:
    """One aligned input photo with its detected landmarks."""

    image: np.ndarray          # (H, W, 3) in [0, 1]
    landmarks: np.ndarray      # (L, 2) pixel (u, v)
    detector: str = "file"

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.landmarks = np.asarray(self.landmarks, dtype=np.float64).reshape(-1, 2)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise DimensionMismatchError("observation image must be HxWx3")
        h, w = self.image.shape[:2]
        self.out_of_bounds = ((self.landmarks[:, 0] < 0) | (self.landmarks[:, 0] > w) |
                              (self.landmarks[:, 1] < 0) | (self.landmarks[:, 1] > h))

    @property
    def landmark_count(self) -> int:
        return self.landmarks.shape[0]


@dataclass
class LossWeights:
    w_p: float = 1.0
    w_l: float = 1.6e-3
    w_reg_id: float = 1e-4
    w_reg_exp: float = 1e-4
    w_reg_tex: float = 1e-4
    w_reg_gamma: float = 1e-4

    def __post_init__(self):
        vals = (self.w_p, self.w_l, self.w_reg_id, self.w_reg_exp,
                self.w_reg_tex, self.w_reg_gamma)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be non-negative")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


def photometric_loss(observed, rendered: RenderOutput) -> torch.Tensor:
    """Mask-weighted per-channel MSE between photo and render.

    L_p = sum_i mask_i * ||obs_i - ren_i||^2 / (3 * sum_i mask_i);
    returns 0 when the mask is empty.
    """
    obs = _t(observed)
    if obs.shape != rendered.rgb.shape:
        raise DimensionMismatchError("observed image and render size disagree")
    mask = rendered.mask
    mask_sum = mask.sum()
    if float(mask_sum.detach()) == 0.0:
        return torch.zeros((), dtype=DTYPE)
    sq = ((obs - rendered.rgb) ** 2).sum(dim=2)
    return (mask * sq).sum() / (3.0 * mask_sum)


def landmark_loss(observed, predicted) -> torch.Tensor:
    """L_l = mean over landmarks of squared (u, v) offset, pixel^2 units."""
    obs = _t(observed).reshape(-1, 2)
    pred = _t(predicted).reshape(-1, 2)
    if obs.shape != pred.shape:
        raise DimensionMismatchError(
            f"landmark counts disagree: {obs.shape[0]} vs {pred.shape[0]}")
    return ((obs - pred) ** 2).sum(dim=1).mean()


def coefficient_regularizer(params, weights: LossWeights,
                            alpha_id=None, alpha_exp=None, alpha_tex=None,
                            gamma=None) -> torch.Tensor:
    """Weighted squared norms of the coefficient blocks.

    Only the non-constant SH terms of gamma are penalized, so overall
    brightness stays free.  Accepts a FaceParams or explicit tensors.
    """
    if isinstance(params, FaceParams):
        alpha_id, alpha_exp = params.alpha_id, params.alpha_exp
        alpha_tex, gamma = params.alpha_tex, params.gamma
    a_id, a_exp, a_tex = _t(alpha_id), _t(alpha_exp), _t(alpha_tex)
    g = _t(gamma).reshape(3, 9)
    return (weights.w_reg_id * (a_id ** 2).sum()
            + weights.w_reg_exp * (a_exp ** 2).sum()
            + weights.w_reg_tex * (a_tex ** 2).sum()
            + weights.w_reg_gamma * (g[:, 1:] ** 2).sum())


def total_loss(observation: Observation, rendered: RenderOutput,
               predicted_landmarks, params, weights: LossWeights,
               **param_tensors):
    """Weighted sum of the loss terms; returns (scalar, breakdown dict)."""
    l_p = photometric_loss(observation.image, rendered)
    l_l = landmark_loss(observation.landmarks, predicted_landmarks)
    reg = coefficient_regularizer(params, weights, **param_tensors)
    total = weights.w_p * l_p + weights.w_l * l_l + reg
    breakdown = {
        "photometric": float(l_p.detach()),
        "landmark": float(l_l.detach()),
        "regularizer": float(reg.detach()),
        "weighted_photometric": float((weights.w_p * l_p).detach()),
        "weighted_landmark": float((weights.w_l * l_l).detach()),
        "total": float(total.detach()),
    }
    return total, breakdown
