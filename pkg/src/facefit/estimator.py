"""Scikit-learn-style front door around the fitting engine.

``FaceFitter`` keeps hyperparameters in the constructor (so ``get_params``
/ ``set_params`` and grid-search composition work) and exposes ``fit`` on
one observation, ``predict`` for projected landmarks, and ``render`` for
the reconstructed image.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .engine import FitConfig, fit, render_params
from .model_store import FaceModel
from .morphable import Camera
from .objective import LossWeights, Observation
from .raster import RenderConfig, composite


class FaceFitter(BaseEstimator):
    """Recover morphable-model coefficients for a single face image.

    Parameters mirror FitConfig; `model` is the loaded FaceModel asset.
    """

    def __init__(self, model: FaceModel | None = None, max_iterations: int = 500,
                 learning_rate: float = 1e-2, w_photometric: float = 1.0,
                 w_landmark: float = 1.6e-3, w_regularizer: float = 1e-4,
                 tolerance: float = 1e-9, convergence_window: int = 10,
                 image_size: int = 224, focal: float = 0.0, sigma: float = 1e-4,
                 gamma_agg: float = 1e-4, init_z: float = 10.0,
                 landmark_only_fraction: float = 0.25):
        self.model = model
        self.max_iterations = max_iterations
        self.learning_rate = learning_rate
        self.w_photometric = w_photometric
        self.w_landmark = w_landmark
        self.w_regularizer = w_regularizer
        self.tolerance = tolerance
        self.convergence_window = convergence_window
        self.image_size = image_size
        self.focal = focal
        self.gamma_agg = gamma_agg
        self.sigma = sigma
        self.init_z = init_z
        self.landmark_only_fraction = landmark_only_fraction

    def _config(self, height: int, width: int, background=None) -> FitConfig:
        weights = LossWeights(
            w_p=self.w_photometric, w_l=self.w_landmark,
            w_reg_id=self.w_regularizer, w_reg_exp=self.w_regularizer,
            w_reg_tex=self.w_regularizer, w_reg_gamma=self.w_regularizer)
        render = RenderConfig(width=width, height=height, sigma=self.sigma,
                              gamma_agg=self.gamma_agg,
                              background=np.zeros(3) if background is None else background)
        return FitConfig(max_iterations=self.max_iterations,
                         learning_rate=self.learning_rate, weights=weights,
                         convergence_window=self.convergence_window,
                         tolerance=self.tolerance,
                         camera=Camera(width, height, self.focal),
                         render=render, init_z=self.init_z,
                         landmark_only_fraction=self.landmark_only_fraction)

    def fit(self, X, y=None):
        """X: an Observation, or an (image, landmarks) pair."""
        if self.model is None:
            raise ValueError("FaceFitter needs a FaceModel before fitting")
        obs = X if isinstance(X, Observation) else Observation(X[0], X[1])
        h, w = obs.image.shape[:2]
        config = self._config(h, w, background=obs.image)
        self.report_ = fit(self.model, obs, config)
        self.params_ = self.report_.params
        self.observation_ = obs
        return self

    def predict(self, X=None) -> np.ndarray:
        """Projected (u, v) positions of the model landmarks after fitting."""
        check_is_fitted(self, "params_")
        h, w = self.observation_.image.shape[:2]
        config = self._config(h, w)
        _, lm = render_params(self.model, self.params_, config.camera, config.render)
        return lm

    def render(self, overlay: bool = True) -> np.ndarray:
        """Rendered reconstruction; composited over the photo if overlay."""
        check_is_fitted(self, "params_")
        h, w = self.observation_.image.shape[:2]
        config = self._config(h, w)
        out, _ = render_params(self.model, self.params_, config.camera, config.render)
        if overlay:
            return composite(out, self.observation_.image).numpy()
        return out.rgb.numpy()
