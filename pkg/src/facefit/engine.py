"""Gradient-based per-image fitting of the full coefficient vector.

The forward pipeline (shape -> texture -> pose -> normals -> shading ->
projection -> soft rasterization -> losses) is built from torch ops, so
one reverse-mode sweep yields the exact gradient of the total loss with
respect to every coefficient.  Adam then walks the 257-vector (or its toy
analog) downhill.  A central finite-difference gradient is provided as an
independent oracle.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .errors import FittingDomainError
from .illumination import shade
from .model_store import FaceModel
from .morphable import (Camera, DTYPE, FaceParams, apply_pose, evaluate_shape,
                        evaluate_texture, landmark_positions, project,
                        rotation_matrix, vertex_normals)
from .objective import LossWeights, Observation, total_loss
from .raster import RenderConfig, RenderOutput, rasterize_soft


@dataclass
class AdamState:
    """Adam accumulators; immutable use, adam_step returns a new state."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, learning_rate: float = 1e-2, **kw) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), learning_rate=learning_rate, **kw)


def adam_step(state: AdamState, params: np.ndarray, gradient: np.ndarray):
    """One bias-corrected Adam update; returns (new_state, new_params)."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != state.m.shape or g.shape != np.shape(params):
        raise ValueError("gradient/parameter length mismatch")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = np.asarray(params, dtype=np.float64) - \
        state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=t), new_params


@dataclass
class FitConfig:
    max_iterations: int = 500
    learning_rate: float = 1e-2   # original training setting 1e-3; CLI-overridable
    weights: LossWeights = field(default_factory=LossWeights)
    convergence_window: int = 10
    tolerance: float = 1e-9
    camera: Camera = field(default_factory=lambda: Camera(224, 224))
    render: RenderConfig = field(default_factory=RenderConfig)
    init_z: float = 10.0
    landmark_only_fraction: float = 0.25  # first stage runs with w_p = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class FitReport:
    params: FaceParams
    trace: list                 # one breakdown dict per iteration
    landmark_rmse: float
    iterations: int
    duration_seconds: float
    termination: str            # converged | max-iter | domain-error

    def to_json(self, include_timing: bool = False) -> str:
        doc = {
            "params": {
                "alpha_id": self.params.alpha_id.tolist(),
                "alpha_exp": self.params.alpha_exp.tolist(),
                "alpha_tex": self.params.alpha_tex.tolist(),
                "gamma": self.params.gamma.tolist(),
                "angles": self.params.angles.tolist(),
                "translation": self.params.translation.tolist(),
            },
            "trace": self.trace,
            "landmark_rmse": self.landmark_rmse,
            "iterations": self.iterations,
            "termination": self.termination,
            # timing is opt-in so that identical fits serialize identically
            "duration_seconds": self.duration_seconds if include_timing else None,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        doc = json.loads(text)
        p = doc["params"]
        params = FaceParams(p["alpha_id"], p["alpha_exp"], p["alpha_tex"],
                            p["gamma"], p["angles"], p["translation"])
        return cls(params=params, trace=doc["trace"],
                   landmark_rmse=doc["landmark_rmse"],
                   iterations=doc["iterations"],
                   duration_seconds=doc["duration_seconds"] or 0.0,
                   termination=doc["termination"])


def _split(vec: torch.Tensor, model: FaceModel):
    k1, k2, k3 = model.k_id, model.k_exp, model.k_tex
    o = np.cumsum([0, k1, k2, k3, 27, 3, 3])
    return (vec[o[0]:o[1]], vec[o[1]:o[2]], vec[o[2]:o[3]],
            vec[o[3]:o[4]], vec[o[4]:o[5]], vec[o[5]:o[6]])


def forward_pipeline(model: FaceModel, vec: torch.Tensor,
                     observation: Observation, config: FitConfig,
                     weights: LossWeights | None = None,
                     render_needed: bool = True):
    """Full differentiable forward pass; returns (loss, breakdown, render)."""
    weights = weights or config.weights
    a_id, a_exp, a_tex, gamma, angles, trans = _split(vec, model)
    shaped = evaluate_shape(model, a_id, a_exp)
    posed = apply_pose(shaped, rotation_matrix(angles), trans)
    proj = project(posed, config.camera)
    lm_pred = landmark_positions(model, proj)

    if render_needed and weights.w_p > 0:
        normals = vertex_normals(posed, model.triangles)
        albedo = evaluate_texture(model, a_tex)
        colors = shade(albedo, normals, gamma)
        render = rasterize_soft(proj, colors, model.skin_weights,
                                model.triangles, config.render)
    elif render_needed:
        with torch.no_grad():  # trace bookkeeping only; w_p = 0 cuts the gradient
            normals = vertex_normals(posed, model.triangles)
            albedo = evaluate_texture(model, a_tex)
            colors = shade(albedo, normals, gamma)
            render = rasterize_soft(proj.detach(), colors, model.skin_weights,
                                    model.triangles, config.render)
    else:
        h, w = config.render.height, config.render.width
        zero = torch.zeros((h, w), dtype=DTYPE)
        render = RenderOutput(rgb=torch.zeros((h, w, 3), dtype=DTYPE),
                              alpha=zero, mask=zero.clone())

    loss, breakdown = total_loss(observation, render, lm_pred, None, weights,
                                 alpha_id=a_id, alpha_exp=a_exp,
                                 alpha_tex=a_tex, gamma=gamma)
    return loss, breakdown, render


def loss_and_gradient(model: FaceModel, params, observation: Observation,
                      config: FitConfig, weights: LossWeights | None = None):
    """Total loss and its exact reverse-mode gradient over the flat vector."""
    vec_np = params.to_vector() if isinstance(params, FaceParams) else np.asarray(params)
    vec = torch.tensor(vec_np, dtype=DTYPE, requires_grad=True)
    loss, breakdown, _ = forward_pipeline(model, vec, observation, config, weights)
    grad, = torch.autograd.grad(loss, vec)
    return float(loss.detach()), grad.numpy()


def finite_difference_gradient(model: FaceModel, params, observation: Observation,
                               config: FitConfig, step: float = 1e-5,
                               weights: LossWeights | None = None,
                               loss_fn=None) -> np.ndarray:
    """Central-difference gradient oracle over every parameter entry."""
    if step <= 0:
        raise ValueError("step must be positive")
    vec = (params.to_vector() if isinstance(params, FaceParams)
           else np.asarray(params, dtype=np.float64)).copy()

    if loss_fn is None:
        def loss_fn(v):
            with torch.no_grad():
                loss, _, _ = forward_pipeline(
                    model, torch.tensor(v, dtype=DTYPE), observation, config, weights)
            return float(loss)

    grad = np.zeros_like(vec)
    for i in range(vec.size):
        orig = vec[i]
        vec[i] = orig + step
        hi = loss_fn(vec)
        vec[i] = orig - step
        lo = loss_fn(vec)
        vec[i] = orig
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


def fit(model: FaceModel, observation: Observation, config: FitConfig) -> FitReport:
    """Adam descent on the full coefficient vector from the zero init."""
    if observation.landmark_count != model.landmark_count:
        raise ValueError(
            f"observation has {observation.landmark_count} landmarks, "
            f"model expects {model.landmark_count}")
    start = time.perf_counter()
    vec = FaceParams.initial(model, z=config.init_z).to_vector()
    state = AdamState.zeros(vec.size, learning_rate=config.learning_rate)
    stage_end = int(config.landmark_only_fraction * config.max_iterations)
    try:
        stage1 = replace(config.weights, w_p=0.0)
    except ValueError:  # photometric term is the only active one
        stage1 = config.weights
        stage_end = 0

    trace = []
    best_vec, best_loss = vec.copy(), np.inf
    termination = "max-iter"
    iterations = 0
    for it in range(config.max_iterations):
        weights = stage1 if it < stage_end else config.weights
        try:
            leaf = torch.tensor(vec, dtype=DTYPE, requires_grad=True)
            loss_t, breakdown, _ = forward_pipeline(model, leaf, observation, config, weights)
            grad, = torch.autograd.grad(loss_t, leaf)
        except FittingDomainError as err:
            termination = "domain-error"
            err.iteration = it
            break
        iterations += 1
        trace.append(breakdown)
        # best-so-far is judged by the full objective so the landmark-only
        # stage cannot win on its cheaper loss
        full_loss = (config.weights.w_p * breakdown["photometric"]
                     + config.weights.w_l * breakdown["landmark"]
                     + breakdown["regularizer"])
        if full_loss < best_loss:
            best_loss, best_vec = full_loss, vec.copy()
        state, vec = adam_step(state, vec, grad.numpy())
        w = config.convergence_window
        if len(trace) > w:
            ref = trace[-1 - w]["total"]
            if abs(trace[-1]["total"] - ref) < config.tolerance * max(abs(ref), 1e-30):
                termination = "converged"
                break

    params = FaceParams.from_vector(best_vec, model.k_id, model.k_exp, model.k_tex)
    try:
        with torch.no_grad():
            _, final_breakdown, _ = forward_pipeline(
                model, torch.tensor(best_vec, dtype=DTYPE), observation, config)
        rmse = float(np.sqrt(final_breakdown["landmark"]))
    except FittingDomainError:  # no iteration ever produced a valid state
        rmse = float("inf")
    return FitReport(params=params, trace=trace, landmark_rmse=rmse,
                     iterations=iterations,
                     duration_seconds=time.perf_counter() - start,
                     termination=termination)


def render_params(model: FaceModel, params: FaceParams, camera: Camera,
                  render_config: RenderConfig):
    """Forward render only: returns (RenderOutput, projected landmarks)."""
    with torch.no_grad():
        posed = apply_pose(evaluate_shape(model, params.alpha_id, params.alpha_exp),
                           rotation_matrix(params.angles), params.translation)
        normals = vertex_normals(posed, model.triangles)
        colors = shade(evaluate_texture(model, params.alpha_tex), normals, params.gamma)
        proj = project(posed, camera)
        render = rasterize_soft(proj, colors, model.skin_weights,
                                model.triangles, render_config)
        lm = landmark_positions(model, proj)
    return render, lm.numpy()
