"""facefit: single-image 3D face reconstruction by analysis-by-synthesis.

A linear morphable face model (identity + expression + albedo bases),
spherical-harmonics lighting, and a differentiable soft rasterizer are
chained into one objective whose gradient drives Adam over the full
coefficient vector (257 entries for the Basel configuration).
"""

from .alignment import (DEFAULT_TEMPLATE, AlignmentSpec, SimilarityTransform,
                        align_crop, solve_similarity)
from .engine import (AdamState, FitConfig, FitReport, adam_step, fit,
                     finite_difference_gradient, loss_and_gradient, render_params)
from .errors import (BadMagicError, DegenerateInputError, DimensionMismatchError,
                     FaceFitError, FittingDomainError, InvariantViolationError,
                     ModelFormatError, TruncatedFileError)
from .estimator import FaceFitter
from .fileio import (load_params, read_image, read_landmarks, read_obj_vertices,
                     save_params, write_image, write_landmarks, write_obj)
from .illumination import sh_basis, shade
from .model_store import FaceModel, load_model, make_toy_model, save_model, validate_model
from .morphable import (Camera, FaceParams, SurfaceMesh, apply_pose, evaluate_shape,
                        evaluate_texture, landmark_positions, project,
                        rotation_matrix, vertex_normals)
from .objective import (LossWeights, Observation, coefficient_regularizer,
                        landmark_loss, photometric_loss, total_loss)
from .raster import RenderConfig, RenderOutput, composite, rasterize_hard, rasterize_soft

__version__ = "0.1.0"
