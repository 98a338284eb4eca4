"""Command-line pipeline: model synthesis, alignment, fitting, rendering.

Exit codes: 0 success, 2 usage error, 3 I/O or file-format error,
4 fitting domain error.
"""

from __future__ import annotations

import functools
import json
import sys

import click
import numpy as np

from . import fileio
from .alignment import AlignmentSpec, align_crop
from .engine import FitConfig, fit as run_fit, render_params
from .errors import FittingDomainError, ModelFormatError
from .model_store import load_model, make_toy_model, save_model
from .morphable import Camera, FaceParams
from .objective import LossWeights, Observation
from .raster import RenderConfig, composite


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (OSError, ModelFormatError, ValueError) as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(3)
        except FittingDomainError as err:
            click.echo(f"fitting domain error: {err}", err=True)
            sys.exit(4)
    return wrapper


@click.group()
def main():
    """Single-image 3D face reconstruction by morphable-model fitting."""


@main.command("synth-model")
@click.option("--seed", type=int, required=True)
@click.option("--v-grid", type=int, default=16, show_default=True)
@click.option("--k-id", type=int, default=8, show_default=True)
@click.option("--k-exp", type=int, default=6, show_default=True)
@click.option("--k-tex", type=int, default=8, show_default=True)
@click.option("--landmarks", "n_landmarks", type=int, default=5, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@_exit_codes
def synth_model(seed, v_grid, k_id, k_exp, k_tex, n_landmarks, out):
    """Generate a deterministic toy model and write it as MFM1."""
    model = make_toy_model(seed, v_grid, k_id, k_exp, k_tex, n_landmarks)
    save_model(model, out)
    click.echo(f"wrote {out}: V={model.vertex_count} T={model.triangle_count} "
               f"params={model.param_count}")


@main.command()
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--image", "image_path", type=click.Path(), required=True)
@click.option("--landmarks", "landmarks_path", type=click.Path(), required=True)
@click.option("--out", "report_path", type=click.Path(), required=True)
@click.option("--mesh", "mesh_path", type=click.Path(), default=None)
@click.option("--overlay", "overlay_path", type=click.Path(), default=None)
@click.option("--params-out", "params_path", type=click.Path(), default=None)
@click.option("--iterations", type=int, default=500, show_default=True)
@click.option("--learning-rate", type=float, default=1e-2, show_default=True,
              help="1e-3 matches the original training setting")
@click.option("--w-photometric", type=float, default=1.0, show_default=True)
@click.option("--w-landmark", type=float, default=1.6e-3, show_default=True)
@click.option("--w-reg", type=float, default=1e-4, show_default=True)
@click.option("--sigma", type=float, default=1e-4, show_default=True)
@click.option("--gamma-agg", type=float, default=1e-4, show_default=True)
@click.option("--focal", type=float, default=0.0, help="0 = 1015 * width/224")
@click.option("--tolerance", type=float, default=1e-9, show_default=True)
@click.option("--init-z", type=float, default=10.0, show_default=True)
@click.option("--stage-fraction", type=float, default=0.25, show_default=True,
              help="fraction of iterations run landmark-only")
@click.option("--timing/--no-timing", default=False,
              help="include wall-clock time in the report (breaks byte determinism)")
@_exit_codes
def fit(model_path, image_path, landmarks_path, report_path, mesh_path,
        overlay_path, params_path, iterations, learning_rate, w_photometric,
        w_landmark, w_reg, sigma, gamma_agg, focal, tolerance, init_z,
        stage_fraction, timing):
    """Fit the coefficient vector to one photo and write artifacts."""
    model = load_model(model_path)
    image = fileio.read_image(image_path)
    landmarks = fileio.read_landmarks(landmarks_path)
    h, w = image.shape[:2]

    if landmarks.shape[0] == 5 and model.landmark_count != 5:
        # five points are an alignment file: crop first, then fit on the
        # template points through the model's first five landmark vertices
        image, _ = align_crop(image, landmarks)
        h, w = image.shape[:2]
        landmarks = AlignmentSpec().reference_points
        model_lm = model.landmark_indices[:5]
        import dataclasses
        model = dataclasses.replace(model, landmark_indices=np.asarray(model_lm))
    if landmarks.shape[0] != model.landmark_count:
        raise ValueError(f"landmark file has {landmarks.shape[0]} points, "
                         f"model expects {model.landmark_count}")

    weights = LossWeights(w_p=w_photometric, w_l=w_landmark, w_reg_id=w_reg,
                          w_reg_exp=w_reg, w_reg_tex=w_reg, w_reg_gamma=w_reg)
    config = FitConfig(
        max_iterations=iterations, learning_rate=learning_rate, weights=weights,
        tolerance=tolerance, camera=Camera(w, h, focal),
        render=RenderConfig(width=w, height=h, sigma=sigma, gamma_agg=gamma_agg,
                            background=image),
        init_z=init_z, landmark_only_fraction=stage_fraction)
    observation = Observation(image=image, landmarks=landmarks)
    report = run_fit(model, observation, config)

    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json(include_timing=timing))
    if params_path:
        fileio.save_params(params_path, report.params)
    if mesh_path or overlay_path:
        render, _ = render_params(model, report.params, config.camera, config.render)
        if overlay_path:
            fileio.write_image(overlay_path, composite(render, image).numpy())
        if mesh_path:
            _write_mesh(model, report.params, mesh_path)
    click.echo(f"fit finished: {report.termination} after {report.iterations} "
               f"iterations, landmark RMSE {report.landmark_rmse:.4f} px")


def _write_mesh(model, params, path):
    import torch

    from .engine import forward_pipeline  # noqa: F401 (shared pipeline pieces)
    from .illumination import shade
    from .morphable import (apply_pose, evaluate_shape, evaluate_texture,
                            rotation_matrix, vertex_normals)
    with torch.no_grad():
        posed = apply_pose(evaluate_shape(model, params.alpha_id, params.alpha_exp),
                           rotation_matrix(params.angles), params.translation)
        normals = vertex_normals(posed, model.triangles)
        colors = shade(evaluate_texture(model, params.alpha_tex), normals, params.gamma)
    fileio.write_obj(path, posed.numpy(), colors.numpy(), model.triangles)


@main.command()
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--params", "params_path", type=click.Path(), default=None,
              help="MFP1 file; zero coefficients when omitted")
@click.option("--size", type=int, default=224, show_default=True)
@click.option("--focal", type=float, default=0.0)
@click.option("--sigma", type=float, default=1e-4, show_default=True)
@click.option("--gamma-agg", type=float, default=1e-4, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--mesh", "mesh_path", type=click.Path(), default=None)
@_exit_codes
def render(model_path, params_path, size, focal, sigma, gamma_agg, out, mesh_path):
    """Render a parameter vector to a PNG (and optionally an OBJ mesh)."""
    model = load_model(model_path)
    if params_path:
        params = fileio.load_params(params_path, model)
    else:
        params = FaceParams.zeros(model)
        params.gamma[0] = params.gamma[9] = params.gamma[18] = 1.0 / 0.282095
    camera = Camera(size, size, focal)
    config = RenderConfig(width=size, height=size, sigma=sigma, gamma_agg=gamma_agg)
    output, _ = render_params(model, params, camera, config)
    fileio.write_image(out, output.rgb.numpy())
    if mesh_path:
        _write_mesh(model, params, mesh_path)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--image", "image_path", type=click.Path(), required=True)
@click.option("--points", "points_path", type=click.Path(), required=True,
              help="five-point file: left eye, right eye, nose, mouth corners")
@click.option("--size", type=int, default=224, show_default=True)
@click.option("--template", "template_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--transform-out", type=click.Path(), default=None)
@_exit_codes
def align(image_path, points_path, size, template_path, out, transform_out):
    """Similarity-align a photo onto the canonical five-point template."""
    image = fileio.read_image(image_path)
    points = fileio.read_landmarks(points_path)
    if points.shape[0] != 5:
        raise ValueError("alignment needs exactly five points")
    if template_path:
        spec = AlignmentSpec(fileio.read_landmarks(template_path), size, size)
    else:
        spec = AlignmentSpec(crop_width=size, crop_height=size)
        spec.reference_points *= size / 224.0
    cropped, transform = align_crop(image, points, spec)
    fileio.write_image(out, cropped)
    if transform_out:
        doc = {"scale": transform.scale, "theta": transform.theta,
               "tx": transform.tx, "ty": transform.ty}
        with open(transform_out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
    click.echo(f"wrote {out} (scale {transform.scale:.4f})")


@main.command()
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--params", "params_path", type=click.Path(), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
@_exit_codes
def inspect(model_path, params_path, report_path):
    """Print metadata for model / parameter / report files."""
    if not any((model_path, params_path, report_path)):
        raise click.UsageError("give at least one of --model/--params/--report")
    if model_path:
        m = load_model(model_path)
        click.echo(f"model {model_path}: V={m.vertex_count} T={m.triangle_count} "
                   f"K_id={m.k_id} K_exp={m.k_exp} K_tex={m.k_tex} "
                   f"L={m.landmark_count} params={m.param_count}")
    if params_path:
        import struct
        with open(params_path, "rb") as fh:
            head = fh.read(8)
        if head[:4] != fileio.PARAM_MAGIC:
            raise ValueError(f"{params_path}: not an MFP1 file")
        (count,) = struct.unpack_from("<I", head, 4)
        click.echo(f"params {params_path}: {count} values")
    if report_path:
        with open(report_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        click.echo(f"report {report_path}: {doc['iterations']} iterations, "
                   f"termination {doc['termination']}, "
                   f"landmark RMSE {doc['landmark_rmse']:.4f} px")


if __name__ == "__main__":
    main()
