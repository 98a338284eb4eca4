import json

import numpy as np
import pytest
from click.testing import CliRunner

from facefit import (FaceParams, composite, load_model, load_params,
                     read_image, read_landmarks, read_obj_vertices,
                     render_params, save_model, save_params, write_image,
                     write_landmarks)
from facefit.cli import main
from facefit.morphable import Camera
from facefit.raster import RenderConfig

from scene_helpers import random_params, synthetic_observation

SIZE = 48
FIT_ARGS = ["--iterations", "150", "--sigma", "1e-4", "--gamma-agg", "1e-4"]


def run(args, expect=0):
    result = CliRunner().invoke(main, [str(a) for a in args])
    if result.exit_code != expect:  # surface the traceback on mismatch
        raise AssertionError(
            f"exit {result.exit_code} != {expect}\n{result.output}\n{result.exception}")
    return result


def run_fit(scene, out_dir):
    out_dir.mkdir(exist_ok=True)
    paths = {
        "report": out_dir / "report.json",
        "overlay": out_dir / "overlay.png",
        "mesh": out_dir / "mesh.obj",
        "params": out_dir / "fit.mfp",
    }
    run(["fit", "--model", scene["model"], "--image", scene["image"],
         "--landmarks", scene["landmarks"], "--out", paths["report"],
         "--overlay", paths["overlay"], "--mesh", paths["mesh"],
         "--params-out", paths["params"], *FIT_ARGS])
    return paths


@pytest.fixture(scope="module")
def scene(tmp_path_factory, toy_model):
    """A self-rendered toy scene on disk, plus one completed CLI fit."""
    root = tmp_path_factory.mktemp("cli_scene")
    model_path = root / "model.mfm"
    save_model(toy_model, model_path)
    gt = random_params(toy_model, np.random.default_rng(71))
    obs, _, _ = synthetic_observation(toy_model, gt, size=SIZE)
    write_image(root / "scene.png", obs.image)
    write_landmarks(root / "scene_lm.txt", obs.landmarks)
    paths = {"root": root, "model": model_path, "image": root / "scene.png",
             "landmarks": root / "scene_lm.txt", "gt": gt}
    paths.update(run_fit(paths, root / "fit1"))
    return paths


class TestSynthModel:
    def test_writes_loadable_model(self, tmp_path):
        path = tmp_path / "toy.mfm"
        run(["synth-model", "--seed", 11, "--v-grid", 8, "--k-id", 4,
             "--k-exp", 3, "--k-tex", 4, "--out", path])
        model = load_model(path)
        assert model.vertex_count == 64
        assert (model.k_id, model.k_exp, model.k_tex) == (4, 3, 4)
        assert model.param_count == 4 + 3 + 4 + 27 + 6

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a.mfm", tmp_path / "b.mfm"
        for path in (a, b):
            run(["synth-model", "--seed", 5, "--v-grid", 6, "--out", path])
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_different_bytes(self, tmp_path):
        a, b = tmp_path / "a.mfm", tmp_path / "b.mfm"
        run(["synth-model", "--seed", 5, "--v-grid", 6, "--out", a])
        run(["synth-model", "--seed", 6, "--v-grid", 6, "--out", b])
        assert a.read_bytes() != b.read_bytes()


class TestFit:
    def test_report_recovers_landmarks(self, scene):
        doc = json.loads(scene["report"].read_text())
        assert doc["landmark_rmse"] < 0.5
        assert doc["iterations"] > 0
        assert doc["termination"] in ("max-iter", "converged")
        assert doc["duration_seconds"] is None  # deterministic by default

    def test_artifacts_readable(self, scene, toy_model):
        params = load_params(scene["params"], toy_model)
        assert params.to_vector().size == toy_model.param_count
        overlay = read_image(scene["overlay"])
        assert overlay.shape == (SIZE, SIZE, 3)
        pos, col, tris = read_obj_vertices(scene["mesh"])
        assert pos.shape == (toy_model.vertex_count, 3)
        np.testing.assert_array_equal(tris, toy_model.triangles)

    def test_params_file_matches_report(self, scene, toy_model):
        doc = json.loads(scene["report"].read_text())
        vec = np.concatenate([doc["params"][k] for k in
                              ("alpha_id", "alpha_exp", "alpha_tex",
                               "gamma", "angles", "translation")])
        stored = load_params(scene["params"], toy_model).to_vector()
        np.testing.assert_allclose(stored, vec, atol=1e-6)  # float32 file

    def test_repeat_run_byte_identical(self, scene):
        again = run_fit(scene, scene["root"] / "fit2")
        assert again["report"].read_bytes() == scene["report"].read_bytes()
        assert again["overlay"].read_bytes() == scene["overlay"].read_bytes()
        assert again["mesh"].read_bytes() == scene["mesh"].read_bytes()

    def test_overlay_equals_composite(self, scene, toy_model):
        image = read_image(scene["image"])
        params = load_params(scene["params"], toy_model)
        config = RenderConfig(SIZE, SIZE, sigma=1e-4, gamma_agg=1e-4,
                              background=image)
        render, _ = render_params(toy_model, params, Camera(SIZE, SIZE), config)
        want = scene["root"] / "composite.png"
        write_image(want, composite(render, image).numpy())
        assert want.read_bytes() == scene["overlay"].read_bytes()

    def test_landmark_count_mismatch_exits_3(self, scene, tmp_path):
        bad = tmp_path / "bad_lm.txt"
        write_landmarks(bad, np.full((7, 2), 10.0))
        run(["fit", "--model", scene["model"], "--image", scene["image"],
             "--landmarks", bad, "--out", tmp_path / "r.json",
             "--iterations", 1], expect=3)


class TestRender:
    def test_zero_params_byte_identical(self, scene, tmp_path):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        for path in (a, b):
            run(["render", "--model", scene["model"], "--size", 32, "--out", path])
        assert a.read_bytes() == b.read_bytes()
        img = read_image(a)
        assert img.shape == (32, 32, 3)
        assert img.max() > 0.0  # ambient-lit dome is visible

    def test_params_file_render_matches_fit_scene(self, scene, toy_model, tmp_path):
        gt_path = tmp_path / "gt.mfp"
        save_params(gt_path, scene["gt"])
        out = tmp_path / "gt.png"
        run(["render", "--model", scene["model"], "--params", gt_path,
             "--size", SIZE, "--out", out])
        rendered = read_image(out)
        reference = read_image(scene["image"])
        # float32 parameter storage costs at most a few 8-bit levels
        assert np.abs(rendered - reference).max() < 0.05

    def test_mesh_option_writes_obj(self, scene, toy_model, tmp_path):
        mesh = tmp_path / "zero.obj"
        run(["render", "--model", scene["model"], "--size", 16,
             "--out", tmp_path / "z.png", "--mesh", mesh])
        pos, col, _ = read_obj_vertices(mesh)
        assert pos.shape == (toy_model.vertex_count, 3)
        assert col.min() >= 0.0 and col.max() <= 1.0

    def test_behind_camera_params_exit_4(self, scene, toy_model, tmp_path):
        params = FaceParams.zeros(toy_model, z=-5.0)
        bad = tmp_path / "behind.mfp"
        save_params(bad, params)
        run(["render", "--model", scene["model"], "--params", bad,
             "--out", tmp_path / "x.png"], expect=4)


class TestAlign:
    def test_crop_and_transform(self, tmp_path):
        from facefit import DEFAULT_TEMPLATE
        rng = np.random.default_rng(9)
        img_path = tmp_path / "photo.png"
        write_image(img_path, rng.uniform(size=(448, 448, 3)))
        pts_path = tmp_path / "pts.txt"
        write_landmarks(pts_path, DEFAULT_TEMPLATE * 2.0)
        out = tmp_path / "crop.png"
        tjson = tmp_path / "t.json"
        run(["align", "--image", img_path, "--points", pts_path,
             "--out", out, "--transform-out", tjson])
        assert read_image(out).shape == (224, 224, 3)
        doc = json.loads(tjson.read_text())
        assert doc["scale"] == pytest.approx(0.5, abs=1e-9)
        assert doc["theta"] == pytest.approx(0.0, abs=1e-9)

    def test_wrong_point_count_exits_3(self, tmp_path):
        img_path = tmp_path / "photo.png"
        write_image(img_path, np.zeros((64, 64, 3)))
        pts_path = tmp_path / "pts.txt"
        write_landmarks(pts_path, np.full((4, 2), 20.0))
        run(["align", "--image", img_path, "--points", pts_path,
             "--out", tmp_path / "c.png"], expect=3)


class TestInspect:
    def test_prints_model_params_report(self, scene):
        result = run(["inspect", "--model", scene["model"],
                      "--params", scene["params"], "--report", scene["report"]])
        assert "V=256" in result.output
        assert "values" in result.output
        assert "termination" in result.output

    def test_no_arguments_exits_2(self):
        run(["inspect"], expect=2)

    def test_bad_params_magic_exits_3(self, tmp_path):
        bad = tmp_path / "bad.mfp"
        bad.write_bytes(b"JUNK" + bytes(16))
        run(["inspect", "--params", bad], expect=3)


class TestExitCodes:
    def test_missing_required_option_exits_2(self):
        run(["render", "--out", "x.png"], expect=2)

    def test_missing_model_file_exits_3(self, tmp_path):
        run(["render", "--model", tmp_path / "nope.mfm",
             "--out", tmp_path / "x.png"], expect=3)

    def test_corrupt_model_exits_3(self, tmp_path):
        bad = tmp_path / "corrupt.mfm"
        bad.write_bytes(b"XXXX" + bytes(64))
        run(["inspect", "--model", bad], expect=3)
