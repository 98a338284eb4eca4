import math

import numpy as np
import pytest
import torch

from facefit import (Camera, DimensionMismatchError, FaceParams, FittingDomainError,
                     apply_pose, evaluate_shape, evaluate_texture,
                     landmark_positions, project, rotation_matrix, vertex_normals)


def loop_shape_oracle(model, a_id, a_exp):
    """Element-wise triple loop, independent of any matmul shortcut."""
    out = model.mean_shape.astype(np.float64).copy()
    for k, c in enumerate(a_id):
        for i in range(out.size):
            out[i] += float(model.id_basis[i, k]) * c
    for k, c in enumerate(a_exp):
        for i in range(out.size):
            out[i] += float(model.exp_basis[i, k]) * c
    return out.reshape(-1, 3)


class TestEvaluateShape:
    def test_zero_coefficients_give_mean(self, toy_model):
        s = evaluate_shape(toy_model, np.zeros(8), np.zeros(6)).numpy()
        np.testing.assert_array_equal(s.ravel(), toy_model.mean_shape.astype(np.float64))

    def test_one_hot_adds_basis_column(self, toy_model):
        e1 = np.zeros(8)
        e1[0] = 1.0
        s = evaluate_shape(toy_model, e1, np.zeros(6)).numpy()
        expected = toy_model.mean_shape.astype(np.float64) + \
            toy_model.id_basis[:, 0].astype(np.float64)
        np.testing.assert_allclose(s.ravel(), expected, rtol=0, atol=1e-15)

    def test_matches_loop_oracle(self, toy_model):
        rng = np.random.default_rng(3)
        a_id = rng.normal(size=8)
        a_exp = rng.normal(size=6)
        got = evaluate_shape(toy_model, a_id, a_exp).numpy()
        want = loop_shape_oracle(toy_model, a_id, a_exp)
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_dimension_mismatch(self, toy_model):
        with pytest.raises(DimensionMismatchError):
            evaluate_shape(toy_model, np.zeros(7), np.zeros(6))

    def test_linearity(self, toy_model):
        rng = np.random.default_rng(4)
        a1, a2 = rng.normal(size=(2, 8))
        e1, e2 = rng.normal(size=(2, 6))
        a, b = 0.7, -1.3
        lhs = evaluate_shape(toy_model, a * a1 + b * a2, a * e1 + b * e2).numpy()
        rhs = (a * evaluate_shape(toy_model, a1, e1).numpy()
               + b * evaluate_shape(toy_model, a2, e2).numpy()
               - (a + b - 1) * evaluate_shape(toy_model, np.zeros(8), np.zeros(6)).numpy())
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


class TestEvaluateTexture:
    def test_zero_coefficients_give_mean(self, toy_model):
        t = evaluate_texture(toy_model, np.zeros(8)).numpy()
        np.testing.assert_array_equal(t.ravel(), toy_model.mean_texture.astype(np.float64))

    def test_one_hot(self, toy_model):
        e2 = np.zeros(8)
        e2[1] = 1.0
        t = evaluate_texture(toy_model, e2).numpy()
        expected = np.clip(toy_model.mean_texture.astype(np.float64)
                           + toy_model.tex_basis[:, 1].astype(np.float64), 0.0, 1.0)
        np.testing.assert_allclose(t.ravel(), expected, rtol=0, atol=1e-15)

    def test_matches_loop_oracle(self, toy_model):
        rng = np.random.default_rng(5)
        a = rng.normal(size=8)
        got = evaluate_texture(toy_model, a, clamp=False).numpy().ravel()
        want = toy_model.mean_texture.astype(np.float64).copy()
        for k, c in enumerate(a):
            for i in range(want.size):
                want[i] += float(toy_model.tex_basis[i, k]) * c
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_clamped_to_unit_interval(self, toy_model):
        t = evaluate_texture(toy_model, 100.0 * np.ones(8)).numpy()
        assert t.min() >= 0.0 and t.max() <= 1.0


class TestRotationMatrix:
    def test_identity_at_zero(self):
        np.testing.assert_allclose(rotation_matrix(np.zeros(3)).numpy(), np.eye(3),
                                   atol=1e-15)

    def test_quarter_turn_about_z(self):
        r = rotation_matrix([0.0, 0.0, math.pi / 2]).numpy()
        np.testing.assert_allclose(r @ np.array([1.0, 0.0, 0.0]),
                                   np.array([0.0, 1.0, 0.0]), atol=1e-12)

    def test_special_orthogonal_for_random_angles(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            r = rotation_matrix(rng.uniform(-np.pi, np.pi, 3)).numpy()
            np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-10)
            assert abs(np.linalg.det(r) - 1.0) < 1e-10

    def test_composition_order_is_zyx(self):
        angles = np.array([0.3, -0.2, 0.7])
        rx = rotation_matrix([angles[0], 0, 0]).numpy()
        ry = rotation_matrix([0, angles[1], 0]).numpy()
        rz = rotation_matrix([0, 0, angles[2]]).numpy()
        np.testing.assert_allclose(rotation_matrix(angles).numpy(), rz @ ry @ rx,
                                   atol=1e-12)


class TestApplyPose:
    def test_identity(self):
        pts = np.random.default_rng(7).normal(size=(10, 3))
        np.testing.assert_allclose(apply_pose(pts, np.eye(3), np.zeros(3)).numpy(),
                                   pts, atol=1e-15)

    def test_pure_translation(self):
        pts = np.random.default_rng(8).normal(size=(10, 3))
        out = apply_pose(pts, np.eye(3), [0.0, 0.0, 5.0]).numpy()
        np.testing.assert_allclose(out[:, 2], pts[:, 2] + 5.0, atol=1e-15)
        np.testing.assert_allclose(out[:, :2], pts[:, :2], atol=1e-15)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(20, 3))
        r = rotation_matrix(rng.uniform(-1, 1, 3)).numpy()
        t = rng.normal(size=3)
        got = apply_pose(pts, r, t).numpy()
        want = np.array([r @ p + t for p in pts])
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


class TestVertexNormals:
    def test_flat_square(self):
        pos = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
        tris = np.array([[0, 1, 2], [0, 2, 3]])
        n = vertex_normals(pos, tris).numpy()
        np.testing.assert_allclose(n, np.tile([0, 0, 1.0], (4, 1)), atol=1e-12)

    def test_unit_sphere_normals_near_radial(self):
        # lat-long sphere triangulation, poles excluded from the check
        n_lat, n_lon = 14, 24
        verts, tris = [], []
        for i in range(1, n_lat):
            theta = np.pi * i / n_lat
            for j in range(n_lon):
                phi = 2 * np.pi * j / n_lon
                verts.append([np.sin(theta) * np.cos(phi),
                              np.sin(theta) * np.sin(phi), np.cos(theta)])
        for i in range(n_lat - 2):
            for j in range(n_lon):
                a = i * n_lon + j
                b = i * n_lon + (j + 1) % n_lon
                c = a + n_lon
                d = b + n_lon
                tris += [[a, b, d], [a, d, c]]
        verts = np.asarray(verts)
        normals = vertex_normals(verts, np.asarray(tris)).numpy()
        cosines = np.abs((normals * verts).sum(axis=1))
        interior = np.zeros(len(verts), dtype=bool)
        interior[n_lon:-n_lon] = True  # boundary rings have one-sided fans
        assert (cosines[interior] > np.cos(np.radians(5.0))).all()

    def test_unit_length_and_isolated_fallback(self):
        pos = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], dtype=float)
        tris = np.array([[0, 1, 2]])
        n = vertex_normals(pos, tris).numpy()
        np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(n[3], [0, 0, 1], atol=1e-12)


class TestProject:
    def test_on_axis_point(self):
        cam = Camera(224, 224, focal=100.0)
        out = project(np.array([[0.0, 0.0, 10.0]]), cam).numpy()
        np.testing.assert_allclose(out, [[112.0, 112.0, 10.0]], atol=1e-12)

    def test_similar_triangles(self):
        cam = Camera(224, 224, focal=100.0)
        out = project(np.array([[1.0, 0.0, 10.0]]), cam).numpy()
        np.testing.assert_allclose(out, [[122.0, 112.0, 10.0]], atol=1e-12)

    def test_doubling_focal_doubles_offsets(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(30, 3))
        pts[:, 2] = rng.uniform(5.0, 20.0, 30)
        lo = project(pts, Camera(224, 224, focal=100.0)).numpy()
        hi = project(pts, Camera(224, 224, focal=200.0)).numpy()
        np.testing.assert_allclose(hi[:, 0] - 112.0, 2.0 * (lo[:, 0] - 112.0),
                                   rtol=1e-12)
        np.testing.assert_allclose(hi[:, 1] - 112.0, 2.0 * (lo[:, 1] - 112.0),
                                   rtol=1e-12)

    def test_rejects_non_positive_depth(self):
        with pytest.raises(FittingDomainError):
            project(np.array([[0.0, 0.0, -1.0]]), Camera(64, 64))

    def test_default_focal_scales_with_width(self):
        assert Camera(224, 224).focal == pytest.approx(1015.0)
        assert Camera(448, 448).focal == pytest.approx(2030.0)


class TestLandmarkPositions:
    def test_gather_order_and_oracle(self, toy_model):
        rng = np.random.default_rng(12)
        projected = rng.normal(size=(toy_model.vertex_count, 3))
        got = landmark_positions(toy_model, projected).numpy()
        want = projected[toy_model.landmark_indices, :2]
        np.testing.assert_array_equal(got, want)
        assert got.shape == (toy_model.landmark_count, 2)

    def test_permutation_permutes_output(self, toy_model):
        import dataclasses
        rng = np.random.default_rng(13)
        projected = rng.normal(size=(toy_model.vertex_count, 3))
        perm = np.array([3, 0, 4, 1, 2])
        shuffled = dataclasses.replace(
            toy_model, landmark_indices=toy_model.landmark_indices[perm])
        a = landmark_positions(toy_model, projected).numpy()
        b = landmark_positions(shuffled, projected).numpy()
        np.testing.assert_array_equal(a[perm], b)


class TestFaceParams:
    def test_vector_roundtrip(self, toy_model):
        rng = np.random.default_rng(14)
        vec = rng.normal(size=toy_model.param_count)
        params = FaceParams.from_vector(vec, 8, 6, 8)
        np.testing.assert_array_equal(params.to_vector(), vec)

    def test_basel_configuration_is_257(self):
        params = FaceParams(np.zeros(80), np.zeros(64), np.zeros(80))
        assert params.to_vector().size == 257

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            FaceParams(np.array([np.nan]), np.zeros(1), np.zeros(1))
