import numpy as np
import pytest

from facecap import (
    FaceModel,
    FaceParams,
    evaluate_albedo,
    evaluate_mesh,
    load_model,
    make_toy_model,
    mesh_jacobians,
    save_model,
    surface_landmarks,
)
from facecap.errors import FileFormatError, NumericError, ParameterError
from facecap.face_model import rest_vertices, rodrigues, rodrigues_jacobian, vertex_normals

from helpers import central_diff_jacobian, quat_rotate, rel_err


@pytest.fixture(scope="module")
def model():
    return make_toy_model(seed=7)


def two_joint_split_model():
    """Tiny model whose vertices are bound 100% to either head or jaw."""
    rng = np.random.default_rng(3)
    verts = rng.normal(size=(8, 3))
    faces = np.array([[0, 1, 2], [3, 4, 5], [5, 6, 7], [1, 3, 5]], dtype=np.int64)
    weights = np.zeros((8, 2))
    weights[:4, 0] = 1.0
    weights[4:, 1] = 1.0
    return FaceModel(
        template_vertices=verts,
        faces=faces,
        identity_basis=np.zeros((8, 3, 2)),
        expression_basis=np.zeros((8, 3, 2)),
        joint_positions=np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 0.1]]),
        skinning_weights=weights,
        albedo_mean=np.full((8, 3), 0.5),
        albedo_basis=np.zeros((8, 3, 1)),
        landmark_faces=np.array([0], dtype=np.int64),
        landmark_barys=np.array([[1.0, 0.0, 0.0]]),
        jaw_joint=1,
    )


class TestEvaluateMesh:
    def test_identity_case_returns_template_exactly(self, model):
        mesh = evaluate_mesh(model, FaceParams.zeros(model))
        np.testing.assert_array_equal(mesh.vertices, model.template_vertices)

    def test_unit_expression_adds_basis_column(self, model):
        params = FaceParams.zeros(model)
        params.psi[1] = 1.0
        mesh = evaluate_mesh(model, params)
        expected = model.template_vertices + model.expression_basis[:, :, 1]
        np.testing.assert_allclose(mesh.vertices, expected, atol=1e-14)

    def test_jaw_rotation_matches_quaternion_oracle(self):
        model = two_joint_split_model()
        params = FaceParams.zeros(model)
        params.theta[3 + 3 * model.jaw_joint] = 0.3  # about x
        mesh = evaluate_mesh(model, params)
        pivot = model.joint_positions[1]
        expected = quat_rotate([0.3, 0.0, 0.0], model.template_vertices[4:] - pivot) + pivot
        np.testing.assert_allclose(mesh.vertices[4:], expected, atol=1e-12)
        np.testing.assert_allclose(mesh.vertices[:4], model.template_vertices[:4], atol=1e-12)

    def test_blendshape_linearity(self, model):
        rng = np.random.default_rng(11)
        t = model.template_vertices
        for _ in range(5):
            b1, b2 = rng.normal(size=(2, model.n_beta))
            p = FaceParams.zeros(model)
            p.beta = b1 + b2
            combined = evaluate_mesh(model, p).vertices - t
            p.beta = b1
            d1 = evaluate_mesh(model, p).vertices - t
            p.beta = b2
            d2 = evaluate_mesh(model, p).vertices - t
            np.testing.assert_allclose(combined, d1 + d2, atol=1e-10)

    def test_global_rotation_preserves_pairwise_distances(self, model):
        rng = np.random.default_rng(5)
        params = FaceParams.zeros(model)
        params.theta[:3] = rng.normal(size=3)
        mesh = evaluate_mesh(model, params)
        idx = rng.integers(0, model.n_vertices, size=(60, 2))
        before = np.linalg.norm(
            model.template_vertices[idx[:, 0]] - model.template_vertices[idx[:, 1]], axis=1
        )
        after = np.linalg.norm(mesh.vertices[idx[:, 0]] - mesh.vertices[idx[:, 1]], axis=1)
        np.testing.assert_allclose(after, before, atol=1e-9)

    def test_dimension_mismatch_raises(self, model):
        params = FaceParams.zeros(model)
        params.beta = np.zeros(model.n_beta + 1)
        with pytest.raises(ParameterError):
            evaluate_mesh(model, params)

    def test_non_finite_raises(self, model):
        params = FaceParams.zeros(model)
        params.psi[0] = np.nan
        with pytest.raises(NumericError):
            evaluate_mesh(model, params)

    def test_normals_unit_length(self, model):
        rng = np.random.default_rng(2)
        params = FaceParams.zeros(model)
        params.psi = rng.normal(size=model.n_psi)
        mesh = evaluate_mesh(model, params)
        np.testing.assert_allclose(
            np.linalg.norm(mesh.vertex_normals, axis=1), 1.0, atol=1e-6
        )

    def test_degenerate_vertex_gets_z_normal(self):
        # vertex 3 sits in a zero-area triangle only
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 2, 2], [3, 3, 3]], float)
        faces = np.array([[0, 1, 2], [3, 4, 4]], dtype=np.int64)
        normals = vertex_normals(verts, faces)
        np.testing.assert_array_equal(normals[3], [0.0, 0.0, 1.0])
        np.testing.assert_array_equal(normals[4], [0.0, 0.0, 1.0])


class TestRotations:
    def test_rodrigues_matches_quaternion_oracle(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(10, 3))
        for _ in range(20):
            a = rng.normal(size=3) * rng.uniform(0.0, 3.0)
            R = rodrigues(a)
            np.testing.assert_allclose(pts @ R.T, quat_rotate(a, pts), atol=1e-12)

    def test_rodrigues_jacobian_matches_fd(self):
        rng = np.random.default_rng(8)
        for scale in (1e-9, 1e-5, 0.1, 2.0):
            a = rng.normal(size=3) * scale
            jac = rodrigues_jacobian(a)
            fd = central_diff_jacobian(lambda x: rodrigues(x).ravel(), a, step=1e-6)
            assert rel_err(jac.reshape(9, 3), fd) < 1e-7


class TestMeshJacobians:
    @pytest.mark.parametrize("which", ["beta", "psi", "theta"])
    def test_jacobian_matches_central_differences(self, model, which):
        rng = np.random.default_rng(17)
        params = FaceParams.zeros(model)
        params.beta = 0.3 * rng.normal(size=model.n_beta)
        params.psi = 0.3 * rng.normal(size=model.n_psi)
        params.theta = 0.2 * rng.normal(size=model.n_theta)
        jac = mesh_jacobians(model, params)[which]

        def f(x):
            p = params.copy()
            setattr(p, which, x)
            return evaluate_mesh(model, p).vertices.ravel()

        fd = central_diff_jacobian(f, getattr(params, which), step=1e-5)
        assert rel_err(jac.reshape(fd.shape), fd) < 1e-4


class TestAlbedo:
    def test_zero_alpha_returns_mean(self, model):
        out = evaluate_albedo(model, np.zeros(model.n_alpha))
        np.testing.assert_array_equal(out.rgb, model.albedo_mean)
        assert out.clamp_count == 0

    def test_unit_alpha_adds_first_basis_column(self, model):
        alpha = np.zeros(model.n_alpha)
        alpha[0] = 1.0
        out = evaluate_albedo(model, alpha)
        np.testing.assert_allclose(
            out.unclamped, model.albedo_mean + model.albedo_basis[:, :, 0], atol=1e-14
        )

    def test_out_of_range_values_are_clamped_and_counted(self, model):
        alpha = np.full(model.n_alpha, 30.0)
        out = evaluate_albedo(model, alpha)
        unclamped = model.albedo_mean + model.albedo_basis @ alpha
        assert out.clamp_count == int(np.count_nonzero((unclamped < 0) | (unclamped > 1)))
        assert out.clamp_count > 0
        assert out.rgb.min() >= 0.0 and out.rgb.max() <= 1.0

    def test_dimension_mismatch(self, model):
        with pytest.raises(ParameterError):
            evaluate_albedo(model, np.zeros(model.n_alpha + 2))


class TestSurfaceLandmarks:
    def test_corner_barycentric_returns_vertex(self, model):
        mesh = evaluate_mesh(model, FaceParams.zeros(model))
        custom = FaceModel(
            **{
                **{f: getattr(model, f) for f in (
                    "template_vertices", "faces", "identity_basis", "expression_basis",
                    "joint_positions", "skinning_weights", "albedo_mean", "albedo_basis",
                    "jaw_joint", "uv_coords", "skin_triangles",
                )},
                "landmark_faces": np.array([5], dtype=np.int64),
                "landmark_barys": np.array([[1.0, 0.0, 0.0]]),
            }
        )
        lm = surface_landmarks(custom, mesh)
        np.testing.assert_array_equal(lm[0], mesh.vertices[model.faces[5, 0]])

    def test_centroid_barycentric(self, model):
        mesh = evaluate_mesh(model, FaceParams.zeros(model))
        custom_barys = np.full((model.n_landmarks, 3), 1.0 / 3.0)
        custom = FaceModel(
            **{
                **{f: getattr(model, f) for f in (
                    "template_vertices", "faces", "identity_basis", "expression_basis",
                    "joint_positions", "skinning_weights", "albedo_mean", "albedo_basis",
                    "jaw_joint", "uv_coords", "skin_triangles", "landmark_faces",
                    "eye_pairs", "mouth_pairs", "lip_corner_pairs",
                )},
                "landmark_barys": custom_barys,
            }
        )
        lm = surface_landmarks(custom, mesh)
        expected = mesh.vertices[model.faces[model.landmark_faces]].mean(axis=1)
        np.testing.assert_allclose(lm, expected, atol=1e-14)

    def test_matches_bruteforce_recomputation(self, model):
        rng = np.random.default_rng(23)
        params = FaceParams.zeros(model)
        params.psi = rng.normal(size=model.n_psi)
        mesh = evaluate_mesh(model, params)
        lm = surface_landmarks(model, mesh)
        for i in range(model.n_landmarks):
            tri = model.faces[model.landmark_faces[i]]
            b = model.landmark_barys[i]
            expected = (
                b[0] * mesh.vertices[tri[0]]
                + b[1] * mesh.vertices[tri[1]]
                + b[2] * mesh.vertices[tri[2]]
            )
            np.testing.assert_allclose(lm[i], expected, atol=1e-14)


class TestToyModel:
    def test_same_seed_bit_identical(self):
        a = make_toy_model(seed=42)
        b = make_toy_model(seed=42)
        for name in ("template_vertices", "faces", "identity_basis", "expression_basis",
                     "skinning_weights", "albedo_mean", "albedo_basis",
                     "landmark_faces", "landmark_barys"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_invariants_hold(self):
        model = make_toy_model(seed=1)
        assert model.faces.max() < model.n_vertices
        assert model.landmark_faces.max() < model.n_faces
        np.testing.assert_allclose(model.skinning_weights.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(model.landmark_barys.sum(axis=1), 1.0, atol=1e-9)

    def test_pair_counts_match_request(self):
        model = make_toy_model(seed=3, n_eye_pairs=4, n_mouth_pairs=5, n_lip_corner_pairs=2)
        assert model.eye_pairs.shape == (4, 2)
        assert model.mouth_pairs.shape == (5, 2)
        assert model.lip_corner_pairs.shape == (2, 2)

    def test_infeasible_sizes(self):
        with pytest.raises(ParameterError):
            make_toy_model(seed=1, n_v=3)
        with pytest.raises(ParameterError):
            make_toy_model(seed=1, n_v=512, n_f=931)


class TestModelFile:
    def test_round_trip(self, model, tmp_path):
        path = tmp_path / "toy.fcm"
        save_model(model, path)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.template_vertices, model.template_vertices)
        np.testing.assert_array_equal(loaded.faces, model.faces)
        np.testing.assert_array_equal(loaded.expression_basis, model.expression_basis)
        np.testing.assert_array_equal(loaded.landmark_barys, model.landmark_barys)
        np.testing.assert_array_equal(loaded.eye_pairs, model.eye_pairs)
        assert loaded.jaw_joint == model.jaw_joint
        np.testing.assert_array_equal(loaded.uv_coords, model.uv_coords)
        assert loaded.skin_triangles is None

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.fcm"
        path.write_bytes(b"NOPE" + b"\x00" * 200)
        with pytest.raises(FileFormatError):
            load_model(path)

    def test_truncated_rejected(self, model, tmp_path):
        path = tmp_path / "trunc.fcm"
        save_model(model, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(FileFormatError):
            load_model(path)


def test_rest_vertices_affine_in_params(model):
    rng = np.random.default_rng(31)
    beta = rng.normal(size=model.n_beta)
    psi = rng.normal(size=model.n_psi)
    expected = (
        model.template_vertices
        + model.identity_basis @ beta
        + model.expression_basis @ psi
    )
    np.testing.assert_allclose(rest_vertices(model, beta, psi), expected, atol=1e-12)
