"""Statistical face model: linear identity/expression blendshapes applied in
rest pose, followed by linear blend skinning over a small set of joints plus
a global rotation.

Conventions
-----------
* Pose vector theta has length 3k+3: the first 3 entries are the global
  axis-angle rotation (about the origin), followed by 3 entries per joint,
  each an axis-angle rotation about that joint's pivot.
* Joints are independent (flat hierarchy): every joint rotates rigidly about
  its own pivot and the results are blended by the skinning weights; the
  global rotation is applied last.
* Pose-corrective blendshapes are not modeled.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import FileFormatError, NumericError, ParameterError

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"FCM1"

# Below this squared angle the Rodrigues coefficients switch to their Taylor
# series; keeps rotation and its derivative finite and smooth at zero.
_SMALL_ANGLE_SQ = 1e-8


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FaceModel:
    """Immutable model asset: template mesh, linear bases, rig and landmarks.

    Shapes (n_v vertices, n_f faces, k joints, L landmarks):
        template_vertices  (n_v, 3)
        faces              (n_f, 3) int
        identity_basis     (n_v, 3, n_beta)
        expression_basis   (n_v, 3, n_psi)
        joint_positions    (k, 3)
        skinning_weights   (n_v, k), rows sum to 1
        albedo_mean        (n_v, 3) in [0, 1]
        albedo_basis       (n_v, 3, n_alpha)
        landmark_faces     (L,) int, triangle index per landmark
        landmark_barys     (L, 3), nonnegative, rows sum to 1
        uv_coords          optional (n_v, 2) in [0, 1]
        skin_triangles     optional (m,) int; triangles counted as face skin
                           for the render mask (None means all)
        eye_pairs / mouth_pairs / lip_corner_pairs: (p, 2) int landmark index
                           pairs used by the closure losses
    """

    template_vertices: np.ndarray
    faces: np.ndarray
    identity_basis: np.ndarray
    expression_basis: np.ndarray
    joint_positions: np.ndarray
    skinning_weights: np.ndarray
    albedo_mean: np.ndarray
    albedo_basis: np.ndarray
    landmark_faces: np.ndarray
    landmark_barys: np.ndarray
    jaw_joint: int = 1
    uv_coords: Optional[np.ndarray] = None
    skin_triangles: Optional[np.ndarray] = None
    eye_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    mouth_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    lip_corner_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        validate_model(self)

    @property
    def n_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joint_positions.shape[0]

    @property
    def n_beta(self) -> int:
        return self.identity_basis.shape[2]

    @property
    def n_psi(self) -> int:
        return self.expression_basis.shape[2]

    @property
    def n_alpha(self) -> int:
        return self.albedo_basis.shape[2]

    @property
    def n_landmarks(self) -> int:
        return self.landmark_faces.shape[0]

    @property
    def n_theta(self) -> int:
        return 3 * self.n_joints + 3


@dataclass
class FaceParams:
    """Full regressed parameter tuple (identity, pose, expression, albedo,
    lighting, camera).

    theta layout: [global rotation (3), joint 0 (3), ..., joint k-1 (3)].
    lighting: 27 spherical-harmonics coefficients (3 channels x 9 bands).
    camera: (scale, tx, ty) with scale > 0.
    """

    beta: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    alpha: np.ndarray
    lighting: np.ndarray
    camera: np.ndarray

    @classmethod
    def zeros(cls, model: FaceModel, scale: float = 1.0) -> "FaceParams":
        return cls(
            beta=np.zeros(model.n_beta),
            theta=np.zeros(model.n_theta),
            psi=np.zeros(model.n_psi),
            alpha=np.zeros(model.n_alpha),
            lighting=np.zeros(27),
            camera=np.array([scale, 0.0, 0.0]),
        )

    def copy(self) -> "FaceParams":
        return FaceParams(
            beta=self.beta.copy(),
            theta=self.theta.copy(),
            psi=self.psi.copy(),
            alpha=self.alpha.copy(),
            lighting=self.lighting.copy(),
            camera=self.camera.copy(),
        )

    def jaw_pose(self, model: FaceModel) -> np.ndarray:
        """Axis-angle sub-vector of theta for the model's jaw joint."""
        j = model.jaw_joint
        return self.theta[3 + 3 * j : 6 + 3 * j]

    def validate(self, model: FaceModel) -> None:
        shapes = {
            "beta": (self.beta, (model.n_beta,)),
            "theta": (self.theta, (model.n_theta,)),
            "psi": (self.psi, (model.n_psi,)),
            "alpha": (self.alpha, (model.n_alpha,)),
            "lighting": (self.lighting, (27,)),
            "camera": (self.camera, (3,)),
        }
        for name, (arr, want) in shapes.items():
            arr = np.asarray(arr)
            if arr.shape != want:
                raise ParameterError(f"{name} has shape {arr.shape}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"{name} contains non-finite values")
        if self.camera[0] <= 0:
            raise ParameterError(f"camera scale must be > 0, got {self.camera[0]}")


@dataclass
class Mesh:
    """Posed mesh with unit area-weighted vertex normals."""

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray


def validate_model(model: FaceModel) -> None:
    n_v = model.template_vertices.shape[0]
    n_f = model.faces.shape[0]
    if model.template_vertices.ndim != 2 or model.template_vertices.shape[1] != 3:
        raise ParameterError("template_vertices must be (n_v, 3)")
    if model.faces.ndim != 2 or model.faces.shape[1] != 3:
        raise ParameterError("faces must be (n_f, 3)")
    if model.faces.size and (model.faces.min() < 0 or model.faces.max() >= n_v):
        raise ParameterError("face index out of range")
    if model.landmark_faces.size and (
        model.landmark_faces.min() < 0 or model.landmark_faces.max() >= n_f
    ):
        raise ParameterError("landmark triangle index out of range")
    for name in ("identity_basis", "expression_basis", "albedo_basis"):
        arr = getattr(model, name)
        if arr.shape[:2] != (n_v, 3):
            raise ParameterError(f"{name} must be (n_v, 3, dim)")
    k = model.joint_positions.shape[0]
    if model.skinning_weights.shape != (n_v, k):
        raise ParameterError("skinning_weights must be (n_v, k)")
    if np.any(model.skinning_weights < 0):
        raise ParameterError("skinning weights must be nonnegative")
    if np.any(np.abs(model.skinning_weights.sum(axis=1) - 1.0) > 1e-9):
        raise ParameterError("skinning weight rows must sum to 1")
    if not 0 <= model.jaw_joint < k:
        raise ParameterError("jaw joint index out of range")
    if model.landmark_barys.shape != (model.landmark_faces.shape[0], 3):
        raise ParameterError("landmark_barys must be (L, 3)")
    if model.landmark_barys.size:
        if np.any(model.landmark_barys < 0):
            raise ParameterError("landmark barycentrics must be nonnegative")
        if np.any(np.abs(model.landmark_barys.sum(axis=1) - 1.0) > 1e-9):
            raise ParameterError("landmark barycentric rows must sum to 1")
    if np.any(model.albedo_mean < 0) or np.any(model.albedo_mean > 1):
        raise ParameterError("albedo_mean must lie in [0, 1]")
    L = model.landmark_faces.shape[0]
    for name in ("eye_pairs", "mouth_pairs", "lip_corner_pairs"):
        pairs = getattr(model, name)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= L):
            raise ParameterError(f"{name} index out of range")
    if model.skin_triangles is not None and model.skin_triangles.size:
        if model.skin_triangles.min() < 0 or model.skin_triangles.max() >= n_f:
            raise ParameterError("skin triangle index out of range")


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------


def _skew(a):
    return np.array(
        [
            [0.0, -a[2], a[1]],
            [a[2], 0.0, -a[0]],
            [-a[1], a[0], 0.0],
        ]
    )


def rodrigues(a: np.ndarray) -> np.ndarray:
    """Axis-angle (3,) -> rotation matrix (3, 3).

    R = I + f1(t) K + f2(t) K^2 with t = |a|, K = [a]x,
    f1 = sin(t)/t, f2 = (1 - cos(t))/t^2; Taylor series below the
    small-angle threshold.
    """
    a = np.asarray(a, dtype=float)
    t2 = float(a @ a)
    K = _skew(a)
    if t2 < _SMALL_ANGLE_SQ:
        f1 = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0)
        f2 = 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0)
    else:
        t = np.sqrt(t2)
        f1 = np.sin(t) / t
        f2 = (1.0 - np.cos(t)) / t2
    return np.eye(3) + f1 * K + f2 * (K @ K)


_EYE_SKEWS = [_skew(e) for e in np.eye(3)]


def rodrigues_jacobian(a: np.ndarray) -> np.ndarray:
    """d rodrigues(a) / d a, shape (3, 3, 3): [:, :, m] = dR/da_m.

    Closed-form derivative of the two Rodrigues coefficients; the same
    Taylor switch as rodrigues() keeps it exact through a = 0.
    """
    a = np.asarray(a, dtype=float)
    t2 = float(a @ a)
    K = _skew(a)
    K2 = K @ K
    if t2 < _SMALL_ANGLE_SQ:
        f1 = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0)
        f2 = 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0)
        # g1 = d f1 / d(t^2) * 2 = (t cos t - sin t)/t^3, g2 analogous
        g1 = -1.0 / 3.0 + t2 / 30.0
        g2 = -1.0 / 12.0 + t2 / 180.0
    else:
        t = np.sqrt(t2)
        st, ct = np.sin(t), np.cos(t)
        f1 = st / t
        f2 = (1.0 - ct) / t2
        g1 = (t * ct - st) / (t2 * t)
        g2 = (t * st - 2.0 * (1.0 - ct)) / (t2 * t2)
    jac = np.empty((3, 3, 3))
    for m in range(3):
        Em = _EYE_SKEWS[m]
        jac[:, :, m] = (
            a[m] * g1 * K + f1 * Em + a[m] * g2 * K2 + f2 * (Em @ K + K @ Em)
        )
    return jac


# ---------------------------------------------------------------------------
# Mesh evaluation
# ---------------------------------------------------------------------------


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")


def rest_vertices(model: FaceModel, beta: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Template plus linear identity and expression offsets, before skinning."""
    return (
        model.template_vertices
        + model.identity_basis @ np.asarray(beta, dtype=float)
        + model.expression_basis @ np.asarray(psi, dtype=float)
    )


def _joint_rotations(model: FaceModel, theta: np.ndarray):
    r_global = rodrigues(theta[:3])
    r_joints = [rodrigues(theta[3 + 3 * j : 6 + 3 * j]) for j in range(model.n_joints)]
    return r_global, r_joints


_IDENTITY3 = np.eye(3)


def _skin(model: FaceModel, rest: np.ndarray, r_joints) -> np.ndarray:
    # zero pose must reproduce the rest geometry bit-exactly, so identity
    # joints skip the pivot round trip and the all-identity case skips the
    # weighted blend
    if all(np.array_equal(r, _IDENTITY3) for r in r_joints):
        return rest.copy()
    skinned = np.zeros_like(rest)
    for j, r in enumerate(r_joints):
        p = model.joint_positions[j]
        if np.array_equal(r, _IDENTITY3):
            posed = rest
        else:
            posed = (rest - p) @ r.T + p
        skinned += model.skinning_weights[:, j : j + 1] * posed
    return skinned


def evaluate_mesh(model: FaceModel, params: FaceParams) -> Mesh:
    """Pose the model: blendshapes in rest pose, then blend skinning, then
    the global rotation. Normals are recomputed area-weighted."""
    params.validate(model)
    rest = rest_vertices(model, params.beta, params.psi)
    _check_finite("rest vertices", rest)
    r_global, r_joints = _joint_rotations(model, params.theta)
    vertices = _skin(model, rest, r_joints)
    if not np.array_equal(r_global, _IDENTITY3):
        vertices = vertices @ r_global.T
    normals = vertex_normals(vertices, model.faces)
    return Mesh(vertices=vertices, faces=model.faces, vertex_normals=normals)


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted unit vertex normals.

    Zero-area triangles contribute nothing; a vertex whose accumulated
    normal is zero falls back to (0, 0, 1) with a warning.
    """
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    fn = np.cross(e1, e2)  # magnitude = 2 * triangle area
    raw = np.zeros_like(vertices)
    for c in range(3):
        np.add.at(raw, faces[:, c], fn)
    norms = np.linalg.norm(raw, axis=1)
    degenerate = norms < 1e-300
    if np.any(degenerate):
        logger.warning(
            "%d vertices have zero accumulated normal; using (0, 0, 1)",
            int(degenerate.sum()),
        )
        raw[degenerate] = (0.0, 0.0, 1.0)
        norms[degenerate] = 1.0
    return raw / norms[:, None]


def vertex_normals_vjp(
    vertices: np.ndarray, faces: np.ndarray, grad_normals: np.ndarray
) -> np.ndarray:
    """Backprop d(loss)/d(vertex_normals) to d(loss)/d(vertices).

    Mirrors vertex_normals(): cross-product accumulation followed by
    normalization. Vertices that hit the degenerate fallback get zero
    gradient there.
    """
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    fn = np.cross(e1, e2)
    raw = np.zeros_like(vertices)
    for c in range(3):
        np.add.at(raw, faces[:, c], fn)
    norms = np.linalg.norm(raw, axis=1)
    degenerate = norms < 1e-300
    safe_norms = np.where(degenerate, 1.0, norms)
    unit = np.where(degenerate[:, None], np.array([0.0, 0.0, 1.0]), raw / safe_norms[:, None])

    # normalization backward: g_raw = (g - n (n.g)) / |raw|
    dot = np.sum(unit * grad_normals, axis=1, keepdims=True)
    g_raw = (grad_normals - unit * dot) / safe_norms[:, None]
    g_raw[degenerate] = 0.0

    # each face's cross product was added to its three corner accumulators
    g_face = g_raw[faces[:, 0]] + g_raw[faces[:, 1]] + g_raw[faces[:, 2]]
    # c = e1 x e2: dL/de1 = e2 x g, dL/de2 = g x e1
    g_e1 = np.cross(e2, g_face)
    g_e2 = np.cross(g_face, e1)
    grad_vertices = np.zeros_like(vertices)
    np.add.at(grad_vertices, faces[:, 1], g_e1)
    np.add.at(grad_vertices, faces[:, 2], g_e2)
    np.add.at(grad_vertices, faces[:, 0], -(g_e1 + g_e2))
    return grad_vertices


def mesh_jacobians(model: FaceModel, params: FaceParams) -> dict:
    """Analytic Jacobians of posed vertices w.r.t. beta, psi and theta.

    Returns {"beta": (n_v, 3, n_beta), "psi": (n_v, 3, n_psi),
    "theta": (n_v, 3, 3k+3)}.
    """
    params.validate(model)
    rest = rest_vertices(model, params.beta, params.psi)
    r_global, r_joints = _joint_rotations(model, params.theta)
    W = model.skinning_weights

    # d(vertex)/d(rest vertex) = R_g @ sum_j w_j R_j, one 3x3 per vertex
    r_stack = np.stack(r_joints)  # (k, 3, 3)
    S = np.einsum("vk,kab->vab", W, r_stack)
    S = np.einsum("ab,vbc->vac", r_global, S)

    j_beta = np.einsum("vab,vbm->vam", S, model.identity_basis)
    j_psi = np.einsum("vab,vbm->vam", S, model.expression_basis)

    j_theta = np.empty((model.n_vertices, 3, model.n_theta))
    skinned = _skin(model, rest, r_joints)
    dRg = rodrigues_jacobian(params.theta[:3])
    for m in range(3):
        j_theta[:, :, m] = skinned @ dRg[:, :, m].T
    for j in range(model.n_joints):
        dRj = rodrigues_jacobian(params.theta[3 + 3 * j : 6 + 3 * j])
        local = rest - model.joint_positions[j]
        w = W[:, j : j + 1]
        for m in range(3):
            col = w * (local @ dRj[:, :, m].T) @ r_global.T
            j_theta[:, :, 3 + 3 * j + m] = col
    return {"beta": j_beta, "psi": j_psi, "theta": j_theta}


# ---------------------------------------------------------------------------
# Albedo and landmarks
# ---------------------------------------------------------------------------


@dataclass
class AlbedoResult:
    rgb: np.ndarray  # (n_v, 3), clamped to [0, 1]
    unclamped: np.ndarray
    clamp_count: int


def evaluate_albedo(model: FaceModel, alpha: np.ndarray) -> AlbedoResult:
    """Per-vertex linear albedo: mean + basis @ alpha, clamped to [0, 1]."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (model.n_alpha,):
        raise ParameterError(f"alpha has shape {alpha.shape}, expected ({model.n_alpha},)")
    _check_finite("alpha", alpha)
    unclamped = model.albedo_mean + model.albedo_basis @ alpha
    rgb = np.clip(unclamped, 0.0, 1.0)
    clamp_count = int(np.count_nonzero(rgb != unclamped))
    if clamp_count:
        logger.debug("albedo evaluation clamped %d channel values", clamp_count)
    return AlbedoResult(rgb=rgb, unclamped=unclamped, clamp_count=clamp_count)


def surface_landmarks(model: FaceModel, mesh: Mesh) -> np.ndarray:
    """3D landmark positions: barycentric combinations of their triangles."""
    tri = mesh.vertices[model.faces[model.landmark_faces]]  # (L, 3 verts, 3)
    return np.einsum("lc,lcd->ld", model.landmark_barys, tri)


def landmark_gradient_to_vertices(
    model: FaceModel, grad_landmarks: np.ndarray
) -> np.ndarray:
    """Scatter d(loss)/d(landmarks) (L, 3) back to vertices (n_v, 3)."""
    grad = np.zeros((model.n_vertices, 3))
    vidx = model.faces[model.landmark_faces]  # (L, 3)
    contrib = model.landmark_barys[:, :, None] * grad_landmarks[:, None, :]
    for c in range(3):
        np.add.at(grad, vidx[:, c], contrib[:, c])
    return grad


# ---------------------------------------------------------------------------
# Toy model generator
# ---------------------------------------------------------------------------


def _smooth_field(rng, uu, vv, n_terms=6, amplitude=1.0):
    """Seeded smooth random scalar field over the (u, v) parameter grid."""
    out = np.zeros_like(uu)
    for _ in range(n_terms):
        fu, fv = rng.uniform(0.5, 2.5, size=2)
        pu, pv = rng.uniform(0, 2 * np.pi, size=2)
        out += rng.normal() * np.cos(fu * np.pi * uu + pu) * np.cos(fv * np.pi * vv + pv)
    return amplitude * out / np.sqrt(n_terms)


def _grid_dims(n_v: int, n_f: Optional[int]):
    """Pick (rows, cols) with rows*cols == n_v, preferring near-square grids;
    if n_f is given it must equal 2*(rows-1)*(cols-1) for some factorization."""
    candidates = []
    for rows in range(2, int(np.sqrt(n_v)) + 1):
        if n_v % rows == 0:
            cols = n_v // rows
            candidates.append((rows, cols))
    if not candidates:
        raise ParameterError(f"n_v={n_v} has no grid factorization with rows >= 2")
    if n_f is None:
        return candidates[-1]  # most balanced
    for rows, cols in candidates:
        if 2 * (rows - 1) * (cols - 1) == n_f:
            return rows, cols
    feasible = sorted(2 * (r - 1) * (c - 1) for r, c in candidates)
    raise ParameterError(
        f"n_f={n_f} infeasible for n_v={n_v}; feasible face counts: {feasible}"
    )


def make_toy_model(
    seed: int,
    n_v: int = 512,
    n_f: Optional[int] = None,
    n_beta: int = 10,
    n_psi: int = 10,
    n_alpha: int = 5,
    n_eye_pairs: int = 2,
    n_mouth_pairs: int = 3,
    n_lip_corner_pairs: int = 1,
) -> FaceModel:
    """Deterministic desk-scale stand-in for a licensed face model asset.

    Builds a dome-shaped face patch on a rows x cols grid (rows*cols = n_v),
    facing the -z camera direction, with two joints (head, jaw), smooth
    seeded blendshape bases, a per-vertex albedo model, landmarks for
    eyelids / lips / lip corners, and the keypoint pair sets the closure
    losses consume.
    """
    if n_v < 4:
        raise ParameterError("n_v must be >= 4")
    rows, cols = _grid_dims(n_v, n_f)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0xFACE]))

    # parameter grid: u across the face (left-right), v down the face
    u = np.linspace(-1.0, 1.0, cols)
    v = np.linspace(-1.0, 1.0, rows)
    uu, vv = np.meshgrid(u, v)  # (rows, cols)

    r2 = uu**2 + vv**2
    zz = -0.55 * (1.0 - 0.45 * r2) + 0.03 * _smooth_field(rng, uu, vv, amplitude=1.0)
    template = np.stack([uu.ravel(), vv.ravel(), zz.ravel()], axis=1)

    # winding chosen so face normals point toward -z, i.e. at the camera
    faces = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            a = r * cols + c
            b = a + 1
            d = a + cols
            e = d + 1
            faces.append((a, d, b))
            faces.append((b, d, e))
    faces = np.asarray(faces, dtype=np.int64)

    def basis(dim, amplitude):
        arr = np.empty((n_v, 3, dim))
        for m in range(dim):
            for axis in range(3):
                arr[:, axis, m] = _smooth_field(rng, uu, vv, amplitude=amplitude).ravel()
        return arr

    identity_basis = basis(n_beta, 0.06)
    expression_basis = basis(n_psi, 0.06)

    # two joints: head pivot near the crown, jaw pivot on the lower face
    joint_positions = np.array([[0.0, -0.6, -0.4], [0.0, 0.45, -0.35]])
    jaw_weight = 1.0 / (1.0 + np.exp(-(vv.ravel() - 0.5) / 0.08))
    skinning = np.stack([1.0 - jaw_weight, jaw_weight], axis=1)

    albedo_mean = np.clip(
        np.stack(
            [
                0.75 + 0.06 * _smooth_field(rng, uu, vv).ravel(),
                0.55 + 0.06 * _smooth_field(rng, uu, vv).ravel(),
                0.45 + 0.06 * _smooth_field(rng, uu, vv).ravel(),
            ],
            axis=1,
        ),
        0.05,
        0.95,
    )
    albedo_basis = basis(n_alpha, 0.05)

    # landmarks: vertical pairs for eyes and mouth, horizontal for lip corners
    def embed_point(pu, pv):
        """Landmark embedding at parameter point (pu, pv): containing grid
        cell, upper-left triangle, interior barycentric coordinates."""
        c = min(int((pu + 1.0) / 2.0 * (cols - 1)), cols - 2)
        r = min(int((pv + 1.0) / 2.0 * (rows - 1)), rows - 2)
        tri_index = 2 * (r * (cols - 1) + c)
        bary = rng.uniform(0.1, 0.8, size=3)
        bary /= bary.sum()
        return tri_index, bary

    lm_faces, lm_barys = [], []

    def add_landmark(pu, pv):
        t, b = embed_point(pu, pv)
        lm_faces.append(t)
        lm_barys.append(b)
        return len(lm_faces) - 1

    eye_pairs = []
    for i in range(n_eye_pairs):
        x = -0.45 + 0.9 * i / max(n_eye_pairs - 1, 1)
        upper = add_landmark(x, -0.42)
        lower = add_landmark(x, -0.22)
        eye_pairs.append((upper, lower))
    mouth_pairs = []
    for i in range(n_mouth_pairs):
        x = -0.25 + 0.5 * i / max(n_mouth_pairs - 1, 1)
        upper = add_landmark(x, 0.38)
        lower = add_landmark(x, 0.58)
        mouth_pairs.append((upper, lower))
    lip_corner_pairs = []
    for i in range(n_lip_corner_pairs):
        y = 0.48 + 0.05 * i
        left = add_landmark(-0.38, y)
        right = add_landmark(0.38, y)
        lip_corner_pairs.append((left, right))

    return FaceModel(
        template_vertices=template,
        faces=faces,
        identity_basis=identity_basis,
        expression_basis=expression_basis,
        joint_positions=joint_positions,
        skinning_weights=skinning,
        albedo_mean=albedo_mean,
        albedo_basis=albedo_basis,
        landmark_faces=np.asarray(lm_faces, dtype=np.int64),
        landmark_barys=np.asarray(lm_barys, dtype=float),
        jaw_joint=1,
        uv_coords=np.stack([(uu.ravel() + 1) / 2, (vv.ravel() + 1) / 2], axis=1),
        skin_triangles=None,
        eye_pairs=np.asarray(eye_pairs, dtype=np.int64),
        mouth_pairs=np.asarray(mouth_pairs, dtype=np.int64),
        lip_corner_pairs=np.asarray(lip_corner_pairs, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Binary model file (magic "FCM1")
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4s10q")  # magic + n_v n_f k n_beta n_psi n_alpha L
#                                    n_eye n_mouth n_lip
_FLAGS = struct.Struct("<3q")  # jaw_joint, has_uv, n_skin (-1 = all)


def _write_array(f, arr, dtype):
    f.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read_array(f, shape, dtype):
    count = int(np.prod(shape)) if shape else 0
    raw = f.read(count * np.dtype(dtype).itemsize)
    if len(raw) != count * np.dtype(dtype).itemsize:
        raise FileFormatError("model file truncated")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def save_model(model: FaceModel, path) -> None:
    """Write the little-endian FCM1 binary model file."""
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                MODEL_MAGIC,
                model.n_vertices,
                model.n_faces,
                model.n_joints,
                model.n_beta,
                model.n_psi,
                model.n_alpha,
                model.n_landmarks,
                model.eye_pairs.shape[0],
                model.mouth_pairs.shape[0],
                model.lip_corner_pairs.shape[0],
            )
        )
        n_skin = -1 if model.skin_triangles is None else model.skin_triangles.shape[0]
        f.write(_FLAGS.pack(model.jaw_joint, int(model.uv_coords is not None), n_skin))
        _write_array(f, model.template_vertices, "<f8")
        _write_array(f, model.faces, "<i8")
        _write_array(f, model.identity_basis, "<f8")
        _write_array(f, model.expression_basis, "<f8")
        _write_array(f, model.joint_positions, "<f8")
        _write_array(f, model.skinning_weights, "<f8")
        _write_array(f, model.albedo_mean, "<f8")
        _write_array(f, model.albedo_basis, "<f8")
        _write_array(f, model.landmark_faces, "<i8")
        _write_array(f, model.landmark_barys, "<f8")
        if model.uv_coords is not None:
            _write_array(f, model.uv_coords, "<f8")
        if model.skin_triangles is not None:
            _write_array(f, model.skin_triangles, "<i8")
        _write_array(f, model.eye_pairs, "<i8")
        _write_array(f, model.mouth_pairs, "<i8")
        _write_array(f, model.lip_corner_pairs, "<i8")


def load_model(path) -> FaceModel:
    """Read an FCM1 file; all FaceModel invariants are revalidated."""
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FileFormatError("model file too short for header")
        magic, n_v, n_f, k, n_beta, n_psi, n_alpha, L, n_eye, n_mouth, n_lip = (
            _HEADER.unpack(header)
        )
        if magic != MODEL_MAGIC:
            raise FileFormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        jaw_joint, has_uv, n_skin = _FLAGS.unpack(f.read(_FLAGS.size))
        kwargs = dict(
            template_vertices=_read_array(f, (n_v, 3), "<f8"),
            faces=_read_array(f, (n_f, 3), "<i8"),
            identity_basis=_read_array(f, (n_v, 3, n_beta), "<f8"),
            expression_basis=_read_array(f, (n_v, 3, n_psi), "<f8"),
            joint_positions=_read_array(f, (k, 3), "<f8"),
            skinning_weights=_read_array(f, (n_v, k), "<f8"),
            albedo_mean=_read_array(f, (n_v, 3), "<f8"),
            albedo_basis=_read_array(f, (n_v, 3, n_alpha), "<f8"),
            landmark_faces=_read_array(f, (L,), "<i8"),
            landmark_barys=_read_array(f, (L, 3), "<f8"),
            jaw_joint=jaw_joint,
        )
        kwargs["uv_coords"] = _read_array(f, (n_v, 2), "<f8") if has_uv else None
        kwargs["skin_triangles"] = (
            _read_array(f, (n_skin,), "<i8") if n_skin >= 0 else None
        )
        kwargs["eye_pairs"] = _read_array(f, (n_eye, 2), "<i8")
        kwargs["mouth_pairs"] = _read_array(f, (n_mouth, 2), "<i8")
        kwargs["lip_corner_pairs"] = _read_array(f, (n_lip, 2), "<i8")
    return FaceModel(**kwargs)
