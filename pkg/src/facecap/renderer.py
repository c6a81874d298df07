"""Software rasterizer: orthographic projection, z-buffered barycentric
interpolation, 9-band spherical-harmonics Lambertian shading, and analytic
gradients of the rendered pixels at fixed per-pixel triangle assignment.

Coordinate conventions
----------------------
* project() maps a 3D point to image coordinates q = s * (x, y) + t; the
  camera plane IS the pixel plane (origin top-left, x right, y down), so a
  unit change in t moves the image by one pixel.
* Pixel (row, col) has its center at (col + 0.5, row + 0.5).
* Depth is the barycentric-interpolated 3D z; smaller z is nearer. Depth
  ties go to the lower triangle index.
* Coverage ties on shared edges use the top-left rule, stated here for
  bit-exact tests: after orienting each projected triangle positively (in
  y-down coordinates), a pixel center exactly on an edge is covered iff the
  edge direction d satisfies d.y < 0, or d.y == 0 and d.x > 0.

Gradients flow through barycentric interpolation, normal interpolation and
shading only; occlusion and silhouette discontinuities are excluded by
contract (no gradient for which triangle owns a pixel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericError, ParameterError
from .face_model import Mesh, vertex_normals_vjp

# Real spherical-harmonics constants, bands 0-2, in the order
# Y00; Y1,-1 Y10 Y11; Y2,-2 Y2,-1 Y20 Y21 Y22.
_C0 = 0.5 * math.sqrt(1.0 / math.pi)
_C1 = math.sqrt(3.0 / (4.0 * math.pi))
_C2 = math.sqrt(15.0 / (4.0 * math.pi))
_C3 = 0.25 * math.sqrt(5.0 / math.pi)
_C4 = 0.25 * math.sqrt(15.0 / math.pi)


@dataclass(frozen=True)
class Camera:
    """Orthographic camera: isotropic scale, 2D translation, image size."""

    scale: float
    translation: np.ndarray  # (2,)
    width: int
    height: int

    def __post_init__(self):
        if self.scale <= 0:
            raise ParameterError(f"camera scale must be > 0, got {self.scale}")
        if self.width < 1 or self.height < 1:
            raise ParameterError("image size must be at least 1x1")

    @classmethod
    def from_params(cls, camera_vec, width, height) -> "Camera":
        camera_vec = np.asarray(camera_vec, dtype=float)
        return cls(
            scale=float(camera_vec[0]),
            translation=camera_vec[1:3].copy(),
            width=int(width),
            height=int(height),
        )


@dataclass
class RenderOutput:
    """Rendered image plus the per-pixel attribution needed for gradients.

    image        (h, w, 3) clamped to [0, 1]
    linear_image (h, w, 3) pre-clamp shading values; losses consume these
    mask         (h, w) bool, coverage of the face-skin triangle subset
    pixel_tri    (h, w) int, front-most skin triangle index, -1 where empty
    pixel_bary   (h, w, 3) barycentric coordinates for covered pixels
    """

    image: np.ndarray
    linear_image: np.ndarray
    mask: np.ndarray
    pixel_tri: np.ndarray
    pixel_bary: np.ndarray


def project(camera: Camera, points: np.ndarray) -> np.ndarray:
    """Orthographic projection to image coordinates: s * (x, y) + t."""
    points = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(points)):
        raise NumericError("points contain non-finite values")
    return camera.scale * points[..., :2] + camera.translation


def sh_basis(normals: np.ndarray) -> np.ndarray:
    """Evaluate the 9 real SH basis functions at unit normals (..., 3)."""
    x, y, z = normals[..., 0], normals[..., 1], normals[..., 2]
    return np.stack(
        [
            np.full_like(x, _C0),
            _C1 * y,
            _C1 * z,
            _C1 * x,
            _C2 * x * y,
            _C2 * y * z,
            _C3 * (3.0 * z * z - 1.0),
            _C2 * x * z,
            _C4 * (x * x - y * y),
        ],
        axis=-1,
    )


def sh_basis_jacobian(normals: np.ndarray) -> np.ndarray:
    """d sh_basis / d normal, shape (..., 9, 3)."""
    x, y, z = normals[..., 0], normals[..., 1], normals[..., 2]
    zero = np.zeros_like(x)
    rows = [
        (zero, zero, zero),
        (zero, np.full_like(x, _C1), zero),
        (zero, zero, np.full_like(x, _C1)),
        (np.full_like(x, _C1), zero, zero),
        (_C2 * y, _C2 * x, zero),
        (zero, _C2 * z, _C2 * y),
        (zero, zero, 6.0 * _C3 * z),
        (_C2 * z, zero, _C2 * x),
        (2.0 * _C4 * x, -2.0 * _C4 * y, zero),
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def sh_irradiance(lighting: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Irradiance RGB at a unit normal: per channel, dot of the channel's 9
    SH coefficients with the basis values."""
    lighting = np.asarray(lighting, dtype=float)
    if lighting.shape != (27,):
        raise ParameterError(f"lighting must have 27 coefficients, got {lighting.shape}")
    normal = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(normal) - 1.0) > 1e-6:
        raise NumericError(f"normal must be unit length, |n| = {np.linalg.norm(normal)}")
    return lighting.reshape(3, 9) @ sh_basis(normal)


def _coverage(eo, accept, strict=False):
    """Inside test for oriented edge values eo (..., 3) with per-edge
    boundary acceptance flags; strict drops all boundary pixels."""
    if strict:
        return np.all(eo > 0.0, axis=-1)
    return np.all((eo > 0.0) | ((eo == 0.0) & accept), axis=-1)


def rasterize(
    mesh: Mesh,
    camera: Camera,
    per_vertex_albedo: np.ndarray,
    lighting: np.ndarray,
    skin_triangles: Optional[np.ndarray] = None,
) -> RenderOutput:
    """Render the mesh with z-buffering and SH-lit Lambertian shading.

    The mask (and the pixel attribution that drives gradients) covers the
    front-most pixels owned by skin_triangles (default: all triangles).
    Back faces are not culled; the face patch is open.
    """
    lighting = np.asarray(lighting, dtype=float)
    if lighting.shape != (27,):
        raise ParameterError("lighting must have 27 coefficients")
    albedo = np.asarray(per_vertex_albedo, dtype=float)
    if albedo.shape != mesh.vertices.shape:
        raise ParameterError("per-vertex albedo must be (n_v, 3)")

    h, w = camera.height, camera.width
    n_f = mesh.faces.shape[0]
    pixel_tri = np.full((h, w), -1, dtype=np.int64)
    pixel_bary = np.zeros((h, w, 3))
    zbuf = np.full((h, w), np.inf)

    if n_f:
        q = project(camera, mesh.vertices)
        _rasterize_triangles(mesh, q, pixel_tri, pixel_bary, zbuf)

    if skin_triangles is not None:
        keep = np.zeros(n_f + 1, dtype=bool)
        keep[np.asarray(skin_triangles, dtype=np.int64)] = True
        skin_hit = keep[pixel_tri]  # pixel_tri == -1 indexes the guard slot
        skin_hit &= pixel_tri >= 0
        pixel_tri = np.where(skin_hit, pixel_tri, -1)
        pixel_bary = np.where(skin_hit[..., None], pixel_bary, 0.0)

    mask = pixel_tri >= 0
    linear = np.zeros((h, w, 3))
    if np.any(mask):
        linear[mask] = _shade_pixels(
            mesh, albedo, lighting.reshape(3, 9), pixel_tri[mask], pixel_bary[mask]
        )
    return RenderOutput(
        image=np.clip(linear, 0.0, 1.0),
        linear_image=linear,
        mask=mask,
        pixel_tri=pixel_tri,
        pixel_bary=pixel_bary,
    )


def _rasterize_triangles(mesh, q, pixel_tri, pixel_bary, zbuf):
    """Scanline-free per-triangle rasterization into the given buffers.

    Triangles are processed in ascending index order with a strict z test,
    which realizes the lower-index-wins rule on exact depth ties.
    """
    h, w = zbuf.shape
    verts_z = mesh.vertices[:, 2]
    for t in range(mesh.faces.shape[0]):
        i0, i1, i2 = mesh.faces[t]
        q0, q1, q2 = q[i0], q[i1], q[i2]
        area2 = (q1[0] - q0[0]) * (q2[1] - q0[1]) - (q1[1] - q0[1]) * (q2[0] - q0[0])
        if area2 == 0.0:
            continue
        xmin = max(int(math.floor(min(q0[0], q1[0], q2[0]) - 0.5)), 0)
        xmax = min(int(math.ceil(max(q0[0], q1[0], q2[0]) - 0.5)), w - 1)
        ymin = max(int(math.floor(min(q0[1], q1[1], q2[1]) - 0.5)), 0)
        ymax = min(int(math.ceil(max(q0[1], q1[1], q2[1]) - 0.5)), h - 1)
        if xmin > xmax or ymin > ymax:
            continue
        px = np.arange(xmin, xmax + 1) + 0.5
        py = np.arange(ymin, ymax + 1) + 0.5
        PX, PY = np.meshgrid(px, py)

        # edge functions opposite each vertex; w0 + w1 + w2 == area2
        w0 = (q2[0] - q1[0]) * (PY - q1[1]) - (q2[1] - q1[1]) * (PX - q1[0])
        w1 = (q0[0] - q2[0]) * (PY - q2[1]) - (q0[1] - q2[1]) * (PX - q2[0])
        w2 = (q1[0] - q0[0]) * (PY - q0[1]) - (q1[1] - q0[1]) * (PX - q0[0])

        sign = 1.0 if area2 > 0 else -1.0
        eo = np.stack([w0 * sign, w1 * sign, w2 * sign], axis=-1)
        # positively-oriented edge directions for the top-left rule
        if sign > 0:
            dirs = (q2 - q1, q0 - q2, q1 - q0)
        else:
            dirs = (q1 - q2, q2 - q0, q0 - q1)
        accept = np.array(
            [(d[1] < 0.0) or (d[1] == 0.0 and d[0] > 0.0) for d in dirs]
        )
        covered = _coverage(eo, accept)
        if not np.any(covered):
            continue

        bary = np.stack([w0, w1, w2], axis=-1) / area2
        z = (
            bary[..., 0] * verts_z[i0]
            + bary[..., 1] * verts_z[i1]
            + bary[..., 2] * verts_z[i2]
        )
        sub_z = zbuf[ymin : ymax + 1, xmin : xmax + 1]
        win = covered & (z < sub_z)
        if not np.any(win):
            continue
        sub_z[win] = z[win]
        pixel_tri[ymin : ymax + 1, xmin : xmax + 1][win] = t
        pixel_bary[ymin : ymax + 1, xmin : xmax + 1][win] = bary[win]


def _shade_pixels(mesh, albedo, lmat, tris, bary):
    """Shade covered pixels: interpolated albedo times SH irradiance of the
    renormalized interpolated normal."""
    vidx = mesh.faces[tris]  # (P, 3)
    alb = np.einsum("pc,pcr->pr", bary, albedo[vidx])
    nraw = np.einsum("pc,pcd->pd", bary, mesh.vertex_normals[vidx])
    nn = np.linalg.norm(nraw, axis=1, keepdims=True)
    nn = np.maximum(nn, 1e-300)
    n = nraw / nn
    irr = sh_basis(n) @ lmat.T
    return alb * irr


@dataclass
class RenderGradients:
    vertices: np.ndarray  # (n_v, 3)
    albedo: np.ndarray  # (n_v, 3)
    lighting: np.ndarray  # (27,)
    scale: float
    translation: np.ndarray  # (2,)


def render_gradients(
    mesh: Mesh,
    camera: Camera,
    per_vertex_albedo: np.ndarray,
    lighting: np.ndarray,
    upstream: np.ndarray,
    render: Optional[RenderOutput] = None,
) -> RenderGradients:
    """Vector-Jacobian product of the linear (pre-clamp) rendered image.

    upstream is d(loss)/d(linear_image), shape (h, w, 3). The per-pixel
    triangle assignment is held fixed; gradients flow through barycentric
    weights (via the projected vertex positions), interpolated albedo,
    interpolated+renormalized normals (back to vertex positions through the
    area-weighted normal computation), SH shading, and the camera.
    """
    albedo = np.asarray(per_vertex_albedo, dtype=float)
    lmat = np.asarray(lighting, dtype=float).reshape(3, 9)
    if render is None:
        render = rasterize(mesh, camera, albedo, lighting)
    upstream = np.asarray(upstream, dtype=float)
    h, w = camera.height, camera.width
    if upstream.shape != (h, w, 3):
        raise ParameterError(f"upstream must be (h, w, 3) = {(h, w, 3)}")
    if render.pixel_tri.shape != (h, w):
        raise ParameterError("render attribution does not match camera size")

    n_v = mesh.vertices.shape[0]
    grads = RenderGradients(
        vertices=np.zeros((n_v, 3)),
        albedo=np.zeros((n_v, 3)),
        lighting=np.zeros(27),
        scale=0.0,
        translation=np.zeros(2),
    )
    ys, xs = np.nonzero(render.mask)
    if ys.size == 0:
        return grads

    tris = render.pixel_tri[ys, xs]
    bary = render.pixel_bary[ys, xs]  # (P, 3)
    g = upstream[ys, xs]  # (P, 3)
    vidx = mesh.faces[tris]  # (P, 3)
    va = albedo[vidx]  # (P, 3v, 3rgb)
    vn = mesh.vertex_normals[vidx]  # (P, 3v, 3xyz)

    alb = np.einsum("pc,pcr->pr", bary, va)
    nraw = np.einsum("pc,pcd->pd", bary, vn)
    nn = np.maximum(np.linalg.norm(nraw, axis=1, keepdims=True), 1e-300)
    n = nraw / nn
    Y = sh_basis(n)  # (P, 9)
    irr = Y @ lmat.T  # (P, 3)

    # color = alb * irr
    d_alb = g * irr
    d_irr = g * alb
    np.add.at(grads.albedo, vidx, bary[:, :, None] * d_alb[:, None, :])
    grads.lighting = np.einsum("pr,pm->rm", d_irr, Y).reshape(27)

    d_Y = d_irr @ lmat  # (P, 9)
    d_n = np.einsum("pm,pmd->pd", d_Y, sh_basis_jacobian(n))
    d_nraw = (d_n - n * np.sum(n * d_n, axis=1, keepdims=True)) / nn
    grad_normals = np.zeros((n_v, 3))
    np.add.at(grad_normals, vidx, bary[:, :, None] * d_nraw[:, None, :])

    d_bary = np.einsum("pr,pcr->pc", d_alb, va) + np.einsum(
        "pd,pcd->pc", d_nraw, vn
    )  # (P, 3)

    # barycentric backward to projected vertex positions
    q = project(camera, mesh.vertices)
    qv = q[vidx]  # (P, 3v, 2)
    P = np.stack([xs + 0.5, ys + 0.5], axis=1).astype(float)  # pixel centers
    d_q = _bary_vjp(qv, P, d_bary)  # (P, 3v, 2)

    grad_q = np.zeros((n_v, 2))
    np.add.at(grad_q, vidx, d_q)
    grads.vertices[:, :2] = camera.scale * grad_q
    grads.scale = float(np.sum(grad_q * mesh.vertices[:, :2]))
    grads.translation = grad_q.sum(axis=0)

    # normals depend on all three coordinates of the vertices
    grads.vertices += vertex_normals_vjp(mesh.vertices, mesh.faces, grad_normals)
    return grads


def _bary_vjp(qv, P, d_bary):
    """Backward of b_c = w_c / (w_0+w_1+w_2) w.r.t. the three projected
    vertices. qv (P, 3, 2), pixel centers P (P, 2), d_bary (P, 3);
    returns (P, 3, 2)."""
    q0, q1, q2 = qv[:, 0], qv[:, 1], qv[:, 2]

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    def rot(v):  # d cross(u, v) / d u
        return np.stack([v[:, 1], -v[:, 0]], axis=1)

    def irot(u):  # d cross(u, v) / d v
        return np.stack([-u[:, 1], u[:, 0]], axis=1)

    # w_c = cross(u_c, v_c): u_c from the opposite edge, v_c pixel-relative
    us = [q2 - q1, q0 - q2, q1 - q0]
    vs = [P - q1, P - q2, P - q0]
    ws = np.stack([cross(u, v) for u, v in zip(us, vs)], axis=1)  # (P, 3)
    W = ws.sum(axis=1, keepdims=True)
    b = ws / W

    # dw[c][j] = d w_c / d q_j, each (P, 2)
    n = qv.shape[0]
    zero = np.zeros((n, 2))
    dw = [[zero, zero, zero] for _ in range(3)]
    heads = [2, 0, 1]  # edge head vertex of u_c
    tails = [1, 2, 0]  # edge tail vertex (also anchors v_c)
    for c in range(3):
        dw[c][heads[c]] = rot(vs[c])
        dw[c][tails[c]] = -rot(vs[c]) - irot(us[c])
    d_q = np.zeros_like(qv)
    for j in range(3):
        dW_j = dw[0][j] + dw[1][j] + dw[2][j]
        for c in range(3):
            coeff = (d_bary[:, c] / W[:, 0])[:, None]
            d_q[:, j] += coeff * (dw[c][j] - b[:, c][:, None] * dW_j)
    return d_q
