"""Shared test utilities: independent oracles and finite-difference checks."""

import numpy as np


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of scalar f at x (1-D array)."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (f(xp) - f(xm)) / (2.0 * step)
    return grad


def central_diff_jacobian(f, x, step=1e-5):
    """Central finite-difference Jacobian of vector-valued f at x."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * step))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-12)
    return np.linalg.norm((a - b).ravel()) / denom


def quat_rotate(axis_angle, points):
    """Independent rigid-rotation oracle via unit quaternions."""
    axis_angle = np.asarray(axis_angle, dtype=float)
    theta = np.linalg.norm(axis_angle)
    if theta == 0.0:
        return np.array(points, dtype=float, copy=True)
    axis = axis_angle / theta
    w = np.cos(theta / 2.0)
    xyz = axis * np.sin(theta / 2.0)
    out = []
    for p in np.atleast_2d(points):
        # q p q*
        t = 2.0 * np.cross(xyz, p)
        out.append(p + w * t + np.cross(xyz, t))
    return np.asarray(out)
