"""Image and mesh file writers used by the renderer and the CLI."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ParameterError


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Clamp a float image in [0, 1] to 8-bit with round-half-away rounding."""
    return (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(path, image: np.ndarray) -> None:
    """8-bit PNG from a float (h, w, 3) image in [0, 1] or a bool/gray (h, w)."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        data = to_uint8(arr.astype(float))
        Image.fromarray(data, mode="L").save(path, format="PNG")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        Image.fromarray(to_uint8(arr), mode="RGB").save(path, format="PNG")
    else:
        raise ParameterError(f"cannot encode image of shape {arr.shape}")


def write_ppm(path, image: np.ndarray) -> None:
    """Binary PPM (P6) from a float (h, w, 3) image in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ParameterError(f"PPM needs (h, w, 3), got {arr.shape}")
    data = to_uint8(arr)
    with open(path, "wb") as f:
        f.write(f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5) from a float or bool (h, w) image."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ParameterError(f"PGM needs (h, w), got {arr.shape}")
    data = to_uint8(arr.astype(float))
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def write_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    """Minimal OBJ export: vertices and triangular faces, no materials."""
    with open(path, "w", encoding="ascii") as f:
        for v in np.asarray(vertices, dtype=float):
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for face in np.asarray(faces, dtype=np.int64):
            f.write(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}\n")
