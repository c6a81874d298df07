"""facecap: expression fitting and affect metrics over a toy parametric face
model with a differentiable software rasterizer."""

__version__ = "0.1.0"

from .face_model import (  # noqa: F401
    FaceModel,
    FaceParams,
    Mesh,
    evaluate_albedo,
    evaluate_mesh,
    load_model,
    make_toy_model,
    mesh_jacobians,
    save_model,
    surface_landmarks,
)
from .renderer import Camera, RenderOutput, project, rasterize, render_gradients, sh_irradiance  # noqa: F401
