# Re-export from camera
from .camera import (
    Intrinsics,
    pixel_grid,
    viewing_rays,
    depth_to_points,
    project_points,
)

# Re-export from normals
from .normals import (
    DEFAULT_WINDOW,
    NormalMap,
    orient_toward_camera,
    normals_from_depth_planefit,
    normals_from_depth_finitediff,
    angle_degrees,
    normals_compatibility,
)


__all__ = [
    "Intrinsics",
    "pixel_grid",
    "viewing_rays",
    "depth_to_points",
    "project_points",
    "DEFAULT_WINDOW",
    "NormalMap",
    "orient_toward_camera",
    "normals_from_depth_planefit",
    "normals_from_depth_finitediff",
    "angle_degrees",
    "normals_compatibility",
]
