"""Ray-cast scenes of boxes standing on a ground plane.

World frame: the camera sits at the origin, ``+y`` points down and ``+z``
forward, so the ground is the plane ``y = camera_height``. The camera is
pitched down by ``pitch`` radians about its x axis. Depth is the camera-space
z coordinate of the nearest hit, normals are analytic face normals expressed
in camera coordinates, and colours are Lambert-shaded per-class albedos
quantised to 8 bits.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import math

import numpy as np

from ..errors import ConfigurationError
from ..geometry.camera import Intrinsics, viewing_rays
from ..project_types import Size2D
from .sample import Sample

SKY = np.array([0.62, 0.75, 0.9])
GROUND_CLASS = 0
INVALID_FACE = -1


@dataclass
class SceneSpec:
    """Parameters of the scene distribution.

    Attributes:
        seed: Seed used by :func:`gen_scene` when no generator is passed.
        size: ``(height, width)`` of the rendered image.
        box_count: Inclusive range of the number of boxes.
        box_size: Range of box edge lengths in metres.
        box_distance: Range of box centre depths along the world z axis.
        camera_height: Height of the camera above the ground in metres.
        pitch: Downward tilt of the camera in radians.
        max_depth: Hits farther than this are left invalid.
        num_classes: Class count K; class 0 is the ground.
        light_direction: Direction the light travels, world frame.
        ambient: Ambient share of the shading.
        intrinsics: Camera intrinsics; ``Intrinsics.default_for`` when omitted.
    """

    seed: int = 0
    size: Size2D = (48, 64)
    box_count: Tuple[int, int] = (1, 4)
    box_size: Tuple[float, float] = (0.4, 1.2)
    box_distance: Tuple[float, float] = (2.5, 8.0)
    camera_height: float = 1.5
    pitch: float = 0.3
    max_depth: float = 20.0
    num_classes: int = 5
    light_direction: Tuple[float, float, float] = (0.4, 0.8, 0.45)
    ambient: float = 0.3
    intrinsics: Optional[Intrinsics] = field(default=None)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigurationError("A scene needs K >= 2 (ground plus an object class)")
        if min(self.size) < 1:
            raise ConfigurationError(f"Image size must be positive, got {self.size}")
        if not 0 <= self.box_count[0] <= self.box_count[1]:
            raise ConfigurationError(f"Invalid box count range {self.box_count}")
        if not 0 < self.box_size[0] <= self.box_size[1]:
            raise ConfigurationError(f"Invalid box size range {self.box_size}")
        if not 0 < self.box_distance[0] <= self.box_distance[1]:
            raise ConfigurationError(f"Invalid box distance range {self.box_distance}")
        if self.camera_height <= 0 or self.max_depth <= 0:
            raise ConfigurationError("camera_height and max_depth must be positive")
        if np.linalg.norm(self.light_direction) == 0:
            raise ConfigurationError("light_direction must be nonzero")

    @property
    def camera(self) -> Intrinsics:
        h, w = self.size
        return self.intrinsics or Intrinsics.default_for(w, h)

    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation for the downward pitch."""
        c, s = math.cos(self.pitch), math.sin(self.pitch)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


@dataclass
class Box:
    """Axis-aligned box in the world frame."""

    lower: np.ndarray
    upper: np.ndarray
    label: int


def class_colors(num_classes: int) -> np.ndarray:
    """Fixed albedo per class (golden-angle hues, class 0 grey-brown)."""
    colors = [np.array([0.55, 0.5, 0.42])]
    for c in range(1, num_classes):
        hue = (c * 0.618033988749895) % 1.0
        colors.append(0.35 + 0.6 * np.abs(np.array([hue, (hue + 1 / 3) % 1.0, (hue + 2 / 3) % 1.0]) * 2 - 1))
    return np.stack(colors)


def sample_boxes(spec: SceneSpec, rng: np.random.Generator) -> List[Box]:
    """Draw boxes resting on the ground inside the horizontal field of view."""
    k = spec.camera
    half_fov = math.atan((spec.size[1] / 2.0) / k.fx)
    boxes = []
    for _ in range(int(rng.integers(spec.box_count[0], spec.box_count[1] + 1))):
        sx, sy, sz = rng.uniform(*spec.box_size, size=3)
        z = rng.uniform(*spec.box_distance)
        reach = 0.8 * z * math.tan(half_fov)
        x = rng.uniform(-reach, reach)
        label = int(rng.integers(1, spec.num_classes))
        lower = np.array([x - sx / 2, spec.camera_height - sy, z - sz / 2])
        upper = np.array([x + sx / 2, spec.camera_height, z + sz / 2])
        boxes.append(Box(lower, upper, label))
    return boxes


def _intersect_box(origin_free_rays: np.ndarray, box: Box) -> Tuple[np.ndarray, np.ndarray]:
    """Slab test from the origin; returns entry distance (inf on miss) and face axis."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / origin_free_rays
        t0 = box.lower[:, None, None] * inv
        t1 = box.upper[:, None, None] * inv
    near = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    far = np.where(np.isnan(t0), np.inf, np.maximum(t0, t1))
    axis = np.argmax(near, axis=0)
    t_near = np.max(near, axis=0)
    t_far = np.min(far, axis=0)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf), axis


def render_scene(spec: SceneSpec, rng: np.random.Generator) -> Tuple[Sample, np.ndarray]:
    """Ray-cast one scene.

    Returns:
        tuple: The sample and an ``(H, W)`` face-id map (0 ground,
        ``1 + 6 * box + face`` for box faces, -1 where nothing was hit), used to
        find face boundaries.
    """
    h, w = spec.size
    k = spec.camera
    rotation = spec.rotation()
    rays_cam = viewing_rays(h, w, k)
    rays = np.einsum("ij,jhw->ihw", rotation, rays_cam)

    # Camera-space z of a hit at ray parameter t is t, since rays have unit z.
    with np.errstate(divide="ignore"):
        t_ground = np.where(rays[1] > 0, spec.camera_height / rays[1], np.inf)
    depth = t_ground
    face = np.where(np.isfinite(t_ground), 0, INVALID_FACE)
    labels = np.full((h, w), GROUND_CLASS, dtype=np.int64)
    normals_world = np.zeros((3, h, w))
    normals_world[1] = -1.0

    for b, box in enumerate(sample_boxes(spec, rng)):
        t_box, axis = _intersect_box(rays, box)
        closer = t_box < depth
        depth = np.where(closer, t_box, depth)
        sign = -np.sign(np.take_along_axis(rays, axis[None], axis=0)[0])
        box_normal = np.zeros((3, h, w))
        np.put_along_axis(box_normal, axis[None], sign[None], axis=0)
        normals_world = np.where(closer[None], box_normal, normals_world)
        face_index = axis * 2 + (sign > 0)
        face = np.where(closer, 1 + 6 * b + face_index, face)
        labels = np.where(closer, box.label, labels)

    mask = np.isfinite(depth) & (depth <= spec.max_depth)
    depth = np.where(mask, depth, 0.0)
    face = np.where(mask, face, INVALID_FACE)
    labels = np.where(mask, labels, GROUND_CLASS)
    normals = np.einsum("ji,jhw->ihw", rotation, normals_world)
    normals = np.where(mask[None], normals, 0.0)

    light = np.asarray(spec.light_direction, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lambert = np.clip(-np.einsum("i,ihw->hw", light, normals_world), 0.0, 1.0)
    shade = spec.ambient + (1.0 - spec.ambient) * lambert
    albedo = class_colors(spec.num_classes)[labels].transpose(2, 0, 1)
    rgb = np.where(mask[None], albedo * shade[None], SKY[:, None, None])
    rgb = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0) / 255.0

    sample = Sample(rgb=rgb, intrinsics=k, depth=depth, normals=normals, labels=labels, mask=mask)
    return sample, face


def gen_scene(spec: SceneSpec, rng: Optional[np.random.Generator] = None) -> Sample:
    """Render a scene; ``rng`` defaults to a generator seeded with ``spec.seed``."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    sample, _ = render_scene(spec, rng)
    return sample


def interior_faces(face: np.ndarray, radius: int = 1) -> np.ndarray:
    """Pixels whose ``(2 radius + 1)^2`` neighbourhood lies on a single valid face."""
    h, w = face.shape
    padded = np.pad(face, radius, constant_values=INVALID_FACE)
    inside = face != INVALID_FACE
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            inside &= padded[dy : dy + h, dx : dx + w] == face
    return inside
