# generator/scene_generator.py
"""Synthetic driving scenes: object layout and kinematics over T frames."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

from domain.boxes import Box3D, EgoStep, Frame, SceneSequence, class_template
from domain.errors import ArgumentError, CapacityError
from domain.geometry import box_polygon
from domain.view_geometry import ViewGeometry
from generator.sensors import render_views, sample_lidar
from utils.seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

MIN_RANGE_M = 2.5
ATTEMPTS_PER_OBJECT = 400


@dataclass(frozen=True)
class MotionModel:
    """Constant object velocities plus a constant-twist ego vehicle."""

    dt: float = 0.5
    ego_velocity: Tuple[float, float] = (0.0, 0.0)
    ego_yaw_rate: float = 0.0

    @property
    def is_static_ego(self) -> bool:
        return self.ego_velocity == (0.0, 0.0) and self.ego_yaw_rate == 0.0

    def ego_step(self) -> EgoStep:
        vx, vy = self.ego_velocity
        return EgoStep(vx * self.dt, vy * self.dt, self.ego_yaw_rate * self.dt)


def generate_scene(
    seed: int,
    n_objects: int,
    extent_m: float,
    class_count: int,
    max_speed: float = 1.0,
    min_range: float = MIN_RANGE_M,
) -> List[Box3D]:
    """Place `n_objects` non-overlapping boxes resting on the ground.

    Centers are uniform in the square window of side `extent_m` (keeping the
    whole footprint inside it) and at least `min_range` from the ego origin.
    """
    if n_objects < 0:
        raise ArgumentError(f"generate_scene: n_objects must be >= 0, got {n_objects}")
    if not extent_m > 0:
        raise ArgumentError(f"generate_scene: extent must be positive, got {extent_m}")
    if class_count < 1:
        raise ArgumentError("generate_scene: class_count must be >= 1")

    rng = rng_for(seed, "layout")
    half = extent_m / 2.0
    boxes: List[Box3D] = []
    polygons = []
    for i in range(n_objects):
        for _ in range(ATTEMPTS_PER_OBJECT):
            class_id = int(rng.integers(class_count))
            w, l, h = (s * float(rng.uniform(0.9, 1.1)) for s in class_template(class_id))
            reach = 0.5 * math.hypot(w, l)
            if reach >= half:
                continue
            x, y = rng.uniform(-half + reach, half - reach, size=2)
            if math.hypot(x, y) < min_range + reach:
                continue
            yaw = float(rng.uniform(-math.pi, math.pi))
            speed = float(rng.uniform(0.0, max_speed))
            velocity = (speed * math.cos(yaw), speed * math.sin(yaw))
            box = Box3D((float(x), float(y), h / 2.0), (w, l, h), yaw, class_id, velocity)
            poly = box_polygon(box)
            if any(poly.intersects(other) for other in polygons):
                continue
            boxes.append(box)
            polygons.append(poly)
            break
        else:
            raise CapacityError(
                f"could not place object {i + 1} of {n_objects} in a {extent_m} m window "
                f"after {ATTEMPTS_PER_OBJECT} attempts"
            )
    logger.debug(f"generate_scene(seed={seed}): placed {len(boxes)} boxes")
    return boxes


def _to_ego(box: Box3D, pose: Tuple[float, float, float]) -> Box3D:
    ex, ey, eyaw = pose
    c, s = math.cos(eyaw), math.sin(eyaw)
    dx, dy = box.center[0] - ex, box.center[1] - ey
    vx, vy = box.velocity
    return Box3D(
        (c * dx + s * dy, -s * dx + c * dy, box.center[2]),
        box.size,
        box.yaw - eyaw,
        box.class_id,
        (c * vx + s * vy, -s * vx + c * vy),
    )


def boxes_at(boxes: List[Box3D], t: int, motion: MotionModel) -> List[Box3D]:
    """Boxes advanced t steps, expressed in the ego frame at step t."""
    moved = [b.moved(t * motion.dt) for b in boxes]
    if motion.is_static_ego:
        return moved
    step = motion.ego_step()
    pose = (0.0, 0.0, 0.0)
    for _ in range(t):
        x, y, yaw = pose
        c, s = math.cos(yaw), math.sin(yaw)
        pose = (x + c * step.dx - s * step.dy, y + s * step.dx + c * step.dy, yaw + step.dyaw)
    return [_to_ego(b, pose) for b in moved]


def render_frame(
    seed: int,
    t: int,
    boxes: List[Box3D],
    geometry: ViewGeometry,
    n_points: int,
    noise_sigma: float,
    view_noise: float,
) -> Frame:
    cloud = sample_lidar(boxes, n_points, noise_sigma, derive_seed(seed, f"lidar/{t}"))
    views = render_views(boxes, geometry, derive_seed(seed, f"views/{t}"), noise_level=view_noise)
    return Frame(t, cloud, views, list(boxes))


def simulate_sequence(
    seed: int,
    T: int,
    n_objects: int,
    motion: MotionModel | None = None,
    *,
    geometry: ViewGeometry | None = None,
    extent_m: float = 18.0,
    class_count: int = 3,
    n_points: int = 2048,
    noise_sigma: float = 0.02,
    view_noise: float = 0.05,
    max_speed: float = 1.0,
) -> SceneSequence:
    """T frames of one scene; frame t shows the objects advanced by t * dt."""
    if T < 1:
        raise ArgumentError(f"simulate_sequence: T must be >= 1, got {T}")
    motion = motion or MotionModel()
    geometry = geometry or ViewGeometry(n_classes=class_count)
    initial = generate_scene(seed, n_objects, extent_m, class_count, max_speed=max_speed)
    frames = [
        render_frame(
            seed, t, boxes_at(initial, t, motion), geometry, n_points, noise_sigma, view_noise
        )
        for t in range(T)
    ]
    ego = [motion.ego_step() for _ in range(T - 1)]
    return SceneSequence(frames, ego, seed)
