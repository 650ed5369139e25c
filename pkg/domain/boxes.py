# domain/boxes.py

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from domain.errors import ArgumentError

N_VIEWS = 6

# Size templates (w, l, h) in meters, cycled when more classes are requested.
CLASS_TEMPLATES: Tuple[Tuple[str, Tuple[float, float, float]], ...] = (
    ("car", (1.9, 4.4, 1.6)),
    ("pedestrian", (0.7, 0.7, 1.75)),
    ("cyclist", (0.7, 1.8, 1.5)),
    ("truck", (2.5, 7.0, 3.0)),
)


def class_name(class_id: int) -> str:
    name, _ = CLASS_TEMPLATES[class_id % len(CLASS_TEMPLATES)]
    return name if class_id < len(CLASS_TEMPLATES) else f"{name}_{class_id}"


def class_template(class_id: int) -> Tuple[float, float, float]:
    return CLASS_TEMPLATES[class_id % len(CLASS_TEMPLATES)][1]


def normalize_yaw(yaw: float) -> float:
    """Wrap into [-pi, pi); values already in range are returned unchanged."""
    if -math.pi <= yaw < math.pi:
        return yaw
    wrapped = (yaw + math.pi) % (2.0 * math.pi) - math.pi
    return -math.pi if wrapped >= math.pi else wrapped


@dataclass(frozen=True)
class Box3D:
    """Oriented box resting in the ego frame; `l` runs along the heading."""

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float
    class_id: int
    velocity: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if len(self.center) != 3 or len(self.size) != 3 or len(self.velocity) != 2:
            raise ArgumentError("Box3D: center/size need 3 entries, velocity 2")
        if any(not (s > 0.0) for s in self.size):
            raise ArgumentError(f"Box3D: sizes must be positive, got {self.size}")
        if self.class_id < 0:
            raise ArgumentError(f"Box3D: negative class id {self.class_id}")
        values = (*self.center, *self.size, self.yaw, *self.velocity)
        if not all(math.isfinite(v) for v in values):
            raise ArgumentError("Box3D: non-finite field")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))
        object.__setattr__(self, "class_id", int(self.class_id))

    @property
    def range_m(self) -> float:
        return math.hypot(self.center[0], self.center[1])

    @property
    def azimuth(self) -> float:
        return math.atan2(self.center[1], self.center[0])

    def moved(self, dt: float) -> "Box3D":
        vx, vy = self.velocity
        x, y, z = self.center
        center = (x + vx * dt, y + vy * dt, z)
        return Box3D(center, self.size, self.yaw, self.class_id, self.velocity)

    def as_dict(self) -> dict:
        return {
            "center": list(self.center),
            "size": list(self.size),
            "yaw": self.yaw,
            "class_id": self.class_id,
            "velocity": list(self.velocity),
        }


@dataclass
class PointCloud:
    """N x 4 rows of (x, y, z, intensity); `box_index` tags points inside a box (-1 otherwise)."""

    points: np.ndarray
    box_index: np.ndarray = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        if not np.all(np.isfinite(pts)):
            raise ArgumentError("PointCloud: non-finite coordinates")
        self.points = pts
        if self.box_index is None:
            self.box_index = np.full(len(pts), -1, dtype=np.int64)
        else:
            self.box_index = np.asarray(self.box_index, dtype=np.int64).reshape(-1)
        if len(self.box_index) != len(pts):
            raise ArgumentError("PointCloud: box_index length differs from point count")

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 4)))

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, keep) -> "PointCloud":
        """Rows selected by a boolean mask or sorted index array; order preserved."""
        keep = np.asarray(keep)
        if keep.dtype != bool:
            keep = np.sort(keep)
        return PointCloud(self.points[keep], self.box_index[keep])

    def retag(self, boxes: Sequence[Box3D]) -> "PointCloud":
        """Source tags are kept; untagged points get the first box containing them."""
        from domain.geometry import tag_points

        if np.any(self.box_index >= len(boxes)):
            raise ArgumentError(
                f"PointCloud: box tag {int(self.box_index.max())} but only {len(boxes)} boxes"
            )
        tags = self.box_index.copy()
        untagged = tags < 0
        if boxes and np.any(untagged):
            tags[untagged] = tag_points(self.points[untagged, :3], boxes)
        return PointCloud(self.points, tags)


@dataclass
class Frame:
    t: int
    cloud: PointCloud
    views: np.ndarray
    gt_boxes: List[Box3D] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.views = np.asarray(self.views, dtype=np.float64)
        if self.views.ndim != 4 or self.views.shape[0] != N_VIEWS:
            raise ArgumentError(
                f"Frame: expected {N_VIEWS} views of shape C x H x W, got {self.views.shape}"
            )

    def with_cloud(self, cloud: PointCloud) -> "Frame":
        return Frame(self.t, cloud, self.views, list(self.gt_boxes))

    def with_views(self, views: np.ndarray) -> "Frame":
        return Frame(self.t, self.cloud, views, list(self.gt_boxes))


@dataclass(frozen=True)
class EgoStep:
    """Planar ego transform between consecutive frames."""

    dx: float = 0.0
    dy: float = 0.0
    dyaw: float = 0.0


@dataclass
class SceneSequence:
    frames: List[Frame]
    ego_motion: List[EgoStep] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.frames:
            raise ArgumentError("Sequence: needs at least one frame")
        if not self.ego_motion:
            self.ego_motion = [EgoStep() for _ in range(len(self.frames) - 1)]
        if len(self.ego_motion) != len(self.frames) - 1:
            raise ArgumentError("Sequence: ego_motion needs one step per frame transition")

    @property
    def T(self) -> int:
        return len(self.frames)

    @property
    def current(self) -> Frame:
        return self.frames[-1]

    def map_frames(self, fn) -> "SceneSequence":
        return SceneSequence([fn(f) for f in self.frames], list(self.ego_motion), self.seed)


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ArgumentError(f"Detection: score {self.score} outside [0, 1]")
        object.__setattr__(self, "score", float(self.score))

    @property
    def class_id(self) -> int:
        return self.box.class_id
