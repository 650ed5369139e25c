# generator/sensors.py
"""Synthetic sensors: a surface-sampling LiDAR and six class-coded camera feature maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from domain.boxes import N_VIEWS, Box3D, PointCloud
from domain.geometry import bev_corners
from domain.view_geometry import ViewGeometry
from utils.seeding import rng_for

GROUND_FRACTION = 0.3
GROUND_RADIUS_M = 12.0
# Views whose optical axis is this far from a box corner never see the box.
_MAX_VIEW_ANGLE = math.radians(80.0)


def _face_samples(box: Box3D, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points on the five visible faces (no bottom), area-weighted, in world coords."""
    w, l, h = box.size
    areas = np.array([w * h, w * h, l * h, l * h, l * w])
    faces = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.array([l, w, h])
    along, across, up = u[:, 0], u[:, 1], u[:, 2]
    along = np.where(faces == 0, l / 2, np.where(faces == 1, -l / 2, along))
    across = np.where(faces == 2, w / 2, np.where(faces == 3, -w / 2, across))
    up = np.where(faces == 4, h / 2, up)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    x = box.center[0] + c * along - s * across
    y = box.center[1] + s * along + c * across
    z = box.center[2] + up
    return np.stack([x, y, z], axis=1)


def _box_intensity(class_id: int) -> float:
    return 0.35 + 0.2 * (class_id % 4)


def sample_lidar(
    boxes: Sequence[Box3D],
    n_points: int,
    noise_sigma: float,
    seed: int,
    ground_fraction: float = GROUND_FRACTION,
    ground_radius: float = GROUND_RADIUS_M,
) -> PointCloud:
    """Exactly `n_points` returns from box surfaces and a ground disc.

    Coordinates are stored at float32 precision so the binary cloud format
    round-trips bit-exactly. Surface returns carry the index of the box they
    were sampled from, noise or not; ground returns are tagged only when they
    fall inside a box.
    """
    if n_points <= 0:
        return PointCloud.empty()
    rng = rng_for(seed, "sample_lidar")
    n_ground = n_points if not boxes else int(round(ground_fraction * n_points))
    n_surface = n_points - n_ground

    chunks, intensities, sources = [], [], []
    if n_surface:
        areas = np.array([2 * (w * h + l * h) + l * w for w, l, h in (b.size for b in boxes)])
        counts = rng.multinomial(n_surface, areas / areas.sum())
        for index, (box, count) in enumerate(zip(boxes, counts)):
            if count == 0:
                continue
            chunks.append(_face_samples(box, int(count), rng))
            sources.append(np.full(int(count), index, dtype=np.int64))
            jitter = rng.uniform(-0.05, 0.05, size=int(count))
            intensities.append(_box_intensity(box.class_id) + jitter)
    if n_ground:
        r = ground_radius * np.sqrt(rng.uniform(0.0, 1.0, size=n_ground))
        phi = rng.uniform(-math.pi, math.pi, size=n_ground)
        chunks.append(np.stack([r * np.cos(phi), r * np.sin(phi), np.zeros(n_ground)], axis=1))
        intensities.append(rng.uniform(0.0, 0.2, size=n_ground))
        sources.append(np.full(n_ground, -1, dtype=np.int64))

    xyz = np.concatenate(chunks, axis=0)
    if noise_sigma > 0:
        xyz = xyz + rng.normal(0.0, noise_sigma, size=xyz.shape)
    intensity = np.clip(np.concatenate(intensities), 0.0, 1.0)
    order = rng.permutation(n_points)
    points = np.column_stack([xyz, intensity])[order]
    points = points.astype(np.float32).astype(np.float64)
    return PointCloud(points, np.concatenate(sources)[order]).retag(boxes)


@dataclass(frozen=True)
class Footprint:
    """Image-plane rectangle a box covers in one view (rows/cols half-open)."""

    view: int
    box_index: int
    row0: int
    row1: int
    col0: int
    col1: int
    center_column: float
    range_m: float

    @property
    def n_cells(self) -> int:
        return (self.row1 - self.row0) * (self.col1 - self.col0)

    def cells(self) -> np.ndarray:
        rows, cols = np.mgrid[self.row0 : self.row1, self.col0 : self.col1]
        return np.stack([rows.ravel(), cols.ravel()], axis=1)


def _corners_3d(box: Box3D) -> np.ndarray:
    xy = bev_corners(box)
    z0 = box.center[2] - box.size[2] / 2
    z1 = box.center[2] + box.size[2] / 2
    return np.vstack([np.column_stack([xy, np.full(4, z0)]), np.column_stack([xy, np.full(4, z1)])])


def project_footprints(boxes: Sequence[Box3D], geometry: ViewGeometry) -> List[Footprint]:
    """Footprints of every box in every view that sees it, ordered by view then far-to-near."""
    out: List[Footprint] = []
    for index, box in enumerate(boxes):
        corners = _corners_3d(box)
        ground = np.hypot(corners[:, 0], corners[:, 1])
        if np.min(ground) <= 1e-6:
            continue
        azimuth = np.arctan2(corners[:, 1], corners[:, 0])
        elevation = np.arctan2(corners[:, 2] - geometry.camera_height, ground)
        for k in range(N_VIEWS):
            rel = geometry.relative_angle(azimuth, k)
            if np.max(np.abs(rel)) >= _MAX_VIEW_ANGLE:
                continue
            cols = geometry.column_of(azimuth, k)
            col0 = max(0, int(math.floor(cols.min())))
            col1 = min(geometry.width, int(math.ceil(cols.max())))
            rows = geometry.row_of(elevation)
            row0 = max(0, int(math.floor(rows.min())))
            row1 = min(geometry.height, int(math.ceil(rows.max())))
            if col0 >= col1 or row0 >= row1:
                continue
            center_col = float(geometry.column_of(box.azimuth, k))
            out.append(Footprint(k, index, row0, row1, col0, col1, center_col, box.range_m))
    out.sort(key=lambda f: (f.view, -f.range_m, f.box_index))
    return out


def depth_code_index(range_m: float, geometry: ViewGeometry) -> int:
    span = geometry.depth_max - geometry.depth_min
    idx = int(math.floor((range_m - geometry.depth_min) / span * geometry.depth_code))
    return min(max(idx, 0), geometry.depth_code - 1)


def render_views(
    boxes: Sequence[Box3D],
    geometry: ViewGeometry,
    seed: int,
    noise_level: float = 0.05,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Six C x H x W feature maps.

    Footprint cells carry a one-hot class channel and a one-hot range code;
    nearer boxes overwrite farther ones. Everything else is Gaussian
    background noise of std `noise_level`.
    """
    rng = rng_for(seed, "render_views")
    views = np.zeros((N_VIEWS, *geometry.shape))
    if noise_level > 0:
        views += rng.normal(0.0, noise_level, size=views.shape)
    for fp in project_footprints(boxes, geometry):
        box = boxes[fp.box_index]
        patch = np.zeros(geometry.channels)
        patch[box.class_id % geometry.n_classes] = amplitude
        if geometry.depth_code:
            patch[geometry.n_classes + depth_code_index(fp.range_m, geometry)] = amplitude
        views[fp.view, :, fp.row0 : fp.row1, fp.col0 : fp.col1] = patch[:, None, None]
    return views
