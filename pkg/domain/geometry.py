# domain/geometry.py
"""Ground-plane geometry for oriented boxes."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from shapely.geometry import Polygon

from domain.boxes import Box3D
from domain.errors import ArgumentError

CONTAINMENT_TOL = 1e-9


def bev_corners(box: Box3D) -> np.ndarray:
    """Four (x, y) footprint corners, counter-clockwise."""
    w, l, _ = box.size
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    local = np.array(
        [[l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2], [l / 2, -w / 2]], dtype=np.float64
    )
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array(box.center[:2])


def box_polygon(box: Box3D) -> Polygon:
    return Polygon(bev_corners(box))


def points_in_box(xyz: np.ndarray, box: Box3D, tol: float = CONTAINMENT_TOL) -> np.ndarray:
    """Yaw-aware containment mask; boundary points count as inside."""
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    w, l, h = box.size
    d = xyz - np.array(box.center)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    along = d[:, 0] * c + d[:, 1] * s
    across = -d[:, 0] * s + d[:, 1] * c
    return (
        (np.abs(along) <= l / 2 + tol)
        & (np.abs(across) <= w / 2 + tol)
        & (np.abs(d[:, 2]) <= h / 2 + tol)
    )


def tag_points(xyz: np.ndarray, boxes: Sequence[Box3D]) -> np.ndarray:
    """Index of the first box containing each point, -1 if none."""
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    tags = np.full(len(xyz), -1, dtype=np.int64)
    for i, box in enumerate(boxes):
        inside = points_in_box(xyz, box) & (tags < 0)
        tags[inside] = i
    return tags


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Rotated-rectangle IoU in the ground plane."""
    pa, pb = box_polygon(a), box_polygon(b)
    if pa.area <= 0.0 or pb.area <= 0.0:
        raise ArgumentError("bev_iou: zero-area box")
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    return float(min(1.0, max(0.0, inter / union)))


def bev_iou_matrix(a: Sequence[Box3D], b: Sequence[Box3D]) -> np.ndarray:
    out = np.zeros((len(a), len(b)))
    polys_b = [box_polygon(x) for x in b]
    for i, box in enumerate(a):
        pa = box_polygon(box)
        for j, pb in enumerate(polys_b):
            if not pa.intersects(pb):
                continue
            inter = pa.intersection(pb).area
            out[i, j] = inter / (pa.area + pb.area - inter)
    return out


def center_distance(a: Box3D, b: Box3D) -> float:
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
