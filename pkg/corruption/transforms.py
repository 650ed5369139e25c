# corruption/transforms.py
"""Sensor-malfunction transforms. None of them adds points or feature energy."""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from domain.boxes import N_VIEWS, Box3D, Frame, PointCloud, SceneSequence
from domain.corruption_types import CorruptionKind, CorruptionSpec
from domain.errors import ArgumentError, ConfigurationError
from domain.view_geometry import ViewGeometry
from generator.sensors import project_footprints
from utils.seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

CAMERA_MODES = ("missing_front", "preserve_front_only")


def _check_rate(rate: float, op: str) -> float:
    rate = float(rate)
    if not 0.0 <= rate <= 1.0:
        raise ArgumentError(f"{op}: rate {rate} outside [0, 1]")
    return rate


def limit_fov(cloud: PointCloud, theta_min: float, theta_max: float) -> PointCloud:
    """Keep points with azimuth atan2(y, x) in [theta_min, theta_max]; order preserved.

    An interval with theta_min == theta_max (for example (-0, 0)) keeps nothing.
    """
    if theta_min > theta_max:
        raise ArgumentError(f"limit_fov: theta_min {theta_min} > theta_max {theta_max}")
    if theta_min < -math.pi or theta_max > math.pi:
        raise ArgumentError("limit_fov: angles must lie in [-pi, pi]")
    if theta_min == theta_max:
        return cloud.subset(np.zeros(len(cloud), dtype=bool))
    az = np.arctan2(cloud.points[:, 1], cloud.points[:, 0])
    return cloud.subset((az >= theta_min) & (az <= theta_max))


def drop_object_points(
    cloud: PointCloud,
    boxes: Sequence[Box3D],
    rate: float,
    seed: int,
    bernoulli: bool = False,
) -> PointCloud:
    """Remove floor(rate * n) of each box's returns (or each with probability rate).

    A box's returns are the points tagged with its index, falling back to
    containment for points the sensor left untagged.
    """
    rate = _check_rate(rate, "drop_object_points")
    if rate == 0.0 or not len(cloud):
        return cloud
    rng = rng_for(seed, "drop_object_points")
    tags = cloud.retag(boxes).box_index
    keep = np.ones(len(cloud), dtype=bool)
    for index in range(len(boxes)):
        inside = np.flatnonzero(tags == index)
        if bernoulli:
            keep[inside[rng.random(len(inside)) < rate]] = False
        else:
            n_drop = int(math.floor(rate * len(inside)))
            keep[rng.permutation(inside)[:n_drop]] = False
    return PointCloud(cloud.points[keep], tags[keep])


def camera_failure(views: np.ndarray, mode, front_index: int = 0) -> np.ndarray:
    """missing_front zeroes the front view; preserve_front_only zeroes the other five."""
    if isinstance(mode, CorruptionKind):
        mode = {
            CorruptionKind.CAMERA_MISSING_FRONT: "missing_front",
            CorruptionKind.CAMERA_PRESERVE_FRONT_ONLY: "preserve_front_only",
        }.get(mode, mode.value)
    if mode not in CAMERA_MODES:
        raise ConfigurationError(f"unknown camera failure mode {mode!r}")
    out = np.array(views, dtype=np.float64, copy=True)
    if out.shape[0] != N_VIEWS:
        raise ArgumentError(f"camera_failure: expected {N_VIEWS} views, got {out.shape[0]}")
    if mode == "missing_front":
        out[front_index] = 0.0
    else:
        others = [k for k in range(N_VIEWS) if k != front_index]
        out[others] = 0.0
    return out


def occlude_objects(
    views: np.ndarray,
    boxes: Sequence[Box3D],
    geometry: ViewGeometry,
    rate: float,
    seed: int,
) -> np.ndarray:
    """Zero floor(rate * n_cells) cells (all channels) of every projected box footprint."""
    rate = _check_rate(rate, "occlude_objects")
    out = np.array(views, dtype=np.float64, copy=True)
    if rate == 0.0:
        return out
    rng = rng_for(seed, "occlude_objects")
    for fp in project_footprints(boxes, geometry):
        cells = fp.cells()
        n_mask = int(math.floor(rate * len(cells)))
        picked = cells[rng.permutation(len(cells))[:n_mask]]
        out[fp.view, :, picked[:, 0], picked[:, 1]] = 0.0
    return out


def corrupt_frame(frame: Frame, spec: CorruptionSpec, geometry: ViewGeometry, seed: int) -> Frame:
    kind, p = spec.kind, spec.params
    if kind is CorruptionKind.NONE:
        return frame
    if kind is CorruptionKind.LIMITED_FOV:
        return frame.with_cloud(limit_fov(frame.cloud, p["theta_min"], p["theta_max"]))
    if kind is CorruptionKind.OBJECT_DROP:
        cloud = drop_object_points(
            frame.cloud, frame.gt_boxes, p["rate"], seed, bernoulli=bool(p.get("bernoulli", False))
        )
        return frame.with_cloud(cloud)
    if kind in (CorruptionKind.CAMERA_MISSING_FRONT, CorruptionKind.CAMERA_PRESERVE_FRONT_ONLY):
        return frame.with_views(camera_failure(frame.views, kind, geometry.front_index))
    if kind is CorruptionKind.OBJECT_OCCLUSION:
        views = occlude_objects(frame.views, frame.gt_boxes, geometry, p["rate"], seed)
        return frame.with_views(views)
    raise ConfigurationError(f"unhandled corruption kind {kind}")


def corrupt_sequence(
    sequence: SceneSequence, spec: CorruptionSpec, geometry: ViewGeometry
) -> SceneSequence:
    """The malfunction persists over every frame; frame t draws from seed (spec.seed, t)."""
    if spec.kind is CorruptionKind.NONE:
        return sequence
    frames = [
        corrupt_frame(f, spec, geometry, derive_seed(spec.seed, f"frame/{f.t}"))
        for f in sequence.frames
    ]
    return SceneSequence(frames, list(sequence.ego_motion), sequence.seed)
