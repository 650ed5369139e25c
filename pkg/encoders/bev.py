# encoders/bev.py
"""Both modalities onto one ground-plane grid.

Rows index y and columns index x; cell (0, 0) has its lower-left corner at
the grid origin.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from domain.boxes import N_VIEWS, PointCloud
from domain.errors import ArgumentError, ConfigurationError, DimensionError, StorageError
from domain.view_geometry import ViewGeometry
from utils.config import GridConfig, validate_grid

logger = logging.getLogger(__name__)


@dataclass
class BevGrid:
    features: Tensor
    origin: Tuple[float, float]
    cell_size: Tuple[float, float]
    z_edges: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        self.features = as_tensor(self.features)
        if self.features.ndim != 3:
            raise DimensionError("BevGrid", self.features.shape)

    @property
    def channels(self) -> int:
        return self.features.shape[0]

    @property
    def hw(self) -> Tuple[int, int]:
        return self.features.shape[1], self.features.shape[2]

    def with_features(self, features) -> "BevGrid":
        return BevGrid(features, self.origin, self.cell_size, self.z_edges)

    @classmethod
    def zeros(cls, channels: int, grid: GridConfig) -> "BevGrid":
        return cls(
            np.zeros((channels, grid.height, grid.width)),
            grid.origin,
            tuple(grid.cell_size),
            tuple(grid.z_edges),
        )


def cell_index(xy: np.ndarray, grid: GridConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(row, col, inside-window mask) for ground-plane points."""
    ox, oy = grid.origin
    dx, dy = grid.cell_size
    col = np.floor((xy[:, 0] - ox) / dx).astype(np.int64)
    row = np.floor((xy[:, 1] - oy) / dy).astype(np.int64)
    inside = (col >= 0) & (col < grid.width) & (row >= 0) & (row < grid.height)
    return row, col, inside


def voxelize(cloud: PointCloud, grid: GridConfig) -> BevGrid:
    """Per-cell log1p point counts per z bin, plus mean intensity as the last channel."""
    validate_grid(grid)
    n_z = grid.n_z
    out = np.zeros((n_z + 1, grid.height, grid.width))
    pts = cloud.points
    if len(pts):
        # canonical order makes the float accumulation independent of point order
        pts = pts[np.lexsort((pts[:, 3], pts[:, 2], pts[:, 1], pts[:, 0]))]
        row, col, inside = cell_index(pts[:, :2], grid)
        zb = np.floor((pts[:, 2] - grid.z_min) / grid.z_bin).astype(np.int64)
        inside &= (zb >= 0) & (zb < n_z)
        row, col, zb, intensity = row[inside], col[inside], zb[inside], pts[inside, 3]
        counts = np.zeros((n_z, grid.height, grid.width))
        np.add.at(counts, (zb, row, col), 1.0)
        total = counts.sum(axis=0)
        isum = np.zeros((grid.height, grid.width))
        np.add.at(isum, (row, col), intensity)
        out[:n_z] = np.log1p(counts)
        out[n_z] = np.divide(isum, total, out=np.zeros_like(isum), where=total > 0)
    return BevGrid(out, grid.origin, tuple(grid.cell_size), tuple(grid.z_edges))


@functools.lru_cache(maxsize=32)
def _splat_matrix(
    geometry: ViewGeometry,
    depth_bins: int,
    origin: Tuple[float, float],
    cell_size: Tuple[float, float],
    hw: Tuple[int, int],
) -> np.ndarray:
    """0/1 matrix (H*W, 6*W_v*D) sending each (view, column, depth bin) ray sample to its cell."""
    height, width = hw
    az = np.stack([geometry.column_azimuth(k) for k in range(N_VIEWS)])  # (6, W_v)
    r = geometry.depth_centers(depth_bins)  # (D,)
    x = (np.cos(az)[..., None] * r).ravel()
    y = (np.sin(az)[..., None] * r).ravel()
    col = np.floor((x - origin[0]) / cell_size[0]).astype(np.int64)
    row = np.floor((y - origin[1]) / cell_size[1]).astype(np.int64)
    if np.any((col < 0) | (col >= width) | (row < 0) | (row >= height)):
        raise ConfigurationError(
            f"lift_splat: depth range up to {geometry.depth_max} m leaves the BEV window"
        )
    m = np.zeros((height * width, x.size))
    m[row * width + col, np.arange(x.size)] = 1.0
    m.setflags(write=False)
    return m


def splat_matrix(geometry: ViewGeometry, depth_bins: int, grid: GridConfig) -> np.ndarray:
    return _splat_matrix(
        geometry,
        depth_bins,
        tuple(grid.origin),
        tuple(grid.cell_size),
        (grid.height, grid.width),
    )


def column_features(views) -> Tensor:
    """(6, W_v, C) mean over image rows of each view column."""
    views = as_tensor(views)
    if views.ndim != 4 or views.shape[0] != N_VIEWS:
        raise DimensionError("column_features", views.shape)
    return ops.transpose(ops.mean(views, axis=2), (0, 2, 1))


def depth_distribution(
    col_feat: Tensor, depth_weights: Optional[Tuple[Tensor, Tensor]], depth_bins: int
) -> Tensor:
    """(6, W_v, D) softmax over depth bins; uniform without weights."""
    n_views, width, _ = col_feat.shape
    if depth_weights is None:
        return Tensor(np.full((n_views, width, depth_bins), 1.0 / depth_bins))
    w, b = depth_weights
    if w.shape[1] != depth_bins:
        raise DimensionError("depth_distribution", w.shape, (col_feat.shape[-1], depth_bins))
    return ops.softmax_rows(ops.add(ops.matmul(col_feat, w), b))


def lift_splat(
    views,
    geometry: ViewGeometry,
    depth_bins: int,
    grid: GridConfig,
    depth_weights: Optional[Tuple[Tensor, Tensor]] = None,
    depth_probs=None,
) -> BevGrid:
    """Lift every view column along its ray over a depth distribution, splat additively.

    The distribution is `softmax(colfeat @ W_d + b_d)` when `depth_weights`
    is given, the explicit `depth_probs` (6, W_v, D) when injected, and
    uniform otherwise.
    """
    if depth_bins < 1:
        raise ArgumentError(f"lift_splat: depth_bins must be >= 1, got {depth_bins}")
    views = as_tensor(views)
    if tuple(views.shape[1:]) != geometry.shape:
        raise ConfigurationError(
            f"lift_splat: view shape {views.shape[1:]} does not match geometry {geometry.shape}"
        )
    validate_grid(grid)
    col = column_features(views)
    if depth_probs is not None:
        probs = as_tensor(depth_probs)
        if probs.shape != (N_VIEWS, geometry.width, depth_bins):
            raise DimensionError("lift_splat", probs.shape, (N_VIEWS, geometry.width, depth_bins))
    else:
        probs = depth_distribution(col, depth_weights, depth_bins)
    channels = geometry.channels
    lifted = ops.mul(
        ops.reshape(probs, (N_VIEWS, geometry.width, depth_bins, 1)),
        ops.reshape(col, (N_VIEWS, geometry.width, 1, channels)),
    )
    lifted = ops.reshape(lifted, (N_VIEWS * geometry.width * depth_bins, channels))
    bev = ops.matmul(splat_matrix(geometry, depth_bins, grid), lifted)  # (H*W, C)
    features = ops.reshape(ops.transpose(bev), (channels, grid.height, grid.width))
    return BevGrid(features, grid.origin, tuple(grid.cell_size), tuple(grid.z_edges))


def dump_grid_csv(grid: BevGrid, out_dir, prefix: str = "bev") -> List[Path]:
    """One CSV per channel: rows are grid rows (y), columns grid columns (x)."""
    out_dir = Path(out_dir)
    paths = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for c in range(grid.channels):
            path = out_dir / f"{prefix}_ch{c:02d}.csv"
            pd.DataFrame(grid.features.values[c]).to_csv(path, index_label="row")
            paths.append(path)
    except OSError as e:
        raise StorageError(f"cannot write BEV dump to {out_dir}: {e}") from None
    logger.debug(f"Dumped {len(paths)} BEV channels to {out_dir}")
    return paths

