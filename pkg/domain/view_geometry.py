# domain/view_geometry.py

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from domain.boxes import N_VIEWS
from domain.errors import ConfigurationError

SECTOR = 2.0 * math.pi / N_VIEWS


@dataclass(frozen=True)
class ViewGeometry:
    """Six pinhole views at fixed 60-degree azimuth sectors.

    View k is centred on azimuth k * 60 degrees and covers
    [center - 30, center + 30). View 0 (azimuth 0, +x) is the front camera.
    Channels are laid out as `n_classes` class channels followed by
    `depth_code` range-code channels.
    """

    height: int = 4
    width: int = 16
    n_classes: int = 3
    depth_code: int = 8
    depth_min: float = 1.0
    depth_max: float = 11.0
    camera_height: float = 1.0
    vertical_fov_deg: float = 20.0
    front_index: int = 0

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 2:
            raise ConfigurationError("view geometry: height >= 1 and width >= 2 required")
        if self.n_classes < 1 or self.depth_code < 0:
            raise ConfigurationError("view geometry: bad channel layout")
        if not 0.0 < self.depth_min < self.depth_max:
            raise ConfigurationError("view geometry: need 0 < depth_min < depth_max")
        if not 0.0 < self.vertical_fov_deg < 90.0:
            raise ConfigurationError("view geometry: vertical FOV must be in (0, 90) degrees")

    @property
    def channels(self) -> int:
        return self.n_classes + self.depth_code

    @property
    def shape(self) -> tuple:
        return (self.channels, self.height, self.width)

    @property
    def focal(self) -> float:
        """Horizontal focal length in columns: +-30 degrees maps onto the image edges."""
        return (self.width / 2.0) / math.tan(SECTOR / 2.0)

    def sector_center(self, k: int) -> float:
        return k * SECTOR

    def view_of(self, azimuth) -> np.ndarray:
        """Index of the view whose sector contains each azimuth (a partition of the circle)."""
        shifted = np.mod(np.asarray(azimuth, dtype=np.float64) + SECTOR / 2.0, 2.0 * math.pi)
        return np.minimum((shifted // SECTOR).astype(np.int64), N_VIEWS - 1)

    def relative_angle(self, azimuth, k: int) -> np.ndarray:
        """Azimuth relative to view k's optical axis, wrapped to [-pi, pi)."""
        rel = np.asarray(azimuth, dtype=np.float64) - self.sector_center(k)
        return np.mod(rel + math.pi, 2.0 * math.pi) - math.pi

    def column_of(self, azimuth, k: int) -> np.ndarray:
        """Continuous pinhole column coordinate for an azimuth seen by view k."""
        rel = self.relative_angle(azimuth, k)
        return self.width / 2.0 + self.focal * np.tan(rel)

    def column_azimuth(self, k: int) -> np.ndarray:
        """Azimuth of every column centre of view k."""
        cols = np.arange(self.width) + 0.5
        return self.sector_center(k) + np.arctan((cols - self.width / 2.0) / self.focal)

    def row_of(self, elevation) -> np.ndarray:
        """Continuous row coordinate (row 0 at the top edge) for an elevation angle."""
        half = math.radians(self.vertical_fov_deg)
        return (half - np.asarray(elevation, dtype=np.float64)) / (2.0 * half) * self.height

    def depth_edges(self, bins: int) -> np.ndarray:
        return np.linspace(self.depth_min, self.depth_max, bins + 1)

    def depth_centers(self, bins: int) -> np.ndarray:
        edges = self.depth_edges(bins)
        return 0.5 * (edges[:-1] + edges[1:])
