# domain/corruption_types.py

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

from domain.errors import ArgumentError, ConfigurationError


class CorruptionKind(Enum):
    NONE = "none"
    LIMITED_FOV = "limited_fov"  # LiDAR points kept inside an azimuth interval
    OBJECT_DROP = "object_drop"  # LiDAR points removed inside boxes
    CAMERA_MISSING_FRONT = "camera_missing_front"
    CAMERA_PRESERVE_FRONT_ONLY = "camera_preserve_front_only"
    OBJECT_OCCLUSION = "object_occlusion"  # camera cells masked inside footprints


class Modality(Enum):
    NONE = "none"
    LIDAR = "lidar"
    CAMERA = "camera"


MODALITY_OF = {
    CorruptionKind.NONE: Modality.NONE,
    CorruptionKind.LIMITED_FOV: Modality.LIDAR,
    CorruptionKind.OBJECT_DROP: Modality.LIDAR,
    CorruptionKind.CAMERA_MISSING_FRONT: Modality.CAMERA,
    CorruptionKind.CAMERA_PRESERVE_FRONT_ONLY: Modality.CAMERA,
    CorruptionKind.OBJECT_OCCLUSION: Modality.CAMERA,
}

_PARAM_KEYS = {
    CorruptionKind.NONE: set(),
    CorruptionKind.LIMITED_FOV: {"theta_min", "theta_max"},
    CorruptionKind.OBJECT_DROP: {"rate", "bernoulli"},
    CorruptionKind.CAMERA_MISSING_FRONT: set(),
    CorruptionKind.CAMERA_PRESERVE_FRONT_ONLY: set(),
    CorruptionKind.OBJECT_OCCLUSION: {"rate"},
}


@dataclass(frozen=True)
class CorruptionSpec:
    """One malfunction scenario: kind, kind-specific params and a seed."""

    kind: CorruptionKind
    params: Dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        kind = self.kind if isinstance(self.kind, CorruptionKind) else _parse_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        unknown = set(self.params) - _PARAM_KEYS[kind]
        if unknown:
            raise ConfigurationError(f"{kind.value}: unknown params {sorted(unknown)}")
        params = dict(self.params)
        if kind is CorruptionKind.LIMITED_FOV:
            lo = float(params.get("theta_min", -math.pi))
            hi = float(params.get("theta_max", math.pi))
            if lo > hi:
                raise ArgumentError(f"limited_fov: theta_min {lo} > theta_max {hi}")
            if lo < -math.pi - 1e-12 or hi > math.pi + 1e-12:
                raise ArgumentError("limited_fov: angles must lie in [-pi, pi]")
            params.update(theta_min=lo, theta_max=hi)
        if "rate" in _PARAM_KEYS[kind]:
            rate = float(params.get("rate", 0.5))
            if not 0.0 <= rate <= 1.0:
                raise ArgumentError(f"{kind.value}: rate {rate} outside [0, 1]")
            params["rate"] = rate
        object.__setattr__(self, "params", params)

    @property
    def modality(self) -> Modality:
        return MODALITY_OF[self.kind]

    @property
    def severity(self) -> float:
        """Fraction of signal removed, in [0, 1]."""
        kind = self.kind
        if kind is CorruptionKind.NONE:
            return 0.0
        if kind is CorruptionKind.LIMITED_FOV:
            kept = (self.params["theta_max"] - self.params["theta_min"]) / (2.0 * math.pi)
            return float(min(1.0, max(0.0, 1.0 - kept)))
        if kind in (CorruptionKind.OBJECT_DROP, CorruptionKind.OBJECT_OCCLUSION):
            return float(self.params["rate"])
        if kind is CorruptionKind.CAMERA_MISSING_FRONT:
            return 1.0 / 6.0
        return 5.0 / 6.0

    def with_seed(self, seed: int) -> "CorruptionSpec":
        return CorruptionSpec(self.kind, dict(self.params), seed)

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "params": dict(self.params), "seed": self.seed}


def _parse_kind(value) -> CorruptionKind:
    try:
        return CorruptionKind(str(value))
    except ValueError:
        known = ", ".join(k.value for k in CorruptionKind)
        raise ConfigurationError(f"unknown corruption kind {value!r} (known: {known})") from None


@dataclass(frozen=True)
class NamedScenario:
    name: str
    spec: CorruptionSpec


@dataclass
class ScenarioTable:
    """Ordered, uniquely-named corruption scenarios."""

    entries: List[NamedScenario] = field(default_factory=list)

    def __post_init__(self) -> None:
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"scenario names must be unique: {names}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def names(self) -> List[str]:
        return [e.name for e in self.entries]

    def get(self, name: str) -> Optional[CorruptionSpec]:
        for e in self.entries:
            if e.name == name:
                return e.spec
        return None

    def subset(self, names: List[str]) -> "ScenarioTable":
        return ScenarioTable([e for e in self.entries if e.name in set(names)])
