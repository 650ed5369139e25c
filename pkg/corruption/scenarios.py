# corruption/scenarios.py
"""Named corruption scenarios: the built-in benchmark table, YAML files and a training sampler."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from domain.corruption_types import CorruptionKind, CorruptionSpec, NamedScenario, ScenarioTable
from domain.errors import ConfigurationError, StorageError

logger = logging.getLogger(__name__)

STANDARD = "standard"


def standard_scenarios() -> ScenarioTable:
    """Clean plus the seven LiDAR and camera malfunction columns of the robustness benchmark."""
    half, third = math.pi / 2, math.pi / 3
    return ScenarioTable(
        [
            NamedScenario("clean", CorruptionSpec(CorruptionKind.NONE)),
            NamedScenario(
                "fov_half_pi",
                CorruptionSpec(CorruptionKind.LIMITED_FOV, {"theta_min": -half, "theta_max": half}),
            ),
            NamedScenario(
                "fov_third_pi",
                CorruptionSpec(
                    CorruptionKind.LIMITED_FOV, {"theta_min": -third, "theta_max": third}
                ),
            ),
            NamedScenario(
                "fov_zero",
                CorruptionSpec(CorruptionKind.LIMITED_FOV, {"theta_min": -0.0, "theta_max": 0.0}),
            ),
            NamedScenario(
                "object_drop_50", CorruptionSpec(CorruptionKind.OBJECT_DROP, {"rate": 0.5})
            ),
            NamedScenario("missing_front", CorruptionSpec(CorruptionKind.CAMERA_MISSING_FRONT)),
            NamedScenario(
                "preserve_front", CorruptionSpec(CorruptionKind.CAMERA_PRESERVE_FRONT_ONLY)
            ),
            NamedScenario(
                "occlusion_50", CorruptionSpec(CorruptionKind.OBJECT_OCCLUSION, {"rate": 0.5})
            ),
        ]
    )


def scenarios_from_data(data, source: str = "<data>") -> ScenarioTable:
    if not isinstance(data, list):
        raise ConfigurationError(f"{source}: expected a list of scenarios")
    entries = []
    for i, item in enumerate(data):
        if not isinstance(item, dict) or "name" not in item or "kind" not in item:
            raise ConfigurationError(f"{source}: entry {i} needs 'name' and 'kind'")
        unknown = set(item) - {"name", "kind", "params", "seed"}
        if unknown:
            raise ConfigurationError(f"{source}: entry {i} has unknown keys {sorted(unknown)}")
        params = dict(item.get("params") or {})
        spec = CorruptionSpec(item["kind"], params, int(item.get("seed", 0)))
        entries.append(NamedScenario(str(item["name"]), spec))
    return ScenarioTable(entries)


def scenarios_to_data(table: ScenarioTable) -> list:
    return [{"name": e.name, **e.spec.as_dict()} for e in table]


def load_scenarios(path) -> ScenarioTable:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"scenario file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"invalid YAML in {path}: {e}") from None
    table = scenarios_from_data(data, str(path))
    logger.info(f"Loaded {len(table)} scenarios from {path}")
    return table


def save_scenarios(path, table: ScenarioTable) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(scenarios_to_data(table), sort_keys=False), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from None


def resolve_scenarios(arg: Optional[str]) -> ScenarioTable:
    """`standard` (or nothing) selects the built-in table, anything else is a YAML path."""
    if arg is None or arg == STANDARD:
        return standard_scenarios()
    return load_scenarios(arg)


class CorruptionSampler:
    """With probability `rate`, a corruption drawn uniformly from the non-clean scenarios."""

    def __init__(self, table: ScenarioTable | None = None, rate: float = 0.5):
        if not 0.0 <= rate <= 1.0:
            raise ConfigurationError(f"corruption rate {rate} outside [0, 1]")
        table = table or standard_scenarios()
        self.choices: List[CorruptionSpec] = [
            e.spec for e in table if e.spec.kind is not CorruptionKind.NONE
        ]
        if rate > 0 and not self.choices:
            raise ConfigurationError("corruption sampler needs at least one non-clean scenario")
        self.rate = rate

    def sample(self, rng: np.random.Generator) -> Optional[CorruptionSpec]:
        if self.rate <= 0.0 or rng.random() >= self.rate:
            return None
        return self.choices[int(rng.integers(len(self.choices)))]
