# utils/config.py
"""Experiment configuration: YAML file + `--set key=value` overrides.

Unknown keys at any level are rejected. Validation runs once, before any
command does work.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from domain.errors import ConfigurationError
from domain.view_geometry import ViewGeometry

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS: Tuple[float, float, float, float] = (1.0, 0.1, 0.2, 0.05)
FUSION_MODES = ("add", "cross_image", "cross_lidar", "mca", "cw_mca")
STFA_MODES = ("full", "spatial", "temporal", "off")


@dataclass
class DatasetConfig:
    train_scenes: int = 64
    test_scenes: int = 32
    T: int = 3
    n_objects: int = 4
    n_points: int = 2048
    noise_sigma: float = 0.02
    class_count: int = 3
    scene_extent: float = 18.0
    dt: float = 0.5
    max_speed: float = 1.0
    ego_velocity: Tuple[float, float] = (0.0, 0.0)
    ego_yaw_rate: float = 0.0
    view_noise: float = 0.05
    path: Optional[str] = None


@dataclass
class GridConfig:
    extent_m: float = 24.0
    cell_size: Tuple[float, float] = (0.75, 0.75)
    z_min: float = -0.5
    z_max: float = 3.5
    z_bin: float = 1.0

    @property
    def width(self) -> int:
        return int(round(self.extent_m / self.cell_size[0]))

    @property
    def height(self) -> int:
        return int(round(self.extent_m / self.cell_size[1]))

    @property
    def origin(self) -> Tuple[float, float]:
        return (-self.extent_m / 2.0, -self.extent_m / 2.0)

    @property
    def z_edges(self) -> List[float]:
        n = int(round((self.z_max - self.z_min) / self.z_bin))
        return [self.z_min + i * self.z_bin for i in range(n + 1)]

    @property
    def n_z(self) -> int:
        return len(self.z_edges) - 1


@dataclass
class ViewConfig:
    height: int = 4
    width: int = 16
    depth_code: int = 8
    camera_height: float = 1.0
    vertical_fov_deg: float = 20.0
    depth_min: float = 1.0
    depth_max: float = 11.0


@dataclass
class StfaConfig:
    d: int = 32
    mode: str = "full"
    temporal_pool: str = "mean"
    temporal_reduce: str = "mean"
    exclude_self: bool = False
    ln_eps: float = 1e-5


@dataclass
class ReliabilityConfig:
    hidden: int = 256
    embed_dim: int = 128
    tau: float = 0.07
    symmetric: bool = False
    corruption_rate: float = 0.5


@dataclass
class FusionConfig:
    bev_channels: int = 16
    d_k: int = 32
    mode: str = "cw_mca"
    depth_bins: int = 8
    position_bias: float = 12.0
    pos_dim: int = 16


@dataclass
class HeadConfig:
    hidden: int = 32
    score_threshold: float = 0.3
    nms_iou: float = 0.5
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    ap_iou: float = 0.5


@dataclass
class ModuleToggles:
    stfa_on: bool = True
    cwmca_on: bool = True
    reliability_on: bool = True


@dataclass
class TrainConfig:
    stage: int = 3
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    optimizer: str = "adamw"
    seed: int = 0


def _stage1() -> TrainConfig:
    return TrainConfig(stage=1, epochs=20, batch_size=16, learning_rate=1e-3)


def _stage2() -> TrainConfig:
    return TrainConfig(stage=2, epochs=30, batch_size=16, learning_rate=1e-3)


def _stage3() -> TrainConfig:
    return TrainConfig(stage=3, epochs=20, batch_size=16, learning_rate=1e-4, weight_decay=1e-5)


@dataclass
class TrainingConfig:
    stage1: TrainConfig = field(default_factory=_stage1)
    stage2: TrainConfig = field(default_factory=_stage2)
    stage3: TrainConfig = field(default_factory=_stage3)
    lambdas: Tuple[float, float, float, float] = DEFAULT_LAMBDAS

    def for_stage(self, stage: int) -> TrainConfig:
        return {1: self.stage1, 2: self.stage2, 3: self.stage3}[stage]


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    scenarios: str = "standard"
    eval_seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    views: ViewConfig = field(default_factory=ViewConfig)
    stfa: StfaConfig = field(default_factory=StfaConfig)
    reliability: ReliabilityConfig = field(default_factory=ReliabilityConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    toggles: ModuleToggles = field(default_factory=ModuleToggles)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    @property
    def view_geometry(self) -> ViewGeometry:
        v = self.views
        return ViewGeometry(
            height=v.height,
            width=v.width,
            n_classes=self.dataset.class_count,
            depth_code=v.depth_code,
            depth_min=v.depth_min,
            depth_max=v.depth_max,
            camera_height=v.camera_height,
            vertical_fov_deg=v.vertical_fov_deg,
        )

    @property
    def effective_fusion_mode(self) -> str:
        if not self.toggles.cwmca_on:
            return "add"
        if self.fusion.mode == "cw_mca" and not self.toggles.reliability_on:
            return "mca"
        return self.fusion.mode

    @property
    def effective_stfa_mode(self) -> str:
        return self.stfa.mode if self.toggles.stfa_on else "off"


# ---------- building from plain data ----------
def _coerce(tp, value, where: str, base=None):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where, base)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if origin in (tuple, Tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{where}: expected a sequence, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, where) for v in value)
        if len(value) != len(args):
            raise ConfigurationError(f"{where}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(a, v, where) for a, v in zip(args, value))
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{where}: expected a list, got {value!r}")
        return [_coerce(args[0], v, where) for v in value]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        return str(value)
    return value


def _build(cls, data: Any, where: str, base=None):
    """Instance of `cls` from a mapping; unspecified fields keep the values of `base`."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where or 'config'}: expected a mapping, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"{where or 'config'}: unknown keys {unknown}")
    base = base if base is not None else cls()
    kwargs = {}
    for name, value in data.items():
        path = f"{where}.{name}" if where else name
        kwargs[name] = _coerce(hints[name], value, path, getattr(base, name))
    return dataclasses.replace(base, **kwargs)


def parse_override(text: str) -> Tuple[List[str], Any]:
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as e:
        raise ConfigurationError(f"override {text!r}: {e}") from None
    return key.split("."), value


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    for text in overrides:
        path, value = parse_override(text)
        node = data
        for part in path[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            if not isinstance(child, dict):
                raise ConfigurationError(f"override {text!r}: {part} is not a section")
            node = child
        node[path[-1]] = value
    return data


def config_from_dict(data: Dict[str, Any], overrides: Sequence[str] = ()) -> ExperimentConfig:
    data = apply_overrides(dict(data or {}), overrides)
    cfg = _build(ExperimentConfig, data, "")
    validate(cfg)
    return cfg


def load_config(path: str | os.PathLike | None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    data: Dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except OSError as e:
            raise ConfigurationError(f"cannot read config {p}: {e}") from None
        except yaml.YAMLError as e:
            raise ConfigurationError(f"invalid YAML in {p}: {e}") from None
        logger.info(f"Loaded config from {p}")
    return config_from_dict(data, overrides)


def config_to_dict(cfg) -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = config_to_dict(value)
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def dump_config(cfg: ExperimentConfig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True), encoding="utf-8")


# ---------- validation ----------
def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigurationError(message)


def validate_grid(grid: GridConfig) -> None:
    dx, dy = grid.cell_size
    _require(dx > 0 and dy > 0 and grid.z_bin > 0, "grid: cell sizes must be positive")
    _require(grid.extent_m > 0, "grid: extent must be positive")
    for extent, cells, cell in ((grid.extent_m, grid.width, dx), (grid.extent_m, grid.height, dy)):
        _require(cells >= 1, "grid: at least one cell per axis")
        _require(
            math.isclose(cells * cell, extent, rel_tol=1e-9),
            f"grid: {cells} cells of {cell} m do not cover the {extent} m window",
        )
    _require(grid.z_max > grid.z_min, "grid: z_max must exceed z_min")
    _require(
        math.isclose(grid.n_z * grid.z_bin, grid.z_max - grid.z_min, rel_tol=1e-9),
        "grid: z range is not a whole number of z bins",
    )


def validate(cfg: ExperimentConfig) -> None:
    d = cfg.dataset
    _require(d.train_scenes >= 0 and d.test_scenes >= 0, "dataset: scene counts must be >= 0")
    _require(d.T >= 1, "dataset: T must be >= 1")
    _require(d.n_objects >= 0 and d.n_points >= 0, "dataset: counts must be >= 0")
    _require(d.class_count >= 1, "dataset: class_count must be >= 1")
    _require(d.scene_extent > 0 and d.dt > 0, "dataset: extent and dt must be positive")
    _require(d.noise_sigma >= 0 and d.view_noise >= 0, "dataset: noise levels must be >= 0")

    validate_grid(cfg.grid)
    geometry = cfg.view_geometry
    half = cfg.grid.extent_m / 2.0
    _require(
        geometry.depth_max < half,
        f"views: depth_max {geometry.depth_max} m leaves the {cfg.grid.extent_m} m BEV window",
    )
    _require(d.scene_extent / 2.0 <= half, "dataset: scene extent exceeds the BEV window")

    _require(cfg.stfa.d > 0, "stfa: d must be positive")
    _require(cfg.stfa.mode in STFA_MODES, f"stfa: mode must be one of {STFA_MODES}")
    _require(cfg.stfa.temporal_pool in ("mean", "concat"), "stfa: temporal_pool is mean|concat")
    _require(cfg.stfa.temporal_reduce in ("mean", "sum"), "stfa: temporal_reduce is mean|sum")

    r = cfg.reliability
    _require(r.tau > 0, "reliability: tau must be positive")
    _require(r.hidden > 0 and r.embed_dim > 0, "reliability: dims must be positive")
    _require(0.0 <= r.corruption_rate <= 1.0, "reliability: corruption_rate must be in [0, 1]")

    f = cfg.fusion
    _require(f.d_k > 0 and f.bev_channels > 0, "fusion: dims must be positive")
    _require(f.depth_bins >= 1, "fusion: depth_bins must be >= 1")
    _require(f.mode in FUSION_MODES, f"fusion: mode must be one of {FUSION_MODES}")
    _require(f.pos_dim >= 4 and f.pos_dim % 4 == 0, "fusion: pos_dim must be a multiple of 4")

    h = cfg.head
    _require(0.0 <= h.score_threshold <= 1.0, "head: score_threshold must be in [0, 1]")
    _require(0.0 < h.nms_iou <= 1.0 and 0.0 < h.ap_iou <= 1.0, "head: IoU thresholds in (0, 1]")

    for stage in (1, 2, 3):
        t = cfg.training.for_stage(stage)
        _require(t.stage == stage, f"training.stage{stage}: stage field must be {stage}")
        _require(t.epochs >= 0, f"training.stage{stage}: epochs must be >= 0")
        _require(t.batch_size >= 1, f"training.stage{stage}: batch_size must be >= 1")
        _require(t.learning_rate > 0, f"training.stage{stage}: learning_rate must be positive")
        _require(t.weight_decay >= 0, f"training.stage{stage}: weight_decay must be >= 0")
        _require(t.optimizer in ("adamw", "sgd"), f"training.stage{stage}: optimizer adamw|sgd")
    _require(len(cfg.eval_seeds) >= 1, "eval_seeds: at least one seed")
