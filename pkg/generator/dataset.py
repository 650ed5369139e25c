# generator/dataset.py
"""Train/test splits of synthetic sequences, in memory or on disk.

Layout written by `save_dataset`:

    <root>/manifest.json
    <root>/<split>/scene_0000/frame_0.boxes.txt
    <root>/<split>/scene_0000/frame_0.rfpc
    <root>/<split>/scene_0000/frame_0.views.npy
    <root>/<split>/scene_0000/frame_0.tags.npy

The `.rfpc` cloud format carries no per-point box tags, so the tags the sensor
assigned travel in their own array.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List

import numpy as np

from domain.boxes import EgoStep, Frame, PointCloud, SceneSequence
from domain.errors import ConfigurationError, FormatError, StorageError
from generator.scene_generator import MotionModel, simulate_sequence
from generator.scene_io import read_boxes, read_cloud, write_boxes, write_cloud
from utils.config import ExperimentConfig
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
SPLITS = ("train", "test")


def motion_model(cfg: ExperimentConfig) -> MotionModel:
    d = cfg.dataset
    return MotionModel(dt=d.dt, ego_velocity=tuple(d.ego_velocity), ego_yaw_rate=d.ego_yaw_rate)


def scene_seed(root_seed: int, split: str, index: int) -> int:
    return derive_seed(root_seed, f"scene/{split}/{index}")


def synthesize_split(cfg: ExperimentConfig, split: str) -> List[SceneSequence]:
    if split not in SPLITS:
        raise ConfigurationError(f"unknown split {split!r}")
    d = cfg.dataset
    count = d.train_scenes if split == "train" else d.test_scenes
    geometry = cfg.view_geometry
    motion = motion_model(cfg)
    scenes = [
        simulate_sequence(
            scene_seed(cfg.seed, split, i),
            d.T,
            d.n_objects,
            motion,
            geometry=geometry,
            extent_m=d.scene_extent,
            class_count=d.class_count,
            n_points=d.n_points,
            noise_sigma=d.noise_sigma,
            view_noise=d.view_noise,
            max_speed=d.max_speed,
        )
        for i in range(count)
    ]
    logger.info(f"Synthesized {len(scenes)} {split} scenes (T={d.T}, seed={cfg.seed})")
    return scenes


def _save_array(path: Path, values: np.ndarray) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.save(fh, values, allow_pickle=False)
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from None


def _load_array(path: Path) -> np.ndarray:
    try:
        return np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise StorageError(f"cannot read {path}: {e}") from None


def save_dataset(root, splits: Dict[str, List[SceneSequence]], cfg: ExperimentConfig) -> Path:
    root = Path(root)
    manifest = {
        "version": MANIFEST_VERSION,
        "seed": cfg.seed,
        "T": cfg.dataset.T,
        "class_count": cfg.dataset.class_count,
        "view_shape": list(cfg.view_geometry.shape),
        "splits": {},
    }
    for split, scenes in splits.items():
        entries = []
        for i, seq in enumerate(scenes):
            name = f"scene_{i:04d}"
            scene_dir = root / split / name
            frames = []
            for frame in seq.frames:
                stem = f"frame_{frame.t}"
                write_boxes(scene_dir / f"{stem}.boxes.txt", frame.gt_boxes)
                write_cloud(scene_dir / f"{stem}.rfpc", frame.cloud)
                _save_array(scene_dir / f"{stem}.views.npy", frame.views)
                _save_array(scene_dir / f"{stem}.tags.npy", frame.cloud.box_index)
                frames.append(
                    {
                        "t": frame.t,
                        "boxes": f"{split}/{name}/{stem}.boxes.txt",
                        "cloud": f"{split}/{name}/{stem}.rfpc",
                        "views": f"{split}/{name}/{stem}.views.npy",
                        "tags": f"{split}/{name}/{stem}.tags.npy",
                    }
                )
            entries.append(
                {
                    "name": name,
                    "seed": seq.seed,
                    "frames": frames,
                    "ego_motion": [[e.dx, e.dy, e.dyaw] for e in seq.ego_motion],
                }
            )
        manifest["splits"][split] = entries
    path = root / "manifest.json"
    try:
        root.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from None
    logger.info(f"Wrote dataset manifest {path}")
    return path


def load_dataset(root) -> Dict[str, List[SceneSequence]]:
    root = Path(root)
    path = root / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None
    if manifest.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {manifest.get('version')!r}")

    out: Dict[str, List[SceneSequence]] = {}
    for split, entries in manifest["splits"].items():
        scenes = []
        for entry in entries:
            frames = []
            for f in entry["frames"]:
                cloud = read_cloud(root / f["cloud"])
                boxes = read_boxes(root / f["boxes"])
                views = _load_array(root / f["views"])
                if "tags" in f:
                    tags = _load_array(root / f["tags"])
                    if tags.shape != (len(cloud),):
                        raise FormatError(
                            f"{root / f['tags']}: {tags.shape} tags for {len(cloud)} points"
                        )
                    cloud = PointCloud(cloud.points, tags)
                frames.append(Frame(int(f["t"]), cloud.retag(boxes), views, boxes))
            ego = [EgoStep(*step) for step in entry["ego_motion"]]
            scenes.append(SceneSequence(frames, ego, int(entry["seed"])))
        out[split] = scenes
    counts = ", ".join(f"{k}={len(v)}" for k, v in out.items())
    logger.info(f"Loaded dataset from {root}: {counts}")
    return out


def get_splits(cfg: ExperimentConfig) -> Dict[str, List[SceneSequence]]:
    """Dataset directory from the config if one is set, otherwise in-memory synthesis."""
    if cfg.dataset.path:
        path = Path(cfg.dataset.path)
        if not (path / "manifest.json").exists():
            raise ConfigurationError(f"dataset.path {path} has no manifest.json")
        return load_dataset(path)
    return {split: synthesize_split(cfg, split) for split in SPLITS}
