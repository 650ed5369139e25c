# analysis/evaluation.py
"""Inference over a test split, clean or under a corruption scenario."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from analysis.metrics import mean_ap, mean_translation_error, per_class_matches
from corruption.transforms import corrupt_sequence
from domain.boxes import Detection, SceneSequence
from domain.corruption_types import CorruptionKind, CorruptionSpec, ScenarioTable
from domain.errors import ConfigurationError
from generator.scene_io import write_detections
from model.params import ModelParams, as_constants
from model.pipeline_model import FusionModel
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

THREADS_ENV = "RELIBEV_THREADS"


@dataclass
class EvalReport:
    scenario: str
    per_class_ap: Dict[int, float] = field(default_factory=dict)
    mAP: float = 0.0
    mATE: float = math.nan
    n_scenes: int = 0
    n_detections: int = 0


def worker_count(default: int = 1) -> int:
    raw = os.getenv(THREADS_ENV)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


def scene_corruption(spec: Optional[CorruptionSpec], index: int) -> Optional[CorruptionSpec]:
    """Per-scene spec; the seed depends on the scenario's seed and the scene index only."""
    if spec is None or spec.kind is CorruptionKind.NONE:
        return None
    return spec.with_seed(derive_seed(spec.seed, f"corrupt/{index}"))


def predict_scenes(
    model: FusionModel,
    params: ModelParams,
    scenes: Sequence[SceneSequence],
    spec: Optional[CorruptionSpec] = None,
    workers: int | None = None,
) -> List[List[Detection]]:
    """Detections per scene, in scene order, independent of the worker count."""
    params = as_constants(params)
    workers = worker_count() if workers is None else workers

    def run(index: int) -> List[Detection]:
        seq = scenes[index]
        scene_spec = scene_corruption(spec, index)
        if scene_spec is not None:
            seq = corrupt_sequence(seq, scene_spec, model.geometry)
        return model.predict(seq, params)

    if workers <= 1 or len(scenes) <= 1:
        return [run(i) for i in range(len(scenes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(len(scenes))))


def write_scene_detections(detections: Sequence[Sequence[Detection]], out_dir) -> List[Path]:
    """One detections text file per scene, `scene_0000.txt` onwards."""
    out_dir = Path(out_dir)
    paths = [out_dir / f"scene_{i:04d}.txt" for i in range(len(detections))]
    for path, dets in zip(paths, detections):
        write_detections(path, dets)
    logger.info(f"Wrote detections for {len(paths)} scenes to {out_dir}")
    return paths


def score_detections(
    scenario: str,
    detections: Sequence[Sequence[Detection]],
    scenes: Sequence[SceneSequence],
    class_count: int,
    iou_threshold: float = 0.5,
) -> EvalReport:
    frames = [(dets, seq.current.gt_boxes) for dets, seq in zip(detections, scenes)]
    matches = per_class_matches(frames, range(class_count), iou_threshold)
    aps, m_ap = mean_ap(matches)
    return EvalReport(
        scenario=scenario,
        per_class_ap=aps,
        mAP=m_ap,
        mATE=mean_translation_error(matches),
        n_scenes=len(scenes),
        n_detections=sum(len(d) for d in detections),
    )


def evaluate(
    model: FusionModel,
    params: ModelParams,
    scenes: Sequence[SceneSequence],
    scenario: str = "clean",
    spec: Optional[CorruptionSpec] = None,
    workers: int | None = None,
    detections_dir=None,
) -> EvalReport:
    """Predict and score `scenes`; with `detections_dir`, also keep the raw detections."""
    detections = predict_scenes(model, params, scenes, spec, workers)
    if detections_dir is not None:
        write_scene_detections(detections, detections_dir)
    cfg = model.cfg
    report = score_detections(
        scenario, detections, scenes, cfg.dataset.class_count, cfg.head.ap_iou
    )
    logger.info(
        f"[{scenario}] mAP={report.mAP:.4f} mATE={report.mATE:.4f} "
        f"({report.n_detections} detections over {report.n_scenes} scenes)"
    )
    return report


def robustness_sweep(
    model: FusionModel,
    params: ModelParams,
    scenes: Sequence[SceneSequence],
    table: ScenarioTable,
    workers: int | None = None,
) -> List[EvalReport]:
    """One report per scenario, in table order."""
    return [evaluate(model, params, scenes, e.name, e.spec, workers) for e in table]
