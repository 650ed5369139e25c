# training/trainer.py
"""Three-stage training schedule.

Stage 1 pretrains the reliability module, STFA, the stems and the depth
net on contrastive, temporal and confidence losses. Stage 2 trains the two
streams separately on detection: LiDAR stem + fusion + head with the
camera branch zeroed, then the camera stream + fusion + head with the LiDAR
branch zeroed. Stage 3 fine-tunes everything on the full weighted loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from autodiff import ops
from autodiff.tensor import Tape, backward
from corruption.scenarios import CorruptionSampler, standard_scenarios
from corruption.transforms import corrupt_sequence
from domain.boxes import SceneSequence
from domain.errors import ConfigurationError, NumericError, StorageError, TrainingError
from model.head import encode_targets
from model.params import ALL_PARAMETERS, ModelParams, bind, prefix_filter
from model.pipeline_model import FusionModel
from model.reliability import PairSet, contrastive_loss, fixed_confidences, make_pairs
from training.checkpoint import save_checkpoint
from training.losses import (
    ZERO,
    Lambdas,
    LossBreakdown,
    confidence_loss,
    detection_loss,
    temporal_loss,
    total_loss,
)
from training.optim import make_optimizer
from utils.config import ExperimentConfig
from utils.seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

STAGES = (1, 2, 3)
PRETRAIN_WEIGHTS: Lambdas = (0.0, 0.1, 0.2, 0.05)
DETECTION_WEIGHTS: Lambdas = (1.0, 0.0, 0.0, 0.0)
CURVE_COLUMNS = ["stage", "epoch", "phase", "l_det", "l_contrast", "l_temp", "l_conf", "l_total"]


@dataclass(frozen=True)
class Phase:
    name: str
    trainable: Callable[[str], bool]
    epochs: Tuple[int, ...]
    zero_lidar: bool = False
    zero_camera: bool = False


@dataclass
class EpochRecord:
    stage: int
    epoch: int
    phase: str
    loss: LossBreakdown
    steps: int

    def row(self) -> dict:
        head = {"stage": self.stage, "epoch": self.epoch, "phase": self.phase}
        return {**head, **self.loss.as_dict()}


@dataclass
class StageResult:
    stage: int
    params: ModelParams
    weights: Lambdas
    records: List[EpochRecord] = field(default_factory=list)


def stage_weights(cfg: ExperimentConfig, stage: int) -> Lambdas:
    if stage == 1:
        return PRETRAIN_WEIGHTS
    if stage == 2:
        return DETECTION_WEIGHTS
    if stage == 3:
        return tuple(cfg.training.lambdas)
    raise ConfigurationError(f"unknown training stage {stage}")


def stage_phases(cfg: ExperimentConfig, stage: int) -> List[Phase]:
    epochs = cfg.training.for_stage(stage).epochs
    every = tuple(range(1, epochs + 1))
    if stage == 1:
        trainable = prefix_filter(("reliability.", "stfa.", "stems.", "depth."))
        return [Phase("pretrain", trainable, every)]
    if stage == 2:
        split = math.ceil(epochs / 2)
        lidar = prefix_filter(("stems.lidar_", "fusion.", "head."))
        camera = prefix_filter(("stems.camera_", "depth.", "stfa.", "fusion.", "head."))
        return [
            Phase("lidar", lidar, every[:split], zero_camera=True),
            Phase("camera", camera, every[split:], zero_lidar=True),
        ]
    if stage == 3:
        return [Phase("finetune", ALL_PARAMETERS, every)]
    raise ConfigurationError(f"unknown training stage {stage}")


def _unit_dot(a, b):
    return ops.sum(ops.mul(a, b))


def batch_loss(
    model: FusionModel,
    params: ModelParams,
    batch: Sequence[SceneSequence],
    weights: Lambdas,
    pairs: Optional[PairSet] = None,
    zero_lidar: bool = False,
    zero_camera: bool = False,
    fixed_scores: bool = False,
) -> LossBreakdown:
    """Weighted loss of one batch; terms with a zero weight are not computed.

    Every corrupted negative in `pairs` is forwarded too: its embeddings add
    a same-scene negative to the contrastive row of its scene, its
    confidences are supervised with 1 - severity for the corrupted modality
    and, when detection is weighted, it contributes a detection term.
    """
    cfg = model.cfg
    head_cfg = cfg.head
    want_det, want_temp = weights[0] != 0.0, weights[2] != 0.0
    want_rel = model.reliability_on and (weights[1] != 0.0 or weights[3] != 0.0)
    scores = fixed_confidences() if fixed_scores else None

    det_terms, temp_terms = [], []
    z_lidar, z_camera, negatives = [], [], []
    conf_scores, conf_targets = [], []
    for i, seq in enumerate(batch):
        targets = encode_targets(seq.current.gt_boxes, model.grid, cfg.dataset.class_count)
        out = model.forward(seq, params, zero_lidar, zero_camera, scores=scores)
        if want_det:
            det_terms.append(
                detection_loss(out.head, targets, head_cfg.focal_alpha, head_cfg.focal_gamma)
            )
        if want_temp and out.stfa.spatial:
            temp_terms.append(temporal_loss(out.stfa.spatial, seq.ego_motion))
        if want_rel:
            z_lidar.append(out.z_lidar)
            z_camera.append(out.z_camera)
            conf_scores += [out.scores.c_lidar, out.scores.c_camera]
            conf_targets += [1.0, 1.0]

        row_negatives = []
        for neg in pairs.corrupted_for(i) if pairs is not None else []:
            corrupted = corrupt_sequence(seq, neg.spec, model.geometry)
            c_out = model.forward(corrupted, params, zero_lidar, zero_camera, scores=scores)
            if want_det:
                det_terms.append(
                    detection_loss(c_out.head, targets, head_cfg.focal_alpha, head_cfg.focal_gamma)
                )
            if want_rel:
                row_negatives.append(_unit_dot(c_out.z_lidar, c_out.z_camera))
                target = 1.0 - neg.spec.severity
                conf_scores += [c_out.scores.c_lidar, c_out.scores.c_camera]
                conf_targets += [
                    target if neg.modality == "lidar" else 1.0,
                    target if neg.modality == "camera" else 1.0,
                ]
        negatives.append(row_negatives)

    l_det = ops.mean(ops.stack(det_terms)) if det_terms else ZERO
    l_temp = ops.mean(ops.stack(temp_terms)) if temp_terms else ZERO
    l_contrast = l_conf = ZERO
    if want_rel:
        rel = cfg.reliability
        l_contrast = contrastive_loss(
            ops.stack(z_lidar), ops.stack(z_camera), rel.tau, negatives, rel.symmetric
        )
        l_conf = confidence_loss(conf_scores, conf_targets)
    return total_loss(l_det, l_contrast, l_temp, l_conf, weights)


class Trainer:
    def __init__(
        self,
        cfg: ExperimentConfig,
        model: FusionModel | None = None,
        sampler: CorruptionSampler | None = None,
    ):
        self.cfg = cfg
        self.model = model or FusionModel(cfg)
        rate = cfg.reliability.corruption_rate
        if sampler is None and rate > 0:
            sampler = CorruptionSampler(standard_scenarios(), rate)
        self.sampler = sampler
        self.logger = logging.getLogger(self.__class__.__name__)

    def _root(self, stage: int) -> int:
        return derive_seed(self.cfg.seed, f"train/{self.cfg.training.for_stage(stage).seed}")

    def _batches(self, stage: int, epoch: int, n_scenes: int) -> List[np.ndarray]:
        size = self.cfg.training.for_stage(stage).batch_size
        order = rng_for(self._root(stage), f"batches/{stage}/{epoch}").permutation(n_scenes)
        return [order[i : i + size] for i in range(0, n_scenes, size)]

    def _step(
        self,
        stage: int,
        epoch: int,
        step: int,
        params: ModelParams,
        batch: List[SceneSequence],
        phase: Phase,
        weights: Lambdas,
        optimizer,
    ) -> Tuple[ModelParams, LossBreakdown]:
        pairs = None
        if stage != 2:
            seed = derive_seed(self._root(stage), f"pairs/{stage}/{epoch}/{step}")
            pairs = make_pairs(batch, self.sampler, seed)
        tape = Tape()
        bound, leaves = bind(params, tape, phase.trainable)
        try:
            breakdown = batch_loss(
                self.model,
                bound,
                batch,
                weights,
                pairs,
                zero_lidar=phase.zero_lidar,
                zero_camera=phase.zero_camera,
                fixed_scores=stage == 2,
            )
        except NumericError as e:
            raise TrainingError(str(e), stage, epoch) from e
        if not math.isfinite(breakdown.l_total):
            raise TrainingError("non-finite loss", stage, epoch)
        if breakdown.total.tape is not tape:
            self.logger.debug(f"stage {stage} epoch {epoch} step {step}: loss has no trainables")
            return params, breakdown
        grads = backward(tape, breakdown.total)
        named = {name: grads[leaf.grad_id] for name, leaf in leaves.items()}
        for name, grad in named.items():
            if not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite gradient for {name}", stage, epoch)
        self.logger.debug(
            f"stage {stage} epoch {epoch} step {step}: total={breakdown.l_total:.6f}"
        )
        return optimizer.step(params, named), breakdown

    def train_stage(
        self, stage: int, params: ModelParams, scenes: Sequence[SceneSequence]
    ) -> StageResult:
        if not scenes:
            raise ConfigurationError("training needs at least one scene")
        weights = stage_weights(self.cfg, stage)
        result = StageResult(stage, params.copy(), weights)
        train_cfg = self.cfg.training.for_stage(stage)
        for phase in stage_phases(self.cfg, stage):
            optimizer = make_optimizer(train_cfg)
            for epoch in phase.epochs:
                parts = []
                for step, index in enumerate(self._batches(stage, epoch, len(scenes))):
                    batch = [scenes[int(i)] for i in index]
                    result.params, breakdown = self._step(
                        stage, epoch, step, result.params, batch, phase, weights, optimizer
                    )
                    parts.append(breakdown)
                mean = LossBreakdown.mean(parts)
                record = EpochRecord(stage, epoch, phase.name, mean, len(parts))
                result.records.append(record)
                self.logger.info(
                    f"stage {stage} [{phase.name}] epoch {epoch}: "
                    + ", ".join(f"{k}={v:.5f}" for k, v in record.loss.as_dict().items())
                )
        return result

    def run(
        self,
        scenes: Sequence[SceneSequence],
        params: ModelParams,
        stages: Sequence[int] = STAGES,
        out_dir=None,
    ) -> Dict[int, StageResult]:
        """Run the stages in order; with `out_dir`, write a checkpoint and curves per stage."""
        results: Dict[int, StageResult] = {}
        for stage in stages:
            if stage not in STAGES:
                raise ConfigurationError(f"unknown training stage {stage}")
            result = self.train_stage(stage, params, scenes)
            params = result.params
            results[stage] = result
            if out_dir is not None:
                out = Path(out_dir)
                save_checkpoint(out / f"checkpoint_stage{stage}.rfck", params)
                write_curves(out / f"curves_stage{stage}.csv", result)
        return results


def write_curves(path, result: StageResult) -> Path:
    """One row per epoch, preceded by a comment line holding the loss weights."""
    path = Path(path)
    frame = pd.DataFrame([r.row() for r in result.records], columns=CURVE_COLUMNS)
    header = f"# stage={result.stage} lambdas={','.join(repr(float(w)) for w in result.weights)}\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(header)
            frame.to_csv(fh, index=False, lineterminator="\n")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from None
    return path
