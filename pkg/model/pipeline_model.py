# model/pipeline_model.py
"""Whole-model forward pass for one scene sequence."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from domain.boxes import Detection, SceneSequence
from encoders.bev import lift_splat, voxelize
from model.fusion import baseline_fusions, from_tokens, to_tokens
from model.head import HeadOutput, detect, head_forward
from model.params import ModelParams
from model.reliability import ConfidenceScores, confidence_scores, fixed_confidences
from model.stfa import StfaOutput, camera_modulation, stfa_forward
from utils.config import ExperimentConfig


@dataclass
class ModelOutput:
    head: HeadOutput
    fused: Tensor
    f_lidar: Tensor
    f_camera: Tensor
    scores: ConfidenceScores
    z_lidar: Optional[Tensor]
    z_camera: Optional[Tensor]
    stfa: StfaOutput


def apply_stem(raw, weight, bias) -> Tensor:
    """Per-cell linear channel map (C_in, H, W) -> (C_out, H, W)."""
    raw = Tensor(raw) if not isinstance(raw, Tensor) else raw
    hw = raw.shape[1:]
    return from_tokens(ops.add(ops.matmul(to_tokens(raw), weight), bias), hw)


class FusionModel:
    """Encoders, STFA, reliability, fusion and head wired per the experiment config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.geometry = cfg.view_geometry
        self.grid = cfg.grid
        self.fusion_mode = cfg.effective_fusion_mode
        self.stfa_mode = cfg.effective_stfa_mode
        self.reliability_on = cfg.toggles.reliability_on
        self.logger = logging.getLogger(self.__class__.__name__)

    def lidar_features(self, sequence: SceneSequence, params: ModelParams) -> Tensor:
        raw = voxelize(sequence.current.cloud, self.grid).features
        return apply_stem(raw, params.stems.lidar_W, params.stems.lidar_b)

    def camera_features(self, sequence: SceneSequence, params: ModelParams):
        current = sequence.current.views
        raw = lift_splat(
            current,
            self.geometry,
            self.cfg.fusion.depth_bins,
            self.grid,
            depth_weights=(params.depth.W, params.depth.b),
        ).features
        f_camera = apply_stem(raw, params.stems.camera_W, params.stems.camera_b)
        views = np.stack([f.views for f in sequence.frames])
        stfa = stfa_forward(views, params.stfa, self.cfg.stfa, mode=self.stfa_mode)
        if stfa.t_hat is not None:
            offset = camera_modulation(stfa.t_hat, params.stfa)
            f_camera = ops.add(f_camera, ops.reshape(offset, (offset.shape[0], 1, 1)))
        return f_camera, stfa

    def forward(
        self,
        sequence: SceneSequence,
        params: ModelParams,
        zero_lidar: bool = False,
        zero_camera: bool = False,
        scores: Optional[ConfidenceScores] = None,
    ) -> ModelOutput:
        """`zero_*` replaces a branch's BEV features by zeros; `scores` injects confidences."""
        f_lidar = self.lidar_features(sequence, params)
        f_camera, stfa = self.camera_features(sequence, params)
        if zero_lidar:
            f_lidar = Tensor(np.zeros(f_lidar.shape))
        if zero_camera:
            f_camera = Tensor(np.zeros(f_camera.shape))

        z_l = z_c = None
        if scores is None:
            if self.reliability_on:
                z_l, z_c, scores = confidence_scores(f_lidar, f_camera, params.reliability)
            else:
                scores = fixed_confidences()
        fused = baseline_fusions(
            f_lidar,
            f_camera,
            self.fusion_mode,
            params.fusion,
            scores.c_lidar,
            scores.c_camera,
            pos_dim=self.cfg.fusion.pos_dim,
        )
        head = head_forward(fused, params.head)
        return ModelOutput(head, fused, f_lidar, f_camera, scores, z_l, z_c, stfa)

    def predict(self, sequence: SceneSequence, params: ModelParams) -> List[Detection]:
        out = self.forward(sequence, params)
        return detect(out.head, self.grid, self.cfg.head.score_threshold, self.cfg.head.nms_iou)
