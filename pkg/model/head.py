# model/head.py
"""Center-heatmap detection head on the fused BEV grid.

Per cell: `n_classes` heatmap logits and nine regression channels
(dx, dy in cell units from the cell centre, log w, log l, log h, sin yaw,
cos yaw, vx, vy). Boxes rest on the ground, so decoding sets z = h / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy import ndimage, special

from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from domain.boxes import Box3D, Detection
from domain.geometry import bev_iou
from model.fusion import from_tokens, to_tokens
from model.params import N_REGRESSION, HeadParams
from utils.config import GridConfig


@dataclass
class HeadOutput:
    heatmap: Tensor  # (n_classes, H, W) logits
    regression: Tensor  # (9, H, W)


@dataclass
class HeadTargets:
    heatmap: np.ndarray  # (n_classes, H, W) in {0, 1}
    regression: np.ndarray  # (9, H, W), meaningful where mask is set
    mask: np.ndarray  # (H, W) bool, positive cells

    @property
    def n_pos(self) -> int:
        return int(self.mask.sum())


def head_forward(fused, params: HeadParams) -> HeadOutput:
    fused = as_tensor(fused)
    hw = fused.shape[1:]
    out = from_tokens(ops.mlp_forward(to_tokens(fused), params.layers), hw)
    n_cls = params.n_classes
    return HeadOutput(out[:n_cls], out[n_cls:])


def encode_box(box: Box3D, row: int, col: int, grid: GridConfig) -> np.ndarray:
    ox, oy = grid.origin
    dx, dy = grid.cell_size
    cx = ox + (col + 0.5) * dx
    cy = oy + (row + 0.5) * dy
    w, l, h = box.size
    return np.array(
        [
            (box.center[0] - cx) / dx,
            (box.center[1] - cy) / dy,
            math.log(w),
            math.log(l),
            math.log(h),
            math.sin(box.yaw),
            math.cos(box.yaw),
            box.velocity[0],
            box.velocity[1],
        ]
    )


def decode_cell(reg: np.ndarray, row: int, col: int, class_id: int, grid: GridConfig) -> Box3D:
    """Inverse of encode_box."""
    ox, oy = grid.origin
    dx, dy = grid.cell_size
    x = ox + (col + 0.5 + reg[0]) * dx
    y = oy + (row + 0.5 + reg[1]) * dy
    w, l, h = (float(np.exp(np.clip(v, -10.0, 10.0))) for v in reg[2:5])
    yaw = math.atan2(reg[5], reg[6])
    return Box3D((x, y, h / 2.0), (w, l, h), yaw, class_id, (float(reg[7]), float(reg[8])))


def encode_targets(boxes: Sequence[Box3D], grid: GridConfig, n_classes: int) -> HeadTargets:
    """One positive cell per box (the cell holding its centre); first box wins a shared cell."""
    heat = np.zeros((n_classes, grid.height, grid.width))
    reg = np.zeros((N_REGRESSION, grid.height, grid.width))
    mask = np.zeros((grid.height, grid.width), dtype=bool)
    ox, oy = grid.origin
    dx, dy = grid.cell_size
    for box in boxes:
        col = int(math.floor((box.center[0] - ox) / dx))
        row = int(math.floor((box.center[1] - oy) / dy))
        if not (0 <= row < grid.height and 0 <= col < grid.width) or mask[row, col]:
            continue
        if box.class_id >= n_classes:
            continue
        mask[row, col] = True
        heat[box.class_id, row, col] = 1.0
        reg[:, row, col] = encode_box(box, row, col, grid)
    return HeadTargets(heat, reg, mask)


def nms(detections: Sequence[Detection], iou_threshold: float) -> List[Detection]:
    """Greedy BEV-IoU suppression; survivors overlap pairwise below the threshold."""
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept: List[Detection] = []
    for i in order:
        cand = detections[i]
        if all(bev_iou(cand.box, k.box) < iou_threshold for k in kept):
            kept.append(cand)
    return kept


def find_peaks(scores: np.ndarray, threshold: float) -> np.ndarray:
    """(class, row, col) of 3x3 local maxima strictly above threshold, in index order."""
    pooled = ndimage.maximum_filter(scores, size=(1, 3, 3), mode="constant", cval=0.0)
    return np.argwhere((scores == pooled) & (scores > threshold))


def detect(
    output: HeadOutput,
    grid: GridConfig,
    score_threshold: float = 0.3,
    nms_iou: float = 0.5,
    max_candidates: int = 200,
) -> List[Detection]:
    scores = special.expit(output.heatmap.values)
    reg = output.regression.values
    candidates = []
    for cls, row, col in find_peaks(scores, score_threshold):
        box = decode_cell(reg[:, row, col], int(row), int(col), int(cls), grid)
        candidates.append(Detection(box, float(scores[cls, row, col])))
    candidates.sort(key=lambda d: -d.score)
    return nms(candidates[:max_candidates], nms_iou)
