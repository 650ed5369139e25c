# model/fusion.py
"""Confidence-weighted mutual cross-attention between the two BEV grids.

Directions:
    l2c: camera cells query LiDAR cells, scaled by c_lidar
    c2l: LiDAR cells query camera cells, scaled by c_camera

Attention logits are QK^T / sqrt(d_k) plus beta * P P^T, where P holds
fixed unit-norm sinusoidal encodings of the cell positions. A shared
bias-free projection maps each direction back to C channels, so a zero
confidence yields an exactly zero contribution.
"""

from __future__ import annotations

import functools
import math
from typing import Tuple

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from domain.errors import ConfigurationError, DimensionError
from model.params import FusionParams
from model.stfa import attend
from utils.config import FUSION_MODES


@functools.lru_cache(maxsize=8)
def positional_encodings(height: int, width: int, dim: int) -> np.ndarray:
    """(H*W, dim) unit-norm 2D sinusoids; half the channels encode x, half y."""
    if dim < 4 or dim % 4:
        raise ConfigurationError(f"positional encoding dim must be a multiple of 4, got {dim}")
    n_freq = dim // 4
    longest = 2.0 * max(height, width)
    wavelengths = np.geomspace(4.0, longest, n_freq) if n_freq > 1 else np.array([longest])
    omega = 2.0 * math.pi / wavelengths
    rows, cols = np.mgrid[0:height, 0:width]
    parts = []
    for coord in (cols.ravel(), rows.ravel()):
        angle = coord[:, None] * omega[None, :]
        parts.extend([np.sin(angle), np.cos(angle)])
    enc = np.concatenate(parts, axis=1)
    enc /= np.linalg.norm(enc, axis=1, keepdims=True)
    enc.setflags(write=False)
    return enc


@functools.lru_cache(maxsize=8)
def position_similarity(height: int, width: int, dim: int) -> np.ndarray:
    enc = positional_encodings(height, width, dim)
    sim = enc @ enc.T
    sim.setflags(write=False)
    return sim


def to_tokens(features) -> Tensor:
    """(C, H, W) grid to (H*W, C) tokens in row-major cell order."""
    features = as_tensor(features)
    c, h, w = features.shape
    return ops.transpose(ops.reshape(features, (c, h * w)))


def from_tokens(tokens: Tensor, hw: Tuple[int, int]) -> Tensor:
    n, c = tokens.shape
    return ops.reshape(ops.transpose(tokens), (c, *hw))


def cross_attend(
    query_grid,
    kv_grid,
    confidence,
    params: FusionParams,
    direction: str,
    pos_dim: int = 16,
) -> Tensor:
    """confidence * (softmax(Q K^T / sqrt(d_k) + beta P P^T) V) W_o, as a (C, H, W) grid."""
    query_grid, kv_grid = as_tensor(query_grid), as_tensor(kv_grid)
    if query_grid.ndim != 3 or kv_grid.ndim != 3 or query_grid.shape[1:] != kv_grid.shape[1:]:
        raise ConfigurationError(
            f"cross_attend: grids differ in H x W: {query_grid.shape} vs {kv_grid.shape}"
        )
    wq, wk, wv = params.projections(direction)
    hw = query_grid.shape[1:]
    q = ops.matmul(to_tokens(query_grid), wq)
    k = ops.matmul(to_tokens(kv_grid), wk)
    v = ops.matmul(to_tokens(kv_grid), wv)
    bias = ops.mul(params.beta, position_similarity(hw[0], hw[1], pos_dim))
    attended, _ = attend(q, k, v, bias)
    out = ops.matmul(attended, params.W_o)
    out = ops.mul(out, ops.reshape(as_tensor(confidence), (1, 1)))
    return from_tokens(out, hw)


def fuse(f_l2c, f_c2l) -> Tensor:
    """F_fused = F_{L->C} + F_{C->L}."""
    f_l2c, f_c2l = as_tensor(f_l2c), as_tensor(f_c2l)
    if f_l2c.shape != f_c2l.shape:
        raise DimensionError("fuse", f_l2c.shape, f_c2l.shape)
    return ops.add(f_l2c, f_c2l)


def baseline_fusions(
    f_lidar,
    f_camera,
    mode: str,
    params: FusionParams | None = None,
    c_lidar=1.0,
    c_camera=1.0,
    pos_dim: int = 16,
) -> Tensor:
    """Fused grid for one of the fusion variants.

    add: elementwise sum. cross_image: camera queries LiDAR (l2c) with
    confidence 1. cross_lidar: LiDAR queries camera (c2l) with confidence 1.
    mca: both directions with confidences 1. cw_mca: both directions with
    the given confidences.
    """
    if mode not in FUSION_MODES:
        raise ConfigurationError(f"unknown fusion mode {mode!r} (known: {', '.join(FUSION_MODES)})")
    f_lidar, f_camera = as_tensor(f_lidar), as_tensor(f_camera)
    if mode == "add":
        return fuse(f_lidar, f_camera)
    if params is None:
        raise ConfigurationError(f"fusion mode {mode} needs attention parameters")
    one = Tensor(np.array(1.0))
    if mode == "cross_image":
        return cross_attend(f_camera, f_lidar, one, params, "l2c", pos_dim)
    if mode == "cross_lidar":
        return cross_attend(f_lidar, f_camera, one, params, "c2l", pos_dim)
    if mode == "mca":
        c_lidar, c_camera = one, one
    l2c = cross_attend(f_camera, f_lidar, c_lidar, params, "l2c", pos_dim)
    c2l = cross_attend(f_lidar, f_camera, c_camera, params, "c2l", pos_dim)
    return fuse(l2c, c2l)
