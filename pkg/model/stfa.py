# model/stfa.py
"""Spatio-temporal aggregation of the six camera views over T frames.

Per frame the six view maps are embedded, attend to each other (spatial
attention, self included) and receive a per-step temporal encoding. Each
view slot then attends over the time axis; slot outputs are reduced over
time, pooled over slots and refined with a residual MLP + layer norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from domain.boxes import N_VIEWS
from domain.errors import ConfigurationError, DimensionError
from model.params import StfaParams
from utils.config import STFA_MODES, StfaConfig

MASKED_LOGIT = -1e9


@dataclass
class StfaOutput:
    t_hat: Optional[Tensor]  # (d_pool,) or None when STFA is off
    spatial: List[Tensor] = field(default_factory=list)  # per step (6, d)
    spatial_weights: List[np.ndarray] = field(default_factory=list)
    temporal_weights: Optional[np.ndarray] = None  # (6, T, T)


def attend(q: Tensor, k: Tensor, v: Tensor, bias=None) -> tuple:
    """softmax(q k^T / sqrt(d) + bias) v over the last two axes; returns (out, weights)."""
    d = q.shape[-1]
    logits = ops.mul(ops.matmul(q, ops.transpose(k)), 1.0 / math.sqrt(d))
    if bias is not None:
        logits = ops.add(logits, bias)
    weights = ops.softmax_rows(logits)
    return ops.matmul(weights, v), weights


def embed_views(views, params: StfaParams) -> Tensor:
    """E_k = Flatten(F_k) @ W_s + b_s + view_embed_k for views shaped (..., 6, C, H, W)."""
    views = as_tensor(views)
    flat_dim = params.W_s.shape[0]
    if views.ndim < 4 or views.shape[-4] != N_VIEWS or int(np.prod(views.shape[-3:])) != flat_dim:
        raise DimensionError("embed_views", views.shape, params.W_s.shape)
    lead = views.shape[:-3]
    flat = ops.reshape(views, (*lead, flat_dim))
    return ops.add(ops.add(ops.matmul(flat, params.W_s), params.b_s), params.view_embed)


def spatial_attention(embeddings: Tensor, params: StfaParams) -> tuple:
    """Every view attends to all six (itself included). Input (..., 6, d)."""
    q = ops.matmul(embeddings, params.Wq_s)
    k = ops.matmul(embeddings, params.Wk_s)
    v = ops.matmul(embeddings, params.Wv_s)
    return attend(q, k, v)


def add_temporal_encoding(spatial: Tensor, t: int, params: StfaParams) -> Tensor:
    """S~^t = S^t + P_t(t) for 1-based t, broadcast over view slots."""
    if not 1 <= t <= params.T:
        raise IndexError(f"timestep {t} outside [1, {params.T}]")
    return ops.add(spatial, params.P_t[t - 1])


def temporal_attention(
    encoded: List[Tensor],
    params: StfaParams,
    exclude_self: bool = False,
    reduce: str = "mean",
) -> tuple:
    """Attention across timesteps per view slot, reduced over time; returns ((6, d), weights)."""
    steps = len(encoded)
    if steps < 1:
        raise ConfigurationError("temporal_attention needs at least one timestep")
    x = ops.transpose(ops.stack(encoded, axis=0), (1, 0, 2))  # (6, T, d)
    q = ops.matmul(x, params.Wq_t)
    k = ops.matmul(x, params.Wk_t)
    v = ops.matmul(x, params.Wv_t)
    bias = None
    if exclude_self and steps >= 2:
        bias = np.where(np.eye(steps, dtype=bool), MASKED_LOGIT, 0.0)
    out, weights = attend(q, k, v, bias)
    if reduce == "mean":
        return ops.mean(out, axis=1), weights
    if reduce == "sum":
        return ops.sum(out, axis=1), weights
    raise ConfigurationError(f"unknown temporal reduce {reduce!r}")


def pool_slots(slots: Tensor, mode: str) -> Tensor:
    if mode == "mean":
        return ops.mean(slots, axis=0)
    if mode == "concat":
        return ops.reshape(slots, (slots.size,))
    raise ConfigurationError(f"unknown temporal pool {mode!r}")


def refine(x: Tensor, params: StfaParams, eps: float = 1e-5) -> Tensor:
    """T^ = LayerNorm(x + MLP(x))."""
    residual = ops.add(x, ops.mlp_forward(x, params.mlp_layers))
    return ops.layer_norm(residual, params.ln_gain, params.ln_bias, eps=eps)


def stfa_forward(view_sequence, params: StfaParams, cfg: StfaConfig, mode: str | None = None):
    """T frames of six views, shaped (T, 6, C, H, W), to T^ plus the per-step S^t cache.

    `mode` selects the ablation variant: full, spatial (current frame's
    spatial attention only), temporal (no spatial attention) or off.
    """
    mode = cfg.mode if mode is None else mode
    if mode not in STFA_MODES:
        raise ConfigurationError(f"unknown STFA mode {mode!r}")
    if mode == "off":
        return StfaOutput(t_hat=None)
    views = as_tensor(view_sequence)
    steps = views.shape[0]
    if steps > params.T:
        raise IndexError(f"{steps} frames exceed the {params.T} temporal encodings")

    embeddings = embed_views(views, params)  # (T, 6, d)
    if mode in ("full", "spatial"):
        attended, weights = spatial_attention(embeddings, params)
        spatial_weights = [weights.values[t] for t in range(steps)]
    else:
        attended, spatial_weights = embeddings, []
    spatial = [attended[t] for t in range(steps)]

    temporal_weights = None
    if mode == "spatial":
        aggregated = spatial[-1]
    else:
        encoded = [add_temporal_encoding(s, t + 1, params) for t, s in enumerate(spatial)]
        aggregated, tw = temporal_attention(
            encoded, params, exclude_self=cfg.exclude_self, reduce=cfg.temporal_reduce
        )
        temporal_weights = tw.values
    t_hat = refine(pool_slots(aggregated, cfg.temporal_pool), params, eps=cfg.ln_eps)
    return StfaOutput(t_hat, spatial, spatial_weights, temporal_weights)


def camera_modulation(t_hat: Tensor, params: StfaParams) -> Tensor:
    """(C,) channel offset added to every camera-BEV cell."""
    return ops.mlp_forward(t_hat, [(params.proj_W, params.proj_b)])
