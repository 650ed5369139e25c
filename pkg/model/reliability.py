# model/reliability.py
"""Cross-modality contrastive alignment and per-modality confidence scores."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from domain.boxes import SceneSequence
from domain.corruption_types import CorruptionSpec, Modality
from domain.errors import ArgumentError, DimensionError
from model.params import ReliabilityParams
from utils.seeding import rng_for

logger = logging.getLogger(__name__)

MODALITIES = ("lidar", "camera")


@dataclass(frozen=True)
class ConfidenceScores:
    c_lidar: Tensor
    c_camera: Tensor

    def as_floats(self) -> Tuple[float, float]:
        return self.c_lidar.item(), self.c_camera.item()


def embed_modality(features, modality: str, params: ReliabilityParams) -> Tensor:
    """Global-average-pool a (C, H, W) grid, run the modality MLP, L2-normalize."""
    features = as_tensor(features)
    if features.ndim != 3:
        raise DimensionError("embed_modality", features.shape)
    pooled = ops.mean(features, axis=(1, 2))
    return ops.l2_normalize(ops.mlp_forward(pooled, params.layers(modality)))


def confidence(z, modality: str, params: ReliabilityParams) -> Tensor:
    """sigmoid(W . z + b): a scalar for one embedding, shape (K,) for a (K, e) batch."""
    w, b = params.head(modality)
    z = as_tensor(z)
    if z.ndim not in (1, 2) or z.shape[-1] != w.shape[0]:
        raise DimensionError("confidence", z.shape, w.shape)
    logit = ops.add(ops.sum(ops.mul(z, w), axis=-1), b)
    return ops.reshape(ops.sigmoid(logit), z.shape[:-1])


def similarity_logits(z_a: Tensor, z_b: Tensor, tau: float) -> Tensor:
    """(K, K) cosine similarities of unit embeddings divided by tau."""
    return ops.mul(ops.matmul(z_a, ops.transpose(z_b)), 1.0 / tau)


def contrastive_loss(
    z_lidar,
    z_camera,
    tau: float,
    negative_sims: Optional[Sequence[Sequence[Tensor]]] = None,
    symmetric: bool = False,
) -> Tensor:
    """InfoNCE over aligned batches; positives on the diagonal.

    Row i uses LiDAR embedding i as the anchor and all K camera embeddings
    as candidates. `negative_sims[i]` holds extra cosine similarities (for
    corrupted same-scene pairs) appended to row i's denominator. With
    `symmetric`, the camera-anchored term is averaged in.
    """
    z_lidar, z_camera = as_tensor(z_lidar), as_tensor(z_camera)
    if tau <= 0:
        raise ArgumentError(f"contrastive_loss: tau must be positive, got {tau}")
    if z_lidar.ndim != 2 or z_lidar.shape != z_camera.shape:
        raise DimensionError("contrastive_loss", z_lidar.shape, z_camera.shape)
    k = z_lidar.shape[0]
    if k == 0:
        raise ArgumentError("contrastive_loss: empty batch")
    extras = negative_sims or [[] for _ in range(k)]
    if len(extras) != k:
        raise ArgumentError(f"contrastive_loss: {len(extras)} negative lists for batch {k}")

    def directional(logits: Tensor) -> Tensor:
        rows = []
        for i in range(k):
            row = logits[i]
            if extras[i]:
                extra = ops.mul(ops.stack(list(extras[i])), 1.0 / tau)
                row = ops.concat([row, extra])
            rows.append(ops.sub(ops.logsumexp_rows(row), logits[i, i]))
        return ops.mean(ops.stack(rows))

    loss = directional(similarity_logits(z_lidar, z_camera, tau))
    if symmetric:
        loss = ops.mul(ops.add(loss, directional(similarity_logits(z_camera, z_lidar, tau))), 0.5)
    return loss


@dataclass(frozen=True)
class CorruptedNegative:
    scene: int
    spec: CorruptionSpec

    @property
    def modality(self) -> str:
        return "lidar" if self.spec.modality is Modality.LIDAR else "camera"


@dataclass
class PairSet:
    positives: List[Tuple[int, int]] = field(default_factory=list)
    cross_negatives: List[Tuple[int, int]] = field(default_factory=list)
    corrupted: List[CorruptedNegative] = field(default_factory=list)

    def corrupted_for(self, scene: int) -> List[CorruptedNegative]:
        return [c for c in self.corrupted if c.scene == scene]


def make_pairs(batch: Sequence[SceneSequence], sampler, seed: int) -> PairSet:
    """Positive, cross-scene and corrupted same-scene pairs for one batch.

    `sampler` is a CorruptionSampler (or None); each scene draws at most one
    corruption from it. The corrupted inputs themselves are produced by the
    caller from the returned specs.
    """
    k = len(batch)
    pairs = PairSet(
        positives=[(i, i) for i in range(k)],
        cross_negatives=[(i, j) for i in range(k) for j in range(k) if i != j],
    )
    if sampler is None:
        return pairs
    rng = rng_for(seed, "make_pairs")
    for i in range(k):
        spec = sampler.sample(rng)
        if spec is not None:
            pairs.corrupted.append(CorruptedNegative(i, spec.with_seed(int(rng.integers(2**32)))))
    logger.debug(f"make_pairs: K={k}, {len(pairs.corrupted)} corrupted negatives")
    return pairs


def confidence_scores(
    f_lidar, f_camera, params: ReliabilityParams
) -> Tuple[Tensor, Tensor, ConfidenceScores]:
    z_l = embed_modality(f_lidar, "lidar", params)
    z_c = embed_modality(f_camera, "camera", params)
    scores = ConfidenceScores(confidence(z_l, "lidar", params), confidence(z_c, "camera", params))
    return z_l, z_c, scores


def fixed_confidences(c_lidar: float = 1.0, c_camera: float = 1.0) -> ConfidenceScores:
    return ConfidenceScores(Tensor(np.array(c_lidar)), Tensor(np.array(c_camera)))
