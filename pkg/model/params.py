# model/params.py
"""Learnable parameters of the fusion model.

Each group is a flat dataclass of arrays (or Tensors once bound to a tape).
Weight matrices are stored (in, out) and applied as `x @ W`. Parameters are
addressed by dotted names such as `stfa.W_s` or `fusion.Wq_l2c`; those names
drive stage gating, the optimizer state and the checkpoint format.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, Tuple

import numpy as np

from autodiff.tensor import Tape, Tensor
from domain.boxes import N_VIEWS
from domain.errors import ConfigurationError, DimensionError
from utils.config import ExperimentConfig
from utils.seeding import rng_for

logger = logging.getLogger(__name__)

N_REGRESSION = 9  # dx, dy, log w, log l, log h, sin yaw, cos yaw, vx, vy
HEATMAP_PRIOR = 0.01


@dataclass
class StemParams:
    """Per-cell channel maps standing in for the 3D/2D backbones."""

    lidar_W: Any
    lidar_b: Any
    camera_W: Any
    camera_b: Any


@dataclass
class DepthParams:
    W: Any  # (C_view, D)
    b: Any  # (D,)


@dataclass
class StfaParams:
    W_s: Any  # (C*H_v*W_v, d)
    b_s: Any
    view_embed: Any  # (6, d)
    Wq_s: Any
    Wk_s: Any
    Wv_s: Any
    Wq_t: Any
    Wk_t: Any
    Wv_t: Any
    P_t: Any  # (T, d)
    mlp_W1: Any
    mlp_b1: Any
    mlp_W2: Any
    mlp_b2: Any
    ln_gain: Any
    ln_bias: Any
    proj_W: Any  # (d_pool, C) into camera-BEV channels
    proj_b: Any

    @property
    def d(self) -> int:
        return self.Wq_s.shape[0]

    @property
    def T(self) -> int:
        return self.P_t.shape[0]

    @property
    def mlp_layers(self):
        return [(self.mlp_W1, self.mlp_b1), (self.mlp_W2, self.mlp_b2)]


@dataclass
class ReliabilityParams:
    lidar_W1: Any
    lidar_b1: Any
    lidar_W2: Any
    lidar_b2: Any
    camera_W1: Any
    camera_b1: Any
    camera_W2: Any
    camera_b2: Any
    conf_lidar_W: Any  # (E,)
    conf_lidar_b: Any  # (1,)
    conf_camera_W: Any
    conf_camera_b: Any

    def layers(self, modality: str):
        if modality == "lidar":
            return [(self.lidar_W1, self.lidar_b1), (self.lidar_W2, self.lidar_b2)]
        if modality == "camera":
            return [(self.camera_W1, self.camera_b1), (self.camera_W2, self.camera_b2)]
        raise ConfigurationError(f"unknown modality {modality!r}")

    def head(self, modality: str):
        if modality == "lidar":
            return self.conf_lidar_W, self.conf_lidar_b
        if modality == "camera":
            return self.conf_camera_W, self.conf_camera_b
        raise ConfigurationError(f"unknown modality {modality!r}")


@dataclass
class FusionParams:
    Wq_l2c: Any  # (C, d_k), applied to the camera query
    Wk_l2c: Any  # applied to LiDAR keys
    Wv_l2c: Any
    Wq_c2l: Any  # applied to the LiDAR query
    Wk_c2l: Any
    Wv_c2l: Any
    W_o: Any  # (d_k, C), no bias
    beta: Any  # (1,) positional attention bias weight

    @property
    def d_k(self) -> int:
        return self.Wq_l2c.shape[1]

    def projections(self, direction: str):
        if direction == "l2c":
            return self.Wq_l2c, self.Wk_l2c, self.Wv_l2c
        if direction == "c2l":
            return self.Wq_c2l, self.Wk_c2l, self.Wv_c2l
        raise ConfigurationError(f"unknown fusion direction {direction!r}")


@dataclass
class HeadParams:
    W1: Any
    b1: Any
    W2: Any  # (hidden, n_classes + 9)
    b2: Any

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1] - N_REGRESSION

    @property
    def layers(self):
        return [(self.W1, self.b1), (self.W2, self.b2)]


GROUP_TYPES = {
    "stems": StemParams,
    "depth": DepthParams,
    "stfa": StfaParams,
    "reliability": ReliabilityParams,
    "fusion": FusionParams,
    "head": HeadParams,
}


@dataclass
class ModelParams:
    stems: StemParams
    depth: DepthParams
    stfa: StfaParams
    reliability: ReliabilityParams
    fusion: FusionParams
    head: HeadParams

    def named(self) -> Dict[str, Any]:
        """Flat name -> value mapping in a fixed order."""
        out: Dict[str, Any] = {}
        for group in GROUP_TYPES:
            part = getattr(self, group)
            for f in dataclasses.fields(part):
                out[f"{group}.{f.name}"] = getattr(part, f.name)
        return out

    def map(self, fn: Callable[[str, Any], Any]) -> "ModelParams":
        groups = {}
        for group, cls in GROUP_TYPES.items():
            part = getattr(self, group)
            groups[group] = cls(
                **{
                    f.name: fn(f"{group}.{f.name}", getattr(part, f.name))
                    for f in dataclasses.fields(part)
                }
            )
        return ModelParams(**groups)

    def copy(self) -> "ModelParams":
        return self.map(lambda _, v: np.array(v.values if isinstance(v, Tensor) else v, copy=True))

    def count(self) -> int:
        values = self.named().values()
        return int(sum(np.size(v.values if isinstance(v, Tensor) else v) for v in values))

    @classmethod
    def from_named(cls, named: Dict[str, np.ndarray], like: "ModelParams") -> "ModelParams":
        expected = like.named()
        missing = sorted(set(expected) - set(named))
        extra = sorted(set(named) - set(expected))
        if missing or extra:
            raise ConfigurationError(
                f"parameter set mismatch: missing {missing}, unexpected {extra}"
            )
        for name, value in named.items():
            if np.shape(value) != np.shape(expected[name]):
                raise DimensionError(f"parameter {name}", np.shape(value), np.shape(expected[name]))
        return like.map(lambda name, _: np.array(named[name], dtype=np.float64))


def bind(
    params: ModelParams, tape: Tape, trainable: Callable[[str], bool]
) -> Tuple[ModelParams, Dict[str, Tensor]]:
    """Trainable parameters become tape leaves, the rest constants."""
    leaves: Dict[str, Tensor] = {}

    def to_tensor(name, value):
        if trainable(name):
            leaves[name] = tape.leaf(value)
            return leaves[name]
        return Tensor(value)

    return params.map(to_tensor), leaves


def as_constants(params: ModelParams) -> ModelParams:
    return params.map(lambda _, v: v if isinstance(v, Tensor) and v.is_constant else Tensor(v))


def prefix_filter(prefixes: Iterable[str]) -> Callable[[str], bool]:
    prefixes = tuple(prefixes)
    return lambda name: name.startswith(prefixes)


ALL_PARAMETERS = prefix_filter(tuple(f"{g}." for g in GROUP_TYPES))


# ---------- initialization ----------
def _dense(rng: np.random.Generator, fan_in: int, fan_out: int, scale: float = 1.0) -> np.ndarray:
    return rng.normal(0.0, scale / math.sqrt(fan_in), size=(fan_in, fan_out))


def pooled_dim(cfg: ExperimentConfig) -> int:
    return cfg.stfa.d * (N_VIEWS if cfg.stfa.temporal_pool == "concat" else 1)


def lidar_raw_channels(cfg: ExperimentConfig) -> int:
    return cfg.grid.n_z + 1


def init_params(cfg: ExperimentConfig, seed: int | None = None) -> ModelParams:
    """Seeded initialization; each group draws from its own stream."""
    seed = cfg.seed if seed is None else seed
    geometry = cfg.view_geometry
    C = cfg.fusion.bev_channels
    c_lidar = lidar_raw_channels(cfg)
    c_view = geometry.channels
    D = cfg.fusion.depth_bins
    d = cfg.stfa.d
    d_pool = pooled_dim(cfg)
    T = cfg.dataset.T
    r = cfg.reliability
    d_k = cfg.fusion.d_k
    n_out = cfg.dataset.class_count + N_REGRESSION
    hidden = cfg.head.hidden

    rng = rng_for(seed, "init/stems")
    stems = StemParams(
        lidar_W=_dense(rng, c_lidar, C),
        lidar_b=np.zeros(C),
        camera_W=_dense(rng, c_view, C),
        camera_b=np.zeros(C),
    )
    rng = rng_for(seed, "init/depth")
    depth = DepthParams(W=_dense(rng, c_view, D), b=np.zeros(D))

    rng = rng_for(seed, "init/stfa")
    stfa = StfaParams(
        W_s=_dense(rng, geometry.channels * geometry.height * geometry.width, d),
        b_s=np.zeros(d),
        view_embed=rng.normal(0.0, 0.02, size=(N_VIEWS, d)),
        Wq_s=_dense(rng, d, d),
        Wk_s=_dense(rng, d, d),
        Wv_s=_dense(rng, d, d),
        Wq_t=_dense(rng, d, d),
        Wk_t=_dense(rng, d, d),
        Wv_t=_dense(rng, d, d),
        P_t=rng.normal(0.0, 0.02, size=(T, d)),
        mlp_W1=_dense(rng, d_pool, 4 * d_pool),
        mlp_b1=np.zeros(4 * d_pool),
        mlp_W2=_dense(rng, 4 * d_pool, d_pool),
        mlp_b2=np.zeros(d_pool),
        ln_gain=np.ones(d_pool),
        ln_bias=np.zeros(d_pool),
        proj_W=_dense(rng, d_pool, C, scale=0.1),
        proj_b=np.zeros(C),
    )

    rng = rng_for(seed, "init/reliability")
    # nonzero biases keep the embedding of an all-zero grid away from the origin
    reliability = ReliabilityParams(
        lidar_W1=_dense(rng, C, r.hidden),
        lidar_b1=rng.normal(0.0, 0.1, size=r.hidden),
        lidar_W2=_dense(rng, r.hidden, r.embed_dim),
        lidar_b2=rng.normal(0.0, 0.1, size=r.embed_dim),
        camera_W1=_dense(rng, C, r.hidden),
        camera_b1=rng.normal(0.0, 0.1, size=r.hidden),
        camera_W2=_dense(rng, r.hidden, r.embed_dim),
        camera_b2=rng.normal(0.0, 0.1, size=r.embed_dim),
        conf_lidar_W=rng.normal(0.0, 1.0 / math.sqrt(r.embed_dim), size=r.embed_dim),
        conf_lidar_b=np.zeros(1),
        conf_camera_W=rng.normal(0.0, 1.0 / math.sqrt(r.embed_dim), size=r.embed_dim),
        conf_camera_b=np.zeros(1),
    )

    rng = rng_for(seed, "init/fusion")
    fusion = FusionParams(
        Wq_l2c=_dense(rng, C, d_k),
        Wk_l2c=_dense(rng, C, d_k),
        Wv_l2c=_dense(rng, C, d_k),
        Wq_c2l=_dense(rng, C, d_k),
        Wk_c2l=_dense(rng, C, d_k),
        Wv_c2l=_dense(rng, C, d_k),
        W_o=_dense(rng, d_k, C),
        beta=np.array([cfg.fusion.position_bias]),
    )

    rng = rng_for(seed, "init/head")
    b2 = np.zeros(n_out)
    b2[: cfg.dataset.class_count] = -math.log((1.0 - HEATMAP_PRIOR) / HEATMAP_PRIOR)
    head = HeadParams(
        W1=_dense(rng, C, hidden), b1=np.zeros(hidden), W2=_dense(rng, hidden, n_out), b2=b2
    )

    params = ModelParams(stems, depth, stfa, reliability, fusion, head)
    logger.info(f"Initialized {params.count()} parameters (seed={seed})")
    return params
