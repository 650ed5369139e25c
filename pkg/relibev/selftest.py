# relibev/selftest.py
"""Gradient checks for every primitive and module plus closed-form corner cases.

`run_selftest` never raises on a failed check; it returns a report whose
failures name the op. The CLI turns failures into exit code 3.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from tabulate import tabulate

from autodiff import ops
from autodiff.gradcheck import grad_check_detailed
from autodiff.tensor import Tensor
from corruption.scenarios import CorruptionSampler, standard_scenarios
from domain.boxes import Box3D, EgoStep, SceneSequence
from domain.errors import RelibevError
from encoders.bev import lift_splat
from generator.scene_generator import MotionModel, boxes_at, render_frame
from model.fusion import baseline_fusions, cross_attend
from model.head import HeadOutput, encode_targets
from model.params import ModelParams, as_constants, init_params
from model.pipeline_model import FusionModel
from model.reliability import contrastive_loss, make_pairs
from model.stfa import attend, stfa_forward
from training.losses import (
    confidence_loss,
    detection_loss,
    temporal_loss,
    total_loss,
)
from training.trainer import batch_loss
from utils.config import DEFAULT_LAMBDAS, ExperimentConfig, config_from_dict
from utils.seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

LINEAR_TOL = 1e-8
# Central differences of a linear map are exact up to rounding.
LINEAR_STEP = 1e-3
GRAD_TOL = 1e-4

TINY_CONFIG = {
    "seed": 0,
    "dataset": {
        "train_scenes": 2,
        "test_scenes": 2,
        "T": 2,
        "n_objects": 1,
        "n_points": 256,
        "class_count": 1,
        "scene_extent": 16.0,
    },
    "grid": {"extent_m": 16.0, "cell_size": [2.0, 2.0]},
    "views": {"height": 2, "width": 4, "depth_code": 2, "depth_min": 1.0, "depth_max": 7.0},
    "stfa": {"d": 8},
    "reliability": {"hidden": 8, "embed_dim": 8, "corruption_rate": 1.0},
    "fusion": {"bev_channels": 4, "d_k": 4, "depth_bins": 2, "pos_dim": 4},
    "head": {"hidden": 4},
}

# Parameters whose gradients are checked through the whole pipeline.
PIPELINE_PARAMS = (
    "depth.W",
    "stfa.Wq_t",
    "reliability.conf_lidar_W",
    "fusion.W_o",
    "head.W2",
)


@dataclass(frozen=True)
class GradCase:
    name: str
    module: str
    fn: Callable[..., Tensor]
    point: Sequence[np.ndarray]
    tol: float = GRAD_TOL
    sample: Optional[int] = None
    step: float = 1e-5


@dataclass
class CheckResult:
    name: str
    module: str
    passed: bool
    max_rel_error: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""


@dataclass
class SelfTestReport:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def per_module_max(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for r in self.results:
            if r.max_rel_error is not None:
                out[r.module] = max(out.get(r.module, 0.0), r.max_rel_error)
        return out

    def render(self) -> str:
        rows = [
            [r.module, r.name, "ok" if r.passed else "FAIL", r.max_rel_error, r.tolerance, r.detail]
            for r in self.results
        ]
        table = tabulate(
            rows, headers=["module", "check", "status", "max rel err", "tol", "detail"],
            floatfmt=".2e", tablefmt="grid",
        )
        summary = tabulate(
            sorted(self.per_module_max().items()), headers=["module", "max rel err"],
            floatfmt=".2e", tablefmt="grid",
        )
        return f"{table}\n{summary}"


# ---------- tiny fixture ----------
def tiny_config(**overrides) -> ExperimentConfig:
    return config_from_dict(TINY_CONFIG, [f"{k}={v}" for k, v in overrides.items()])


def tiny_batch(cfg: ExperimentConfig) -> List[SceneSequence]:
    """Two hand-placed single-object scenes on the tiny grid."""
    geometry = cfg.view_geometry
    motion = MotionModel(dt=cfg.dataset.dt)
    scenes = []
    for i in range(2):
        seed = derive_seed(cfg.seed, f"selftest/scene/{i}")
        boxes = [Box3D((4.0 + i, -2.0, 0.85), (0.7, 0.7, 1.7), 0.3, 0, (0.2, 0.1))]
        frames = [
            render_frame(
                seed,
                t,
                boxes_at(boxes, t, motion),
                geometry,
                cfg.dataset.n_points,
                cfg.dataset.noise_sigma,
                cfg.dataset.view_noise,
            )
            for t in range(cfg.dataset.T)
        ]
        scenes.append(SceneSequence(frames, [EgoStep()] * (cfg.dataset.T - 1), seed))
    return scenes


def pipeline_loss_fn(cfg: ExperimentConfig, params: ModelParams, batch, names: Sequence[str]):
    """Total weighted loss as a function of the named parameter arrays."""
    model = FusionModel(cfg)
    base = as_constants(params)
    pairs = make_pairs(batch, CorruptionSampler(standard_scenarios(), 1.0), seed=cfg.seed)

    def fn(*tensors: Tensor) -> Tensor:
        named = dict(zip(names, tensors))
        bound = base.map(lambda name, value: named.get(name, value))
        return batch_loss(model, bound, batch, DEFAULT_LAMBDAS, pairs).total

    return fn


# ---------- gradient cases ----------
def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return ops.sum(ops.mul(out, weights))


def primitive_cases(seed: int = 0) -> List[GradCase]:
    rng = rng_for(seed, "selftest/primitives")

    def r(*shape):
        return rng.normal(size=shape)

    def pos(*shape):
        return np.abs(rng.normal(size=shape)) + 0.5

    w34, w43, w32, w4, w64 = r(3, 4), r(4, 3), r(3, 2), r(4), r(6, 4)
    w3, w324 = r(3), r(3, 2, 4)
    linear = [
        ("add", lambda a, b: _weighted(ops.add(a, b), w34), [r(3, 4), r(4)]),
        ("sub", lambda a, b: _weighted(ops.sub(a, b), w34), [r(3, 4), r(3, 1)]),
        ("mul", lambda a, b: _weighted(ops.mul(a, b), w34), [r(3, 4), r(3, 4)]),
        ("neg", lambda a: _weighted(ops.neg(a), w34), [r(3, 4)]),
        ("matmul", lambda a, b: _weighted(ops.matmul(a, b), w32), [r(3, 4), r(4, 2)]),
        ("transpose", lambda a: _weighted(ops.transpose(a), w43), [r(3, 4)]),
        ("reshape", lambda a: _weighted(ops.reshape(a, (4, 3)), w43), [r(3, 4)]),
        ("sum", lambda a: _weighted(ops.sum(a, axis=0), w4), [r(3, 4)]),
        ("mean", lambda a: _weighted(ops.mean(a, axis=0), w4), [r(3, 4)]),
        ("concat", lambda a, b: _weighted(ops.concat([a, b]), w64), [r(2, 4), r(4, 4)]),
        ("stack", lambda a, b: _weighted(ops.stack([a, b], axis=1), w324), [r(3, 4), r(3, 4)]),
        ("take", lambda a: _weighted(ops.take(a, np.array([0, 2, 2])), w34), [r(3, 4)]),
    ]
    smooth = [
        ("div", lambda a, b: _weighted(ops.div(a, b), w34), [r(3, 4), pos(3, 4)]),
        ("power", lambda a: _weighted(ops.power(a, 3.0), w34), [pos(3, 4)]),
        ("exp", lambda a: _weighted(ops.exp(a), w34), [r(3, 4)]),
        ("log", lambda a: _weighted(ops.log(a), w34), [pos(3, 4)]),
        ("sqrt", lambda a: _weighted(ops.sqrt(a), w34), [pos(3, 4)]),
        ("abs", lambda a: _weighted(ops.absolute(a), w34), [pos(3, 4) * np.sign(r(3, 4))]),
        ("softmax_rows", lambda a: _weighted(ops.softmax_rows(a), w34), [r(3, 4)]),
        ("logsumexp_rows", lambda a: _weighted(ops.logsumexp_rows(a), w3), [r(3, 4)]),
        (
            "layer_norm",
            lambda x, g, b: _weighted(ops.layer_norm(x, g, b), w34),
            [r(3, 4), r(4), r(4)],
        ),
        ("gelu", lambda a: _weighted(ops.gelu(a), w34), [r(3, 4)]),
        ("sigmoid", lambda a: _weighted(ops.sigmoid(a), w34), [r(3, 4)]),
        ("log_sigmoid", lambda a: _weighted(ops.log_sigmoid(a), w34), [r(3, 4)]),
        ("l2_normalize", lambda a: _weighted(ops.l2_normalize(a), w34), [r(3, 4)]),
        ("cosine_sim", lambda u, v: ops.cosine_sim(u, v), [r(5), r(5)]),
        (
            "mlp_forward",
            lambda x, w1, b1, w2, b2: _weighted(ops.mlp_forward(x, [(w1, b1), (w2, b2)]), w32),
            [r(3, 4), r(4, 5), r(5), r(5, 2), r(2)],
        ),
    ]
    cases = [
        GradCase(n, "tensor-autodiff", f, p, LINEAR_TOL, step=LINEAR_STEP) for n, f, p in linear
    ]
    cases += [GradCase(n, "tensor-autodiff", f, p) for n, f, p in smooth]
    return cases


def module_cases(seed: int = 0) -> List[GradCase]:
    rng = rng_for(seed, "selftest/modules")
    cfg = tiny_config()
    params = as_constants(init_params(cfg, seed))
    geometry = cfg.view_geometry
    cases: List[GradCase] = []

    w_att = rng.normal(size=(5, 4))
    cases.append(
        GradCase(
            "attend",
            "stfa",
            lambda q, k, v: _weighted(attend(q, k, v)[0], w_att),
            [rng.normal(size=(5, 4)) for _ in range(3)],
        )
    )

    views = rng.normal(size=(cfg.dataset.T, 6, *geometry.shape))

    def stfa_fn(w_s, p_t, wq_t):
        swapped = replace(params.stfa, W_s=w_s, P_t=p_t, Wq_t=wq_t)
        return ops.sum(stfa_forward(views, swapped, cfg.stfa, mode="full").t_hat)

    cases.append(
        GradCase(
            "stfa_forward",
            "stfa",
            stfa_fn,
            [params.stfa.W_s.values, params.stfa.P_t.values, params.stfa.Wq_t.values],
            sample=6,
        )
    )

    def lift_fn(v, w, b):
        return ops.sum(lift_splat(v, geometry, 2, cfg.grid, depth_weights=(w, b)).features)

    cases.append(
        GradCase(
            "lift_splat",
            "bev-encode",
            lift_fn,
            [views[0], rng.normal(size=(geometry.channels, 2)), rng.normal(size=2)],
            sample=8,
        )
    )

    z_l, z_c = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    cases.append(
        GradCase(
            "contrastive_loss",
            "reliability",
            lambda a, b: contrastive_loss(
                ops.l2_normalize(a), ops.l2_normalize(b), 0.07, symmetric=True
            ),
            [z_l, z_c],
        )
    )

    grid_shape = (cfg.fusion.bev_channels, 3, 2)
    w_fuse = rng.normal(size=grid_shape)
    cases.append(
        GradCase(
            "cross_attend",
            "cwmca-head",
            lambda q, kv, c: _weighted(
                cross_attend(q, kv, c, params.fusion, "l2c", cfg.fusion.pos_dim),
                w_fuse,
            ),
            [rng.normal(size=grid_shape), rng.normal(size=grid_shape), np.array([0.7])],
        )
    )

    targets = encode_targets(
        [Box3D((1.2, -0.4, 0.85), (0.7, 0.7, 1.7), 0.3, 0)], cfg.grid, cfg.dataset.class_count
    )
    hw = (cfg.grid.height, cfg.grid.width)
    cases.append(
        GradCase(
            "detection_loss",
            "train-eval",
            lambda heat, reg: detection_loss(HeadOutput(heat, reg), targets),
            [rng.normal(size=(1, *hw)), rng.normal(size=(9, *hw))],
            sample=12,
        )
    )
    cases.append(
        GradCase(
            "confidence_loss",
            "train-eval",
            lambda logits: confidence_loss(
                [ops.sigmoid(logits[i]) for i in range(3)], [1.0, 0.5, 1.0 / 6.0]
            ),
            [rng.normal(size=3)],
        )
    )
    cases.append(
        GradCase(
            "temporal_loss",
            "train-eval",
            lambda a, b: temporal_loss([a, b], [EgoStep(dyaw=math.pi / 3)]),
            [rng.normal(size=(6, 3)), rng.normal(size=(6, 3))],
        )
    )
    return cases


def pipeline_case(seed: int = 0) -> GradCase:
    cfg = tiny_config(seed=seed)
    params = init_params(cfg)
    named = params.named()
    fn = pipeline_loss_fn(cfg, params, tiny_batch(cfg), PIPELINE_PARAMS)
    return GradCase(
        "total_loss",
        "pipeline",
        fn,
        [np.array(named[n]) for n in PIPELINE_PARAMS],
        sample=4,
    )


def run_grad_case(case: GradCase, seed: int = 0) -> CheckResult:
    try:
        result = grad_check_detailed(
            case.fn, case.point, step=case.step, sample=case.sample, seed=seed
        )
    except RelibevError as e:
        return CheckResult(case.name, case.module, False, detail=f"{type(e).__name__}: {e}")
    passed = result.max_rel_error < case.tol
    return CheckResult(case.name, case.module, passed, result.max_rel_error, case.tol)


# ---------- closed-form corners ----------
def _corner(name: str, module: str, ok: bool, detail: str) -> CheckResult:
    return CheckResult(name, module, bool(ok), detail=detail)


def corner_checks(seed: int = 0) -> List[CheckResult]:
    rng = rng_for(seed, "selftest/corners")
    out = []

    z = ops.l2_normalize(rng.normal(size=(1, 8)))
    value = contrastive_loss(z, z, 0.07).item()
    out.append(_corner("contrastive_k1", "reliability", abs(value) < 1e-9, f"{value:.3e}"))

    k = 4
    same = np.tile(ops.l2_normalize(rng.normal(size=8)).values, (k, 1))
    value = contrastive_loss(same, same, 0.07).item()
    out.append(
        _corner("contrastive_uniform", "reliability", abs(value - math.log(k)) < 1e-9, f"{value}")
    )

    value = ops.sigmoid(np.array(0.0)).item()
    out.append(_corner("sigmoid_zero", "tensor-autodiff", value == 0.5, f"{value}"))

    value = total_loss(1.0, 1.0, 1.0, 1.0).l_total
    out.append(_corner("total_loss_ones", "train-eval", abs(value - 1.35) < 1e-12, f"{value}"))

    rows = ops.softmax_rows(rng.normal(scale=5.0, size=(1000, 7))).values.sum(axis=1)
    worst = float(np.max(np.abs(rows - 1.0)))
    out.append(_corner("softmax_row_sums", "tensor-autodiff", worst < 1e-9, f"{worst:.2e}"))

    value = confidence_loss([Tensor(np.array(0.5))], [0.5]).item()
    out.append(_corner("bce_half", "train-eval", abs(value - math.log(2)) < 1e-12, f"{value}"))

    out.extend(_fusion_algebra(rng))
    return out


def _fusion_algebra(rng: np.random.Generator) -> List[CheckResult]:
    cfg = tiny_config()
    params = as_constants(init_params(cfg)).fusion
    shape = (cfg.fusion.bev_channels, cfg.grid.height, cfg.grid.width)
    f_l, f_c = rng.normal(size=shape), rng.normal(size=shape)
    pos_dim = cfg.fusion.pos_dim

    def fused(c_l, c_c, mode="cw_mca"):
        c_l, c_c = Tensor(np.array(c_l)), Tensor(np.array(c_c))
        return baseline_fusions(f_l, f_c, mode, params, c_l, c_c, pos_dim).values

    l2c = cross_attend(f_c, f_l, Tensor(np.array(1.0)), params, "l2c", pos_dim).values
    c2l = cross_attend(f_l, f_c, Tensor(np.array(1.0)), params, "c2l", pos_dim).values
    return [
        _corner("camera_conf_zero", "cwmca-head", np.array_equal(fused(1.0, 0.0), l2c), "exact"),
        _corner("lidar_conf_zero", "cwmca-head", np.array_equal(fused(0.0, 1.0), c2l), "exact"),
        _corner("both_conf_zero", "cwmca-head", not np.any(fused(0.0, 0.0)), "exact"),
        _corner(
            "cw_mca_ones_is_mca",
            "cwmca-head",
            np.array_equal(fused(1.0, 1.0), fused(0.3, 0.9, mode="mca")),
            "exact",
        ),
    ]


def run_selftest(
    extra_cases: Sequence[GradCase] = (), include_pipeline: bool = True, seed: int = 0
) -> SelfTestReport:
    cases = primitive_cases(seed) + module_cases(seed) + list(extra_cases)
    if include_pipeline:
        cases.append(pipeline_case(seed))
    report = SelfTestReport()
    for case in cases:
        result = run_grad_case(case, seed)
        logger.debug(f"grad check {case.module}/{case.name}: {result.max_rel_error}")
        report.results.append(result)
    report.results.extend(corner_checks(seed))
    total = len(report.results)
    logger.info(f"Selftest: {total - len(report.failures)}/{total} checks passed")
    return report
