import dataclasses
import math

import numpy as np
import pytest

from autodiff.tensor import Tensor
from corruption.scenarios import CorruptionSampler
from domain.errors import ArgumentError, ConfigurationError, DimensionError
from model.params import init_params
from model.reliability import (
    confidence,
    confidence_scores,
    contrastive_loss,
    embed_modality,
    fixed_confidences,
    make_pairs,
)


def unit_rows(rng, k, e):
    z = rng.normal(size=(k, e))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def infonce_oracle(z_l, z_c, tau, extra=None):
    k = len(z_l)
    total = 0.0
    for i in range(k):
        logits = [float(z_l[i] @ z_c[j]) / tau for j in range(k)]
        logits += [s / tau for s in (extra[i] if extra else [])]
        total += math.log(sum(math.exp(v) for v in logits)) - logits[i]
    return total / k


def test_single_pair_has_zero_loss():
    z = unit_rows(np.random.default_rng(0), 1, 8)
    assert contrastive_loss(z, z, 0.07).item() == pytest.approx(0.0, abs=1e-12)


def test_identical_embeddings_give_log_k():
    z = np.tile(unit_rows(np.random.default_rng(1), 1, 8), (4, 1))
    assert contrastive_loss(z, z, 0.07).item() == pytest.approx(math.log(4.0))


def test_loss_matches_oracle_with_extra_negatives():
    rng = np.random.default_rng(2)
    z_l, z_c = unit_rows(rng, 3, 5), unit_rows(rng, 3, 5)
    extra = [[0.4], [], [-0.2, 0.9]]
    sims = [[Tensor(np.array(s)) for s in row] for row in extra]
    got = contrastive_loss(z_l, z_c, 0.1, negative_sims=sims).item()
    assert got == pytest.approx(infonce_oracle(z_l, z_c, 0.1, extra), rel=1e-12)
    assert got > contrastive_loss(z_l, z_c, 0.1).item()


def test_symmetric_loss_averages_both_directions():
    rng = np.random.default_rng(3)
    z_l, z_c = unit_rows(rng, 4, 6), unit_rows(rng, 4, 6)
    expected = 0.5 * (infonce_oracle(z_l, z_c, 0.2) + infonce_oracle(z_c, z_l, 0.2))
    assert contrastive_loss(z_l, z_c, 0.2, symmetric=True).item() == pytest.approx(expected)


def test_contrastive_loss_validates_inputs():
    z = unit_rows(np.random.default_rng(4), 2, 4)
    with pytest.raises(ArgumentError):
        contrastive_loss(z, z, 0.0)
    with pytest.raises(DimensionError):
        contrastive_loss(z, z[:1], 0.1)
    with pytest.raises(ArgumentError):
        contrastive_loss(z, z, 0.1, negative_sims=[[]])


def test_embeddings_are_unit_and_confidences_inside_open_interval(tiny_cfg):
    params = init_params(tiny_cfg).reliability
    rng = np.random.default_rng(5)
    f_l = rng.normal(size=(tiny_cfg.fusion.bev_channels, 8, 8))
    f_c = rng.normal(size=(tiny_cfg.fusion.bev_channels, 8, 8))
    z_l, z_c, scores = confidence_scores(f_l, f_c, params)
    assert np.linalg.norm(z_l.values) == pytest.approx(1.0)
    assert np.linalg.norm(z_c.values) == pytest.approx(1.0)
    for c in scores.as_floats():
        assert 0.0 < c < 1.0


def test_embedding_of_zero_grid_is_well_defined(tiny_cfg):
    params = init_params(tiny_cfg).reliability
    z = embed_modality(np.zeros((tiny_cfg.fusion.bev_channels, 8, 8)), "camera", params)
    assert np.linalg.norm(z.values) == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        embed_modality(np.zeros((8, 8)), "camera", params)


def test_fixed_confidences():
    assert fixed_confidences(1.0, 0.0).as_floats() == (1.0, 0.0)


def test_make_pairs_layout_and_determinism(tiny_scenes):
    batch = tiny_scenes + tiny_scenes[:1]
    plain = make_pairs(batch, None, seed=0)
    assert plain.positives == [(0, 0), (1, 1), (2, 2)]
    assert len(plain.cross_negatives) == 6
    assert plain.corrupted == []

    sampler = CorruptionSampler(rate=1.0)
    a = make_pairs(batch, sampler, seed=7)
    b = make_pairs(batch, sampler, seed=7)
    assert a == b
    assert [c.scene for c in a.corrupted] == [0, 1, 2]
    assert a.corrupted_for(1) == [a.corrupted[1]]
    assert all(c.modality in ("lidar", "camera") for c in a.corrupted)


def test_confidence_is_sigmoid_of_a_linear_score(tiny_cfg):
    params = init_params(tiny_cfg).reliability
    z = unit_rows(np.random.default_rng(6), 1, params.conf_camera_W.shape[0])[0]
    c = confidence(Tensor(z), "camera", params).values
    logit = float(z @ params.conf_camera_W + params.conf_camera_b[0])
    assert c.shape == ()
    assert float(c) == pytest.approx(1.0 / (1.0 + math.exp(-logit)), abs=1e-12)
    with pytest.raises(ConfigurationError):
        confidence(Tensor(z), "radar", params)


def test_lowering_the_diagonal_similarity_raises_the_loss():
    tau = 0.1
    z_l = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    losses = []
    for angle in np.linspace(0.0, math.pi / 2, 6):
        c, s = math.cos(angle), math.sin(angle)
        # off-diagonal similarities stay 0 while the diagonal falls from 1 to 0
        z_c = np.array([[c, 0.0, s], [0.0, c, s]])
        loss = contrastive_loss(z_l, z_c, tau).item()
        assert loss == pytest.approx(math.log1p(math.exp(-c / tau)), rel=1e-8)
        losses.append(loss)
    assert all(a < b for a, b in zip(losses, losses[1:]))


def test_confidence_closed_form_corners(tiny_cfg):
    params = init_params(tiny_cfg).reliability
    e = params.conf_lidar_W.shape[0]
    params = dataclasses.replace(params, conf_lidar_W=np.zeros(e), conf_lidar_b=np.zeros(1))
    z = unit_rows(np.random.default_rng(7), 1, e)[0]
    assert confidence(Tensor(z), "lidar", params).item() == 0.5
    params = dataclasses.replace(params, conf_lidar_b=np.array([math.log(3.0)]))
    assert confidence(Tensor(z), "lidar", params).item() == pytest.approx(0.75, abs=1e-15)


def test_batch_confidences_match_one_by_one_in_any_order(tiny_cfg):
    params = init_params(tiny_cfg).reliability
    z = unit_rows(np.random.default_rng(8), 5, params.conf_camera_W.shape[0])
    single = [confidence(Tensor(row), "camera", params).item() for row in z]
    for order in ([0, 1, 2, 3, 4], [4, 2, 0, 3, 1]):
        batch = confidence(Tensor(z[order]), "camera", params).values
        assert batch.shape == (5,)
        np.testing.assert_allclose(batch, [single[i] for i in order], atol=1e-15)
    with pytest.raises(DimensionError):
        confidence(Tensor(z[:, :-1]), "camera", params)
