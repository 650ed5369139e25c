import numpy as np
import pytest

from domain.errors import ConfigurationError, DimensionError, FormatError
from model.params import ModelParams, init_params
from relibev.selftest import tiny_config
from training.checkpoint import decode_params, encode_params, load_checkpoint, save_checkpoint
from training.optim import SGD, AdamW, make_optimizer
from training.trainer import (
    DETECTION_WEIGHTS,
    PRETRAIN_WEIGHTS,
    Trainer,
    stage_phases,
    stage_weights,
)
from utils.config import DEFAULT_LAMBDAS, TrainConfig

ONE_EPOCH = {
    "training.stage1.epochs": 1,
    "training.stage2.epochs": 2,
    "training.stage3.epochs": 1,
    "training.stage1.batch_size": 2,
    "training.stage2.batch_size": 2,
    "training.stage3.batch_size": 2,
}


@pytest.fixture
def params(tiny_cfg):
    return init_params(tiny_cfg)


def test_sgd_step_and_untouched_parameters(params):
    opt = SGD(0.1)
    grad = np.full(params.head.b2.shape, 0.5)
    stepped = opt.step(params, {"head.b2": grad})
    np.testing.assert_allclose(stepped.head.b2, params.head.b2 - 0.05)
    np.testing.assert_array_equal(stepped.head.W2, params.head.W2)
    with pytest.raises(DimensionError):
        opt.step(params, {"head.b2": np.zeros(1)})


def test_adamw_first_step_moves_by_learning_rate(params):
    opt = AdamW(0.01)
    grad = np.where(np.arange(params.head.b2.size) % 2, 3.0, -0.2)
    stepped = opt.step(params, {"head.b2": grad})
    np.testing.assert_allclose(stepped.head.b2 - params.head.b2, -0.01 * np.sign(grad), rtol=1e-6)


def test_make_optimizer_validates():
    assert isinstance(make_optimizer(TrainConfig(optimizer="sgd")), SGD)
    with pytest.raises(ConfigurationError):
        make_optimizer(TrainConfig(optimizer="lbfgs"))
    with pytest.raises(ConfigurationError):
        SGD(0.0)


def test_checkpoint_round_trip(tmp_path, params):
    path = save_checkpoint(tmp_path / "ck.rfck", params)
    loaded = load_checkpoint(path, params)
    for name, value in params.named().items():
        assert np.array_equal(loaded.named()[name], value)


def test_checkpoint_decoder_rejects_damage(params):
    data = encode_params(params)
    with pytest.raises(FormatError):
        decode_params(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        decode_params(data[:-8])
    with pytest.raises(FormatError):
        decode_params(data + b"\0")
    with pytest.raises(FormatError):
        decode_params(data[:5])


def test_checkpoint_must_match_the_model(tmp_path, params):
    other = init_params(tiny_config(**{"fusion.d_k": 8}))
    path = save_checkpoint(tmp_path / "other.rfck", other)
    with pytest.raises(DimensionError):
        load_checkpoint(path, params)
    named = params.named()
    named.pop("head.b2")
    with pytest.raises(ConfigurationError):
        ModelParams.from_named(named, params)


def test_stage_schedule(tiny_cfg):
    cfg = tiny_config(**{"training.stage2.epochs": 3})
    lidar, camera = stage_phases(cfg, 2)
    assert lidar.epochs == (1, 2) and camera.epochs == (3,)
    assert lidar.zero_camera and camera.zero_lidar
    assert lidar.trainable("stems.lidar_W") and not lidar.trainable("stems.camera_W")
    assert camera.trainable("stfa.W_s") and not camera.trainable("reliability.conf_lidar_W")
    (pretrain,) = stage_phases(cfg, 1)
    assert pretrain.trainable("reliability.lidar_W1") and not pretrain.trainable("head.W1")
    assert stage_weights(cfg, 1) == PRETRAIN_WEIGHTS
    assert stage_weights(cfg, 2) == DETECTION_WEIGHTS
    assert stage_weights(cfg, 3) == DEFAULT_LAMBDAS
    with pytest.raises(ConfigurationError):
        stage_phases(cfg, 4)


def test_trainer_writes_checkpoints_and_curves(tmp_path, tiny_scenes):
    cfg = tiny_config(**ONE_EPOCH)
    results = Trainer(cfg).run(tiny_scenes, init_params(cfg), out_dir=tmp_path)
    assert sorted(results) == [1, 2, 3]
    for stage in (1, 2, 3):
        assert (tmp_path / f"checkpoint_stage{stage}.rfck").exists()
        lines = (tmp_path / f"curves_stage{stage}.csv").read_text().splitlines()
        assert lines[0].startswith(f"# stage={stage} lambdas=")
        assert lines[1].startswith("stage,epoch,phase,l_det")
    assert (tmp_path / "curves_stage1.csv").read_text().splitlines()[0].endswith("0.0,0.1,0.2,0.05")
    assert all(r.loss.l_det == 0.0 for r in results[1].records)
    assert [r.phase for r in results[2].records] == ["lidar", "camera"]
    for record in results[3].records:
        record.loss.verify()


def test_training_is_deterministic(tiny_scenes):
    cfg = tiny_config(**ONE_EPOCH)
    a = Trainer(cfg).run(tiny_scenes, init_params(cfg), stages=[1])[1].params
    b = Trainer(cfg).run(tiny_scenes, init_params(cfg), stages=[1])[1].params
    for name, value in a.named().items():
        assert np.array_equal(value, b.named()[name])


def test_training_needs_scenes(tiny_cfg, params):
    with pytest.raises(ConfigurationError):
        Trainer(tiny_cfg).run([], params, stages=[1])


def test_zero_epochs_leave_the_initialization_in_the_checkpoint(tmp_path, tiny_scenes):
    cfg = tiny_config(**{f"training.stage{s}.epochs": 0 for s in (1, 2, 3)})
    initial = init_params(cfg)
    results = Trainer(cfg).run(tiny_scenes, initial, out_dir=tmp_path)
    assert all(not r.records for r in results.values())
    saved = (tmp_path / "checkpoint_stage3.rfck").read_bytes()
    assert saved == encode_params(initial)
    restored = load_checkpoint(tmp_path / "checkpoint_stage3.rfck", initial)
    for name, value in initial.named().items():
        assert np.array_equal(restored.named()[name], value)
