import pytest

from relibev.selftest import tiny_batch, tiny_config


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture
def tiny_scenes(tiny_cfg):
    return tiny_batch(tiny_cfg)


@pytest.fixture(autouse=True)
def _isolated_logging(monkeypatch, tmp_path):
    # keep CLI runs from writing relibev.log into the working tree
    monkeypatch.setenv("LOG_FILE", str(tmp_path / "relibev.log"))
