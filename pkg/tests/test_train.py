import math

import numpy as np
import pytest

from infocatvae.model import ConfigError, ModelConfig
from infocatvae.objective import Betas
from infocatvae.rng import Rng
from infocatvae.train import (
    TrainConfig,
    TrainingDivergedError,
    TrainState,
    format_metrics_line,
    parse_metrics_file,
    train_loop,
    train_step,
)

SMALL = ModelConfig(n_categories=3, delta=2, input_dim=16, hidden_dim=12)


@pytest.fixture(scope="module")
def toy_data():
    # three prototype patterns with pixel noise
    rng = Rng(0)
    protos = rng.uniform((3, 16))
    labels = rng.integers(3, size=90)
    return np.clip(protos[labels] + 0.05 * rng.standard_normal((90, 16)), 0, 1)


def test_metrics_line_format():
    rec = {"epoch": 3, "recon": 1.5, "kl_cat": 0.1, "kl_gauss": 2.0, "info": 0.0, "total": 22.5}
    assert format_metrics_line(rec) == "3\t1.5\t0.1\t2.0\t0.0\t22.5"


def test_metrics_file_written_and_parsed(toy_data, tmp_path):
    cfg = TrainConfig(epochs=3, batch_size=32, learning_rate=1e-3, seed=1)
    state = train_loop(cfg, toy_data, SMALL, out_dir=str(tmp_path))
    parsed = parse_metrics_file(tmp_path / "metrics.tsv")
    assert [r["epoch"] for r in parsed] == [1, 2, 3]
    assert parsed == state.metrics
    assert (tmp_path / "final.icv").exists()


def test_loss_decreases_on_toy_data(toy_data):
    cfg = TrainConfig(epochs=15, batch_size=30, learning_rate=3e-3, seed=2)
    state = train_loop(cfg, toy_data, SMALL)
    assert state.metrics[-1]["total"] < state.metrics[0]["total"]
    assert all(r["kl_cat"] <= math.log(3) + 1e-12 for r in state.metrics)


def test_epoch_metrics_are_batch_weighted(toy_data):
    cfg = TrainConfig(epochs=1, batch_size=40, seed=4, mode="vanilla_catvae")
    state = train_loop(cfg, toy_data, SMALL)
    rec = state.metrics[0]
    assert abs(rec["total"] - (rec["recon"] + 10 * rec["kl_cat"] + 10 * rec["kl_gauss"])) < 1e-9 * rec["total"]
    assert rec["info"] == 0.0
    assert state.step == 3  # batches of 40, 40, 10


def test_state_round_trip(toy_data, tmp_path):
    cfg = TrainConfig(epochs=2, batch_size=32, seed=5)
    state = train_loop(cfg, toy_data, SMALL)
    state.save(tmp_path / "s.icv")
    back = TrainState.load(tmp_path / "s.icv")
    assert back.epoch == 2 and back.step == state.step and back.optimizer.t == state.optimizer.t
    assert back.rng.get_state() == state.rng.get_state()
    assert back.model.config == SMALL
    for k, p in state.model.params.items():
        np.testing.assert_array_equal(back.model.params[k].data, p.data)
    assert back.metrics == state.metrics


def test_float32_training_runs(toy_data):
    cfg = TrainConfig(epochs=1, batch_size=45, seed=0, dtype="float32")
    state = train_loop(cfg, toy_data, SMALL)
    assert state.model.params["decoder.out.weight"].data.dtype == np.float32
    assert np.isfinite(state.metrics[0]["total"])


def test_alternate_info_and_stop_grad(toy_data):
    for kwargs in ({"alternate_info": True}, {"stop_decoder_grad": True}):
        cfg = TrainConfig(epochs=1, batch_size=45, seed=0, **kwargs)
        state = train_loop(cfg, toy_data, SMALL)
        rec = state.metrics[0]
        assert rec["info"] > 0 and np.isfinite(rec["total"])


def test_divergence_raises(toy_data):
    state = TrainState.initialize(SMALL, TrainConfig())
    state.model.params["encoder.logvar.bias"].data[:] = 1e6
    with pytest.raises(TrainingDivergedError):
        train_step(state, toy_data[:8], TrainConfig(betas=Betas()))


@pytest.mark.parametrize("kwargs", [
    {"epochs": -1}, {"batch_size": 0}, {"mode": "gan"}, {"likelihood": "poisson"},
    {"dtype": "float16"}, {"learning_rate": 0.0}, {"info_samples_per_step": 0},
])
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_empty_data_rejected():
    with pytest.raises(ValueError):
        train_loop(TrainConfig(epochs=1), np.zeros((0, 16)), SMALL)
