import numpy as np
import pytest

from structalign.neural import (
    AlignmentNet,
    ModelConfig,
    ShapeError,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    receptive_field_mask,
    save_checkpoint,
    train,
)

SMALL = ModelConfig(input_size=16, channels=(4, 8, 8), fc_sizes=(64, 32))


def _grids(n: int, size: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).random((n, size, size)).astype(np.float32)


class TestForward:
    def test_output_dim(self):
        net = AlignmentNet(SMALL, seed=0)
        out, _ = net.forward(_grids(3, 16))
        assert out.shape == (3, 64)

    def test_infer_deterministic(self):
        net = AlignmentNet(SMALL, seed=1)
        x = _grids(2, 16)
        a, _ = net.forward(x, train=False)
        b, _ = net.forward(x, train=False)
        assert np.array_equal(a, b)

    def test_dropout_varies_train_outputs(self):
        net = AlignmentNet(SMALL, seed=2)
        x = _grids(2, 16, seed=5)
        rng = np.random.default_rng(0)
        a, _ = net.forward(x, train=True, rng=rng)
        b, _ = net.forward(x, train=True, rng=rng)
        assert not np.array_equal(a, b)

    def test_same_seed_same_init(self):
        a = AlignmentNet(SMALL, seed=7)
        b = AlignmentNet(SMALL, seed=7)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])

    def test_wrong_grid_size_rejected(self):
        net = AlignmentNet(SMALL, seed=0)
        with pytest.raises(ShapeError):
            net.forward(_grids(1, 32))

    def test_names_track_dilations(self):
        assert ModelConfig().name == "DCNN_2+3"
        assert ModelConfig(dilation_layer2=1, dilation_layer3=1).name == "CNN_1+1"

    def test_train_forward_updates_running_stats(self):
        net = AlignmentNet(SMALL, seed=0)
        before = net.running["bn1_mean"].copy()
        net.forward(_grids(4, 16), train=True, rng=np.random.default_rng(0))
        assert not np.array_equal(net.running["bn1_mean"], before)

    def test_infer_forward_keeps_running_stats(self):
        net = AlignmentNet(SMALL, seed=0)
        before = net.running["bn1_mean"].copy()
        net.forward(_grids(4, 16), train=False)
        assert np.array_equal(net.running["bn1_mean"], before)


class TestTrain:
    def _set(self, n, seed=0):
        x = _grids(n, 16, seed)
        t = np.random.default_rng(seed + 1).random((n, 64)).astype(np.float32)
        return [(x[i], t[i]) for i in range(n)]

    def test_zero_epochs_keeps_initialization(self):
        net = AlignmentNet(SMALL, seed=3)
        init = net.state_copy()
        result = train(net, self._set(2), self._set(1, seed=9),
                       TrainConfig(epochs=0, batch_size=2))
        for k, v in init.items():
            got = {**result.model.params, **result.model.running}[k]
            assert np.array_equal(got, v)

    def test_loss_decreases_on_tiny_overfit(self):
        cfg = ModelConfig(input_size=16, channels=(4, 8, 8), fc_sizes=(64, 32),
                          dropout_p=0.0)
        net = AlignmentNet(cfg, seed=0)
        data = self._set(2)
        result = train(net, data, data,
                       TrainConfig(epochs=60, batch_size=1, patience=60, seed=0))
        first = result.history[0][1]
        assert result.best_val_loss < 0.1 * first

    def test_deterministic_for_seed(self):
        results = []
        for _ in range(2):
            net = AlignmentNet(SMALL, seed=4)
            results.append(train(net, self._set(3), self._set(1, seed=9),
                                 TrainConfig(epochs=2, batch_size=2, seed=11)))
        for k in results[0].model.params:
            assert np.array_equal(results[0].model.params[k],
                                  results[1].model.params[k])
        assert results[0].history == results[1].history

    def test_early_stopping_restores_best(self):
        net = AlignmentNet(SMALL, seed=5)
        result = train(net, self._set(3), self._set(2, seed=9),
                       TrainConfig(epochs=30, batch_size=3, patience=2))
        assert result.best_epoch <= len(result.history)
        val_losses = [h[2] for h in result.history]
        assert result.best_val_loss == pytest.approx(
            min(min(val_losses), result.best_val_loss))

    def test_nan_input_raises_diverged(self):
        net = AlignmentNet(SMALL, seed=6)
        bad = [(np.full((16, 16), np.nan, dtype=np.float32), np.ones(64))]
        with pytest.raises(TrainingDivergedError):
            train(net, bad, self._set(1), TrainConfig(epochs=1, batch_size=1))

    def test_empty_sets_rejected(self):
        net = AlignmentNet(SMALL, seed=0)
        with pytest.raises(ValueError):
            train(net, [], self._set(1))


class TestCheckpoint:
    def test_forward_bit_identical_after_round_trip(self, tmp_path):
        net = AlignmentNet(SMALL, seed=8)
        # perturb running stats away from defaults so they must round trip too
        net.forward(_grids(4, 16), train=True, rng=np.random.default_rng(0))
        x = _grids(3, 16, seed=2)
        before, _ = net.forward(x, train=False)
        f = tmp_path / "model.dcnn"
        save_checkpoint(f, net, {"note": "round trip"})
        loaded, meta = load_checkpoint(f)
        after, _ = loaded.forward(x, train=False)
        assert np.array_equal(before, after)
        assert meta["note"] == "round trip"

    def test_config_round_trips(self, tmp_path):
        cfg = ModelConfig(input_size=16, channels=(4, 8, 8), fc_sizes=(64, 32),
                          dilation_layer2=1, dilation_layer3=1, dropout_p=0.25)
        f = tmp_path / "model.dcnn"
        save_checkpoint(f, AlignmentNet(cfg, seed=0))
        loaded, _ = load_checkpoint(f)
        assert loaded.config == cfg

    def test_bytes_deterministic_for_seed(self, tmp_path):
        for sub in ("a", "b"):
            save_checkpoint(tmp_path / sub, AlignmentNet(SMALL, seed=12))
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


class TestReceptiveField:
    def test_dilated_field_strictly_contains_undilated(self):
        size = 64
        dil = ModelConfig(input_size=size, channels=(4, 8, 8), fc_sizes=(16, 8))
        und = ModelConfig(input_size=size, channels=(4, 8, 8), fc_sizes=(16, 8),
                          dilation_layer2=1, dilation_layer3=1)
        m_dil = receptive_field_mask(dil, trials=4)
        m_und = receptive_field_mask(und, trials=4)
        assert np.all(m_dil[m_und])          # superset
        assert m_dil.sum() > m_und.sum()     # strictly larger

    def test_field_is_centered_patch(self):
        cfg = ModelConfig(input_size=64, channels=(4, 8, 8), fc_sizes=(16, 8),
                          dilation_layer2=1, dilation_layer3=1)
        mask = receptive_field_mask(cfg, trials=4)
        rows = np.flatnonzero(mask.any(axis=1))
        assert 0 < rows[0] and rows[-1] < 63  # bounded patch, not whole input
