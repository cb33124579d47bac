import numpy as np
import pytest

from src.models.hardware_model import NoiseModel
from src.models.report_model import HwSweepRow
from src.models.schemas import Algorithm, WritePolicy
from src.models.training_model import TrainConfig
from src.services.data_service import synthetic_blobs
from src.services.hardware_service import (
    HardwareSimulator, asymmetric_backward, program_write, quantize, run_hw_experiment, summarize_rows,
    weight_range,
)
from src.services.network_service import fc_architecture, init_network
from src.services.trainer_service import Trainer
from src.utils.errors import ConfigurationError
from src.utils.tensor_ops import make_rng


class TestQuantize:
    def test_four_bit_rounds_to_nearest_of_sixteen_levels(self):
        assert quantize(np.array([0.3]), 4, 1.0)[0] == pytest.approx(1 / 3)

    def test_level_count(self):
        sweep = quantize(np.linspace(-1.0, 1.0, 10_001), 4, 1.0)
        levels = np.unique(np.round(sweep, 12))
        assert levels.size == 16
        np.testing.assert_allclose(np.diff(levels), 2 / 15)
        np.testing.assert_allclose(levels[[0, -1]], [-1.0, 1.0])

    def test_zero_goes_to_nearest_level(self):
        assert abs(quantize(np.array([0.0]), 4, 1.0)[0]) == pytest.approx(1 / 15)

    def test_idempotent(self, rng):
        w = rng.normal(size=(20, 20))
        once = quantize(w, 3, 2.0)
        np.testing.assert_array_equal(quantize(once, 3, 2.0), once)

    def test_saturates_at_range(self):
        np.testing.assert_allclose(quantize(np.array([5.0, -5.0]), 4, 1.0), [1.0, -1.0])

    def test_full_precision_is_identity(self, rng):
        w = rng.normal(size=10)
        np.testing.assert_array_equal(quantize(w, 32, 1.0), w)

    @pytest.mark.parametrize("r", [0.0, -1.0])
    def test_range_must_be_positive(self, r):
        with pytest.raises(ConfigurationError):
            quantize(np.ones(2), 4, r)

    def test_weight_range(self):
        assert weight_range(np.array([[0.5, -2.0]])) == pytest.approx(2.5)
        assert weight_range(np.zeros((2, 2))) == 1.0


class TestProgramWrite:
    def test_noise_scale(self):
        w = np.ones((200, 200))
        written = program_write(w, NoiseModel(alpha=0.05), make_rng(0), quantized=False)
        assert (written - w).std() == pytest.approx(0.05, rel=0.05)
        assert abs((written - w).mean()) < 0.002

    def test_zero_weights_get_no_noise(self):
        written = program_write(np.zeros((5, 5)), NoiseModel(alpha=0.2, bits=4), make_rng(0), r=1.0, quantized=False)
        np.testing.assert_array_equal(written, 0.0)
        quantized = program_write(np.zeros((5, 5)), NoiseModel(alpha=0.2, bits=4), make_rng(0), r=1.0)
        np.testing.assert_array_equal(quantized, quantize(np.zeros((5, 5)), 4, 1.0))

    def test_noiseless_full_precision_is_exact(self, rng):
        w = rng.normal(size=(4, 4))
        np.testing.assert_array_equal(program_write(w, NoiseModel(), make_rng(0)), w)


class TestAsymmetricBackward:
    def test_corrupts_exact_count_of_a_square_matrix(self):
        back = asymmetric_backward(np.ones((10, 10)), 0.2, make_rng(0), margin=0.1)
        changed = back != 1.0
        assert changed.sum() == 20
        assert set(np.round(back[changed], 12)) <= {0.9, 1.1}

    def test_corrupts_a_wide_matrix(self, rng):
        W = rng.normal(size=(128, 1024))
        back = asymmetric_backward(W, 1.0, make_rng(0))
        assert back.shape == (1024, 128)
        ratio = back / W.T
        np.testing.assert_allclose(np.sort(np.unique(np.round(ratio, 12))), [0.9, 1.1])

    def test_input_is_untouched(self):
        W = np.asfortranarray(np.ones((4, 6)))
        asymmetric_backward(W, 1.0, make_rng(0))
        np.testing.assert_array_equal(W, 1.0)

    def test_returns_transpose(self, rng):
        W = rng.normal(size=(3, 5))
        np.testing.assert_array_equal(asymmetric_backward(W, 0.0, make_rng(0)), W.T)

    def test_fraction_range(self):
        with pytest.raises(ConfigurationError):
            asymmetric_backward(np.ones((2, 2)), 1.5, make_rng(0))


def assert_on_grid(w, r, bits):
    step = 2 * r / (2 ** bits - 1)
    k = (w + r) / step
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)


class TestHardwareSimulator:
    def arch(self):
        return fc_architecture(2, (8,), 2, dropout=0.0)

    def test_attach_puts_weights_on_grid(self):
        net = init_network(self.arch(), make_rng(0))
        sim = HardwareSimulator(NoiseModel(bits=3), make_rng(1))
        sim.attach(net)
        for key, w in net.weights.items():
            assert_on_grid(w, sim.ranges[key], 3)

    def test_ftp_never_requests_backward_arrays(self):
        net = init_network(self.arch(), make_rng(0))
        sim = HardwareSimulator(NoiseModel(bits=4, alpha=0.02), make_rng(1))
        trainer = Trainer(net, Algorithm.FTP, TrainConfig(lr=0.05, batch_size=16), hardware=sim)
        G_programmed = trainer.net.feedback.G.copy()
        trainer.train_epoch(synthetic_blobs(64))
        assert sim.backward_requests == 0
        np.testing.assert_array_equal(trainer.net.feedback.G, G_programmed)

    def test_bp_requests_backward_arrays_every_step(self):
        net = init_network(self.arch(), make_rng(0), feedback=False)
        sim = HardwareSimulator(NoiseModel(bits=4, alpha=0.02), make_rng(1))
        Trainer(net, Algorithm.BP, TrainConfig(lr=0.05, batch_size=16), hardware=sim).train_epoch(synthetic_blobs(64))
        assert sim.backward_requests == 4

    def test_write_once_keeps_updates_off_the_grid(self):
        net = init_network(self.arch(), make_rng(0))
        sim = HardwareSimulator(NoiseModel(bits=3, write_policy=WritePolicy.ONCE), make_rng(1))
        trainer = Trainer(net, Algorithm.FTP, TrainConfig(lr=0.05, batch_size=16), hardware=sim)
        trainer.train_epoch(synthetic_blobs(64))
        w = trainer.net.weights["W1"]
        k = (w + sim.ranges["W1"]) / (2 * sim.ranges["W1"] / 7)
        assert not np.allclose(k, np.round(k))


def test_summarize_rows():
    rows = [HwSweepRow(rule="ftp", bits=4, alpha=0.1, seed=s, test_accuracy=a) for s, a in enumerate([0.8, 0.9])]
    mean, std = summarize_rows(rows)[("ftp", 0.1)]
    assert mean == pytest.approx(0.85)
    assert std == pytest.approx(np.std([0.8, 0.9], ddof=1))


def test_alpha_sweep_rows():
    data = synthetic_blobs(64)
    rows = run_hw_experiment(Algorithm.FTP, NoiseModel(bits=4), data, data, TrainConfig(lr=0.05, batch_size=16, epochs=1),
                             fc_architecture(2, (8,), 2, dropout=0.0), alphas=(0.0, 0.1), seeds=(0, 1))
    assert [(r.alpha, r.seed) for r in rows] == [(0.0, 0), (0.0, 1), (0.1, 0), (0.1, 1)]
    assert all(0.0 <= r.test_accuracy <= 1.0 for r in rows)
