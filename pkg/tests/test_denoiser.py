import math
from unittest.mock import patch

import numpy as np
import pytest

from app.denoiser.checkpoint import load_checkpoint, save_checkpoint
from app.denoiser.gradcheck import grad_check, small_config
from app.denoiser.model import forward, init_params, param_shapes
from app.denoiser.training import (Adam, build_training_layouts, clip_gradients, diffusion_loss,
                                   fill_completion, sample_mask, train)
from app.errors import Divergence, NoMaskedPositions, ParseError, ShapeMismatch
from app.models.config import ModelConfig, TrainingConfig
from app.models.layout import MaskState
from app.seqcore.layout import TEMPLATE_SOLVE, assemble_layout
from app.taskgen.solver import solution_text


@pytest.fixture
def gold_layout(chain_problem, vocab, tiny_config):
    layout = assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=16,
                             max_len=tiny_config.max_len)
    return fill_completion(layout, solution_text(chain_problem), vocab)


@pytest.fixture
def fully_masked(gold_layout):
    def make(t):
        masked = tuple(not frozen for frozen in gold_layout.frozen)
        return [(gold_layout, MaskState(masked=masked, t=t))]
    return make


@pytest.fixture
def hyperparams():
    return TrainingConfig(epochs=2, batch_size=2, lr=1e-3, gen_len=24, eval_examples=2,
                          plan_fraction=0.5, plan_request_fraction=0.0)


class TestForward:
    """Tests for the transformer forward pass."""

    def test_attention_rows_sum_to_one(self, tiny_config, gold_layout):
        params = init_params(tiny_config, seed=0)
        logits, attention = forward(params, tiny_config, gold_layout.ids, trace_attention=True)
        assert logits.shape == (len(gold_layout), tiny_config.vocab_size)
        assert len(attention) == tiny_config.layers * tiny_config.heads
        for tensor in attention:
            assert tensor.weights.shape == (len(gold_layout), len(gold_layout))
            np.testing.assert_allclose(tensor.weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_later_tokens_change_earlier_logits(self, tiny_config, gold_layout, vocab):
        params = init_params(tiny_config, seed=0)
        ids = list(gold_layout.ids)
        before, _ = forward(params, tiny_config, ids)
        ids[-1] = vocab.pad_id if ids[-1] != vocab.pad_id else vocab.mask_id
        after, _ = forward(params, tiny_config, ids)
        for position in (1, gold_layout.completion_start):
            assert not np.allclose(before[position], after[position])

    def test_logits_are_deterministic(self, tiny_config, gold_layout):
        params = init_params(tiny_config, seed=0)
        first, _ = forward(params, tiny_config, gold_layout.ids)
        second, _ = forward(params, tiny_config, gold_layout.ids)
        np.testing.assert_array_equal(first, second)

    def test_init_is_seeded(self, tiny_config):
        a, b = init_params(tiny_config, seed=3), init_params(tiny_config, seed=3)
        assert all(np.array_equal(a[name], b[name]) for name in a)
        assert set(a) == set(param_shapes(tiny_config))

    def test_rejects_too_long_sequences(self, tiny_config):
        params = init_params(tiny_config, seed=0)
        with pytest.raises(ShapeMismatch):
            forward(params, tiny_config, [0] * (tiny_config.max_len + 1))

    def test_mask_state_must_match_mask_tokens(self, tiny_config, gold_layout, vocab):
        params = init_params(tiny_config, seed=0)
        masked = tuple(not frozen for frozen in gold_layout.frozen)
        with pytest.raises(ShapeMismatch):
            forward(params, tiny_config, gold_layout.ids, MaskState(masked=masked, t=1.0),
                    mask_id=vocab.mask_id)

    def test_heads_must_divide_width(self):
        with pytest.raises(ValueError):
            ModelConfig(d_model=30, heads=4)


class TestLoss:
    """Tests for the weighted masked cross-entropy."""

    def test_initial_loss_is_near_uniform(self, tiny_config, fully_masked, vocab):
        params = init_params(tiny_config, seed=0)
        loss, _ = diffusion_loss(params, tiny_config, fully_masked(1.0), vocab, "unweighted",
                                 with_grads=False)
        assert abs(loss - math.log(len(vocab))) < 0.1

    def test_inverse_t_weighting(self, tiny_config, fully_masked, vocab):
        params = init_params(tiny_config, seed=0)
        batch = fully_masked(0.25)
        weighted, _ = diffusion_loss(params, tiny_config, batch, vocab, "inverse_t", with_grads=False)
        plain, _ = diffusion_loss(params, tiny_config, batch, vocab, "unweighted", with_grads=False)
        assert weighted == pytest.approx(4.0 * plain)

    def test_no_masked_positions(self, tiny_config, gold_layout, vocab):
        params = init_params(tiny_config, seed=0)
        batch = [(gold_layout, MaskState(masked=(False,) * len(gold_layout), t=0.5))]
        with pytest.raises(NoMaskedPositions):
            diffusion_loss(params, tiny_config, batch, vocab)

    def test_loss_ignores_batch_order(self, tiny_config, gold_layout, vocab):
        params = init_params(tiny_config, seed=0)
        rng = np.random.default_rng(3)
        batch = [(gold_layout, sample_mask(gold_layout, rng)) for _ in range(3)]
        loss, grads = diffusion_loss(params, tiny_config, batch, vocab)
        reversed_loss, reversed_grads = diffusion_loss(params, tiny_config, batch[::-1], vocab)
        assert reversed_loss == pytest.approx(loss, rel=1e-12)
        for name in grads:
            np.testing.assert_allclose(reversed_grads[name], grads[name], rtol=1e-9, atol=1e-12)

    def test_sample_mask_masks_at_least_one(self, gold_layout):
        rng = np.random.default_rng(0)
        for _ in range(50):
            state = sample_mask(gold_layout, rng)
            assert state.n_masked >= 1
            assert 0.0 < state.t <= 1.0
            assert all(not state.masked[i] for i in range(gold_layout.completion_start))


class TestGradCheck:
    """Tests for the finite-difference gradient check."""

    def test_backward_matches_finite_differences(self):
        report = grad_check(seed=0, n_samples=60)
        assert report.max_relative_error < 1e-4

    def test_detects_corrupted_gradient(self):
        report = grad_check(seed=0, n_samples=10, corrupt=("head.b", 0))
        assert report.errors_for("head.b", 0)[0] > 1e-2
        assert report.worst.name == "head.b"

    def test_zero_layer_model(self):
        report = grad_check(config=small_config(layers=0), seed=1, n_samples=30)
        assert report.max_relative_error < 1e-4


class TestOptimisation:
    """Tests for gradient clipping and Adam."""

    def test_clip_gradients(self):
        grads = {"a": np.array([3.0, 4.0])}
        assert clip_gradients(grads, 1.0) == pytest.approx(5.0)
        np.testing.assert_allclose(grads["a"], [0.6, 0.8])

    def test_clip_is_noop_under_threshold(self):
        grads = {"a": np.array([0.3, 0.4])}
        clip_gradients(grads, 1.0)
        np.testing.assert_allclose(grads["a"], [0.3, 0.4])

    def test_first_adam_step_moves_by_lr(self):
        params = {"w": np.array([1.0, 1.0])}
        optimizer = Adam(params, lr=0.1)
        optimizer.step(params, {"w": np.array([2.0, -0.5])})
        np.testing.assert_allclose(params["w"], [0.9, 1.1], atol=1e-6)


@pytest.mark.slow
class TestTraining:
    """Tests for the training loop and checkpoints."""

    @pytest.fixture
    def corpus(self, chain_problems, hyperparams, vocab, tiny_config):
        layouts = build_training_layouts(chain_problems[:4], hyperparams, vocab, tiny_config.max_len, seed=0)
        assert layouts
        return layouts

    def test_same_seed_same_curve(self, tiny_config, corpus, hyperparams, vocab):
        first = train(tiny_config, corpus, hyperparams, seed=5, vocab=vocab)
        second = train(tiny_config, corpus, hyperparams, seed=5, vocab=vocab)
        assert first.curve == second.curve
        assert len(first.curve) == hyperparams.epochs + 1
        assert all(np.array_equal(first.params[n], second.params[n]) for n in first.params)

    def test_loss_falls_on_a_small_corpus(self, chain_problems, vocab):
        config = ModelConfig(layers=1, d_model=32, heads=2, d_ff=64, vocab_size=len(vocab), max_len=128)
        hyperparams = TrainingConfig(epochs=200, batch_size=2, lr=1e-2, gen_len=24, eval_examples=2,
                                     plan_fraction=0.0, plan_request_fraction=0.0)
        corpus = build_training_layouts(chain_problems[:2], hyperparams, vocab, config.max_len, seed=0)
        result = train(config, corpus, hyperparams, seed=3, vocab=vocab)
        assert result.losses[-1] < 0.25 * result.losses[0]

    def test_zero_learning_rate_keeps_loss_constant(self, tiny_config, corpus, hyperparams, vocab):
        hyperparams.lr = 0.0
        result = train(tiny_config, corpus, hyperparams, seed=5, vocab=vocab)
        assert len(set(result.losses)) == 1

    def test_vocab_size_filled_from_vocabulary(self, corpus, hyperparams, vocab):
        config = ModelConfig(layers=1, d_model=16, heads=2, d_ff=32, max_len=128)
        result = train(config, corpus, hyperparams, seed=1, vocab=vocab)
        assert result.config.vocab_size == len(vocab)

    def test_divergence_is_reported(self, tiny_config, corpus, hyperparams, vocab):
        with patch("app.denoiser.training.diffusion_loss", return_value=(float("nan"), None)):
            with pytest.raises(Divergence) as excinfo:
                train(tiny_config, corpus, hyperparams, seed=5, vocab=vocab)
        assert excinfo.value.details["epoch"] == 1
        assert excinfo.value.last_good_params is not None

    def test_checkpoint_written_after_training(self, tmp_path, tiny_config, corpus, hyperparams, vocab):
        path = tmp_path / "model.npz"
        result = train(tiny_config, corpus, hyperparams, seed=5, vocab=vocab, checkpoint_path=path,
                       checkpoint_extra={"config_hash": "abc"})
        params, config, header = load_checkpoint(path)
        assert config == result.config
        assert header["config_hash"] == "abc"
        assert all(np.array_equal(params[n], result.params[n]) for n in params)


class TestCheckpoint:
    """Tests for checkpoint files."""

    def test_round_trip(self, tmp_path, tiny_config):
        params = init_params(tiny_config, seed=2)
        path = save_checkpoint(tmp_path / "ckpt" / "model.npz", params, tiny_config, {"seed": 2})
        loaded, config, header = load_checkpoint(path)
        assert config == tiny_config
        assert header["seed"] == 2
        assert set(loaded) == set(params)
        assert all(np.array_equal(loaded[n], params[n]) for n in params)

    def test_missing_tensor_is_rejected(self, tmp_path, tiny_config):
        params = init_params(tiny_config, seed=2)
        del params["head.b"]
        path = save_checkpoint(tmp_path / "model.npz", params, tiny_config)
        with pytest.raises(ShapeMismatch):
            load_checkpoint(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "model.npz"
        path.write_bytes(b"not an archive")
        with pytest.raises(ParseError):
            load_checkpoint(path)
