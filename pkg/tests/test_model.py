"""Transformer forward/backward, loss masking, training loop, checkpoints."""

from __future__ import annotations

import numpy as np
import pytest

from fd import check_gradients
from promptmt.corpus import SPECIAL_TOKENS, Vocab
from promptmt.errors import DataError
from promptmt.model import (
    Adam,
    Batch,
    ModelConfig,
    TrainConfig,
    average_params,
    decoder_logits,
    encode_source,
    forward,
    init_params,
    load_checkpoint,
    log_softmax,
    loss,
    loss_and_gradients,
    make_batch,
    save_checkpoint,
    softmax,
    train,
)
from promptmt.prompt import PromptedExample


def tiny_config(**overrides):
    defaults = dict(
        vocab_size=16,
        d_model=8,
        n_heads=2,
        n_enc_layers=1,
        n_dec_layers=1,
        d_ff=16,
        max_positions=32,
        dropout=0.0,
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


def random_batch(rng, config, b=2, s=5, t=6, n_prefix=2):
    """Random ids with full pads and a mask open after position n_prefix."""
    src = rng.integers(4, config.vocab_size, size=(b, s), dtype=np.int64)
    out = rng.integers(4, config.vocab_size, size=(b, t), dtype=np.int64)
    mask = np.zeros((b, t))
    mask[:, n_prefix + 1 :] = 1.0
    return Batch(src=src, src_pad=np.ones((b, s)), out=out, loss_mask=mask)


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(vocab_size=10, d_model=10, n_heads=4)

    def test_dropout_range(self):
        with pytest.raises(ValueError, match="dropout"):
            tiny_config(dropout=1.0)

    def test_dict_round_trip(self):
        cfg = tiny_config()
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestForward:
    def test_single_token_output_shape(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=0)
        batch = Batch(
            src=np.array([[5, 6]]),
            src_pad=np.ones((1, 2)),
            out=np.array([[7]]),
            loss_mask=np.ones((1, 1)),
        )
        logits, _ = forward(params, cfg, batch)
        assert logits.shape == (1, 1, cfg.vocab_size)
        assert np.all(np.isfinite(logits))

    def test_causality(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=1)
        rng = np.random.default_rng(2)
        batch = random_batch(rng, cfg)
        logits, _ = forward(params, cfg, batch)
        for j in range(batch.out.shape[1]):
            perturbed = Batch(
                src=batch.src,
                src_pad=batch.src_pad,
                out=batch.out.copy(),
                loss_mask=batch.loss_mask,
            )
            perturbed.out[0, j] = (perturbed.out[0, j] + 1) % cfg.vocab_size
            new_logits, _ = forward(params, cfg, perturbed)
            assert np.array_equal(new_logits[0, : j + 1], logits[0, : j + 1])
            assert not np.allclose(new_logits[0, j + 1 :], logits[0, j + 1 :]) or (
                j == batch.out.shape[1] - 1
            )

    def test_cross_attention_reach(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=3)
        rng = np.random.default_rng(4)
        batch = random_batch(rng, cfg)
        logits, _ = forward(params, cfg, batch)
        perturbed = Batch(
            src=batch.src.copy(),
            src_pad=batch.src_pad,
            out=batch.out,
            loss_mask=batch.loss_mask,
        )
        perturbed.src[0, 0] = (perturbed.src[0, 0] + 1) % cfg.vocab_size
        new_logits, _ = forward(params, cfg, perturbed)
        # every output position sees the encoder, so all of row 0 moves
        assert np.all(np.any(new_logits[0] != logits[0], axis=-1))
        assert np.array_equal(new_logits[1], logits[1])

    def test_padded_keys_do_not_leak(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=5)
        src = np.array([[5, 6, 0, 0]])
        pad = np.array([[1.0, 1.0, 0.0, 0.0]])
        out = np.array([[7, 8]])
        mask = np.array([[1.0, 1.0]])
        logits, _ = forward(params, cfg, Batch(src, pad, out, mask))
        # junk in padded slots must not reach any logits
        src2 = src.copy()
        src2[0, 2:] = 9
        logits2, _ = forward(params, cfg, Batch(src2, pad, out, mask))
        assert np.allclose(logits, logits2)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(3, 4, 11)) * 10
        assert np.allclose(softmax(x).sum(axis=-1), 1.0, atol=1e-6)
        assert np.allclose(np.exp(log_softmax(x)).sum(axis=-1), 1.0, atol=1e-6)

    def test_decode_path_matches_training_forward(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=7)
        rng = np.random.default_rng(8)
        batch = random_batch(rng, cfg, b=1)
        logits, _ = forward(params, cfg, batch)
        enc = encode_source(params, cfg, batch.src, batch.src_pad)
        from promptmt.corpus import BOS_ID

        dec_in = np.concatenate([[[BOS_ID]], batch.out[:, :-1]], axis=1)
        step_logits = decoder_logits(params, cfg, enc, batch.src_pad, dec_in)
        assert np.allclose(logits, step_logits, atol=1e-10)


class TestLoss:
    def test_uniform_logits_analytic(self):
        batch = Batch(
            src=np.array([[5]]),
            src_pad=np.ones((1, 1)),
            out=np.array([[3, 7]]),
            loss_mask=np.array([[0.0, 1.0]]),
        )
        logits = np.zeros((1, 2, 4))
        batch = Batch(batch.src, batch.src_pad, np.array([[3, 1]]), batch.loss_mask)
        assert loss(logits, batch) == pytest.approx(np.log(4.0), rel=1e-12)

    def test_matches_per_position_oracle(self):
        rng = np.random.default_rng(9)
        logits = rng.normal(size=(3, 5, 7))
        out = rng.integers(0, 7, size=(3, 5), dtype=np.int64)
        mask = (rng.random((3, 5)) < 0.6).astype(float)
        mask[:, 2] = 1.0  # no all-zero rows
        batch = Batch(np.zeros((3, 1), dtype=np.int64), np.ones((3, 1)), out, mask)

        expected = 0.0
        for b in range(3):
            for t in range(5):
                if mask[b, t]:
                    row = logits[b, t]
                    logp = row[out[b, t]] - np.log(np.exp(row).sum())
                    expected -= logp
        expected /= 3
        assert abs(loss(logits, batch) - expected) <= 1e-10 * abs(expected)

    def test_mask_relabeling_invariance(self):
        rng = np.random.default_rng(10)
        logits = rng.normal(size=(2, 4, 6))
        out = rng.integers(0, 6, size=(2, 4), dtype=np.int64)
        mask = np.array([[0.0, 0.0, 1.0, 1.0], [0.0, 1.0, 1.0, 0.0]])
        batch = Batch(np.zeros((2, 1), dtype=np.int64), np.ones((2, 1)), out, mask)
        base = loss(logits, batch)
        relabeled = out.copy()
        relabeled[mask == 0] = (relabeled[mask == 0] + 3) % 6
        batch2 = Batch(batch.src, batch.src_pad, relabeled, mask)
        assert loss(logits, batch2) == base

    def test_all_zero_mask_rejected(self):
        batch = Batch(
            src=np.array([[5]]),
            src_pad=np.ones((1, 1)),
            out=np.array([[3]]),
            loss_mask=np.zeros((1, 1)),
        )
        with pytest.raises(DataError, match="all-zero"):
            loss(np.zeros((1, 1, 4)), batch)


class TestGradients:
    def test_matches_finite_differences(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=11)
        rng = np.random.default_rng(12)
        batch = random_batch(rng, cfg, b=2, s=4, t=5)
        _, grads = loss_and_gradients(params, cfg, batch)
        worst, worst_name = check_gradients(
            params, cfg, batch, grads, rng, samples_per_tensor=4
        )
        assert worst < 1e-4, f"worst {worst:.2e} at {worst_name}"

    def test_lookup_gradient_zero_for_absent_tokens(self):
        # only the tied projection touches unseen rows; the lookup path
        # contributes nothing
        from promptmt.model import _embed_backward, zeros_like_params

        cfg = tiny_config()
        params = init_params(cfg, seed=13)
        grads = zeros_like_params(params)
        ids = np.array([[4, 5], [5, 6]])
        _embed_backward(np.ones((2, 2, cfg.d_model)), ids, None, 1.0, grads)
        touched = sorted(set(ids.ravel().tolist()))
        assert touched == [4, 5, 6]
        untouched = [i for i in range(cfg.vocab_size) if i not in touched]
        assert np.all(grads["embed"][untouched] == 0.0)
        assert np.all(grads["embed"][touched] != 0.0)


def toy_vocab(n_words=8):
    return Vocab(list(SPECIAL_TOKENS) + [f"w{i}" for i in range(n_words)])


def copy_examples(n, rng, n_words=8, lo=2, hi=5):
    out = []
    for i in range(n):
        length = rng.integers(lo, hi + 1)
        words = tuple(f"w{rng.integers(0, n_words)}" for _ in range(length))
        out.append(
            PromptedExample(
                id=i,
                input_tokens=("[Input]",) + words,
                output_tokens=("[Output]",) + words + ("<eos>",),
                loss_mask=(0,) + (1,) * (len(words) + 1),
            )
        )
    return out


class TestTraining:
    def test_zero_epochs_leaves_params_unchanged(self):
        cfg = tiny_config(vocab_size=17)
        params = init_params(cfg, seed=14)
        vocab = toy_vocab()
        data = copy_examples(4, np.random.default_rng(15))
        result = train(
            params, cfg, data, None, TrainConfig(max_epochs=0, batch_size=2), vocab
        )
        assert result.train_losses == []
        for k in params:
            assert np.array_equal(result.params[k], params[k])

    def test_deterministic_loss_curve(self):
        cfg = tiny_config(vocab_size=17, dropout=0.1)
        params = init_params(cfg, seed=16)
        vocab = toy_vocab()
        data = copy_examples(10, np.random.default_rng(17))
        tc = TrainConfig(max_epochs=3, batch_size=4, seed=5)
        r1 = train(params, cfg, data, data, tc, vocab)
        r2 = train(params, cfg, data, data, tc, vocab)
        assert r1.train_losses == r2.train_losses
        assert r1.val_losses == r2.val_losses

    def test_overfits_copy_task(self):
        cfg = ModelConfig(
            vocab_size=17,
            d_model=32,
            n_heads=4,
            n_enc_layers=1,
            n_dec_layers=1,
            d_ff=64,
            max_positions=16,
            dropout=0.0,
        )
        params = init_params(cfg, seed=18)
        vocab = toy_vocab()
        data = copy_examples(50, np.random.default_rng(19))
        tc = TrainConfig(
            lr=6e-3,
            max_epochs=30,
            batch_size=4,
            seed=6,
            warmup_steps=40,
            schedule="linear",
        )
        result = train(params, cfg, data, None, tc, vocab)
        assert result.train_losses[-1] < 0.1

    def test_early_stopping_on_flat_validation(self):
        cfg = tiny_config(vocab_size=17)
        params = init_params(cfg, seed=20)
        vocab = toy_vocab()
        data = copy_examples(6, np.random.default_rng(21))
        # lr 0 freezes the model, so validation never improves after epoch 0
        tc = TrainConfig(lr=0.0, max_epochs=50, patience=1, batch_size=3)
        result = train(params, cfg, data, data, tc, vocab)
        assert len(result.train_losses) == 2
        assert result.best_epoch == 0

    def test_divergence_aborts(self):
        cfg = tiny_config(vocab_size=17)
        params = init_params(cfg, seed=22)
        params["embed"][5, 0] = np.nan
        vocab = toy_vocab()
        data = copy_examples(4, np.random.default_rng(23))
        with pytest.raises(RuntimeError, match="diverged"):
            train(params, cfg, data, None, TrainConfig(max_epochs=1, batch_size=2), vocab)

    def test_checkpoint_averaging(self):
        a = {"w": np.array([1.0, 3.0])}
        b = {"w": np.array([3.0, 5.0])}
        avg = average_params([a, b])
        assert np.array_equal(avg["w"], np.array([2.0, 4.0]))

    def test_lr_schedule(self):
        tc = TrainConfig(lr=1.0, warmup_steps=4, schedule="linear")
        assert tc.lr_at(1, 100) == 0.25
        assert tc.lr_at(4, 100) == 1.0
        assert tc.lr_at(50, 100) == 0.5
        assert tc.lr_at(100, 100) == 0.0
        constant = TrainConfig(lr=0.5)
        assert constant.lr_at(1, 100) == 0.5
        assert constant.lr_at(100, 100) == 0.5
        with pytest.raises(ValueError, match="schedule"):
            TrainConfig(schedule="cosine").lr_at(1, 10)

    def test_adam_zero_lr_freezes(self):
        cfg = tiny_config()
        params = init_params(cfg, seed=24)
        before = {k: v.copy() for k, v in params.items()}
        opt = Adam(params, TrainConfig(lr=0.0))
        opt.step(params, {k: np.ones_like(v) for k, v in params.items()})
        for k in params:
            assert np.array_equal(params[k], before[k])


class TestBatch:
    def test_padding_layout(self):
        vocab = toy_vocab()
        examples = [
            PromptedExample(0, ("[Input]", "w0"), ("[Output]", "w1", "<eos>"), (0, 1, 1)),
            PromptedExample(
                1, ("[Input]", "w0", "w1", "w2"), ("[Output]", "w3", "w4", "<eos>"), (0, 1, 1, 1)
            ),
        ]
        batch = make_batch(examples, vocab, max_positions=16)
        assert batch.src.shape == (2, 4)
        assert batch.src[0, 2] == 0  # pad id
        assert batch.src_pad[0].tolist() == [1.0, 1.0, 0.0, 0.0]
        assert batch.loss_mask[0].tolist() == [0.0, 1.0, 1.0, 0.0]

    def test_too_long_rejected(self):
        vocab = toy_vocab()
        ex = PromptedExample(
            0, ("[Input]",) + ("w0",) * 20, ("[Output]", "w1", "<eos>"), (0, 1, 1)
        )
        with pytest.raises(DataError, match="max_positions"):
            make_batch([ex], vocab, max_positions=8)

    def test_empty_batch_rejected(self):
        with pytest.raises(DataError):
            make_batch([], toy_vocab(), 8)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = tiny_config(vocab_size=17)
        params = init_params(cfg, seed=25)
        vocab = toy_vocab()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, cfg, vocab)
        loaded, loaded_cfg, sidecar = load_checkpoint(path)
        assert loaded_cfg == cfg
        assert sidecar["vocab_sha256"] == vocab.sha256()
        assert sorted(loaded) == sorted(params)
        for k in params:
            assert np.array_equal(loaded[k], params[k])

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"garbage")
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(path)

    def test_missing_sidecar_rejected(self, tmp_path):
        cfg = tiny_config(vocab_size=17)
        params = init_params(cfg, seed=26)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, cfg, toy_vocab())
        (tmp_path / "model.ckpt.json").unlink()
        with pytest.raises(DataError, match="sidecar"):
            load_checkpoint(path)
