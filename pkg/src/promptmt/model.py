"""Encoder-decoder transformer in plain numpy with analytic gradients.

Everything runs in float64 on the CPU. Parameters live in a flat
name -> array dict; forward passes record a cache that the matching
backward pass consumes, and the whole gradient is checkable against finite
differences. The loss is the mean over examples of the summed negative log
likelihood at masked output positions only, so knowledge prefixes condition
the decoder without being trained targets.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import BOS_ID, PAD_ID, Vocab
from .errors import DataError

NEG_INF = -1e9
LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 256
    max_positions: int = 512
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        for name in ("vocab_size", "d_model", "n_heads", "n_enc_layers",
                     "n_dec_layers", "d_ff", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_enc_layers": self.n_enc_layers,
            "n_dec_layers": self.n_dec_layers,
            "d_ff": self.d_ff,
            "max_positions": self.max_positions,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class Batch:
    """Padded id matrices: src (B,S), out (B,T), with float 0/1 masks.

    out is the unshifted decoder-side sequence; position j of the loss mask
    refers to predicting out[j] from out[<j]. Padding must sit at the end of
    every row: decoder self-attention relies on it being causal-safe.
    """

    src: np.ndarray
    src_pad: np.ndarray
    out: np.ndarray
    loss_mask: np.ndarray


def make_batch(examples, vocab: Vocab, max_positions: int) -> Batch:
    """Encode and right-pad a list of PromptedExamples."""
    if not examples:
        raise DataError("cannot build an empty batch")
    src_rows = [vocab.encode(ex.input_tokens) for ex in examples]
    out_rows = [vocab.encode(ex.output_tokens) for ex in examples]
    s_max = max(len(r) for r in src_rows)
    t_max = max(len(r) for r in out_rows)
    if s_max > max_positions or t_max > max_positions:
        raise DataError(
            f"sequence length {max(s_max, t_max)} exceeds max_positions {max_positions}"
        )
    n = len(examples)
    src = np.full((n, s_max), PAD_ID, dtype=np.int64)
    src_pad = np.zeros((n, s_max))
    out = np.full((n, t_max), PAD_ID, dtype=np.int64)
    loss_mask = np.zeros((n, t_max))
    for i, (s_row, o_row, ex) in enumerate(zip(src_rows, out_rows, examples)):
        src[i, : len(s_row)] = s_row
        src_pad[i, : len(s_row)] = 1.0
        out[i, : len(o_row)] = o_row
        loss_mask[i, : len(o_row)] = ex.loss_mask
    return Batch(src=src, src_pad=src_pad, out=out, loss_mask=loss_mask)


def sinusoidal_positions(max_positions: int, d_model: int) -> np.ndarray:
    pos = np.arange(max_positions)[:, None]
    dim = np.arange(0, d_model, 2)[None, :]
    angle = pos / np.power(10000.0, dim / d_model)
    pe = np.zeros((max_positions, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def init_params(config: ModelConfig, seed: int = 0) -> dict:
    """Seeded uniform init scaled by fan-in; gains 1, biases 0."""
    rng = np.random.default_rng(seed)

    def uniform(fan_in, shape):
        limit = np.sqrt(3.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape)

    d, f = config.d_model, config.d_ff
    params = {"embed": uniform(d, (config.vocab_size, d))}

    def add_attention(prefix):
        for name in ("wq", "wk", "wv", "wo"):
            params[f"{prefix}.{name}"] = uniform(d, (d, d))
        # no key bias: softmax rows are invariant to it, so it would be a
        # dead parameter with an identically zero gradient
        for name in ("bq", "bv", "bo"):
            params[f"{prefix}.{name}"] = np.zeros(d)

    def add_ff(prefix):
        params[f"{prefix}.w1"] = uniform(d, (d, f))
        params[f"{prefix}.b1"] = np.zeros(f)
        params[f"{prefix}.w2"] = uniform(f, (f, d))
        params[f"{prefix}.b2"] = np.zeros(d)

    def add_ln(prefix):
        params[f"{prefix}.g"] = np.ones(d)
        params[f"{prefix}.b"] = np.zeros(d)

    for i in range(config.n_enc_layers):
        add_attention(f"enc{i}.attn")
        add_ln(f"enc{i}.ln1")
        add_ff(f"enc{i}.ff")
        add_ln(f"enc{i}.ln2")
    for i in range(config.n_dec_layers):
        add_attention(f"dec{i}.self")
        add_ln(f"dec{i}.ln1")
        add_attention(f"dec{i}.cross")
        add_ln(f"dec{i}.ln2")
        add_ff(f"dec{i}.ff")
        add_ln(f"dec{i}.ln3")
    return params


def zeros_like_params(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def average_params(snapshots: list) -> dict:
    """Parameter-wise arithmetic mean of several same-shaped param dicts."""
    if not snapshots:
        raise ValueError("no parameter snapshots to average")
    return {
        k: sum(s[k] for s in snapshots) / len(snapshots) for k in snapshots[0]
    }


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


class _Dropout:
    """Inverted dropout; a None generator disables it entirely."""

    def __init__(self, rate: float, rng):
        self.active = rng is not None and rate > 0.0
        self.rate = rate
        self.rng = rng

    def apply(self, x: np.ndarray):
        if not self.active:
            return x, None
        keep = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * keep, keep

    @staticmethod
    def backward(dy: np.ndarray, keep):
        return dy if keep is None else dy * keep


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, cache, g):
    xhat, inv = cache
    lead = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=lead)
    db = dy.sum(axis=lead)
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _attention(params, prefix, x_q, x_kv, add_mask, n_heads, drop: _Dropout):
    """Multi-head attention block. add_mask broadcasts onto (B,H,Lq,Lk)."""
    p = {n: params[f"{prefix}.{n}"] for n in ("wq", "bq", "wk", "wv", "bv", "wo", "bo")}
    q = _split_heads(x_q @ p["wq"] + p["bq"], n_heads)
    k = _split_heads(x_kv @ p["wk"], n_heads)
    v = _split_heads(x_kv @ p["wv"] + p["bv"], n_heads)
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = q @ k.swapaxes(-1, -2) * scale
    if add_mask is not None:
        scores = scores + add_mask
    attn = softmax(scores)
    attn_d, keep = drop.apply(attn)
    ctx = _merge_heads(attn_d @ v)
    out = ctx @ p["wo"] + p["bo"]
    cache = (x_q, x_kv, q, k, v, attn, attn_d, keep, ctx, scale)
    return out, cache


def _attention_backward(dout, params, prefix, cache, n_heads, grads):
    x_q, x_kv, q, k, v, attn, attn_d, keep, ctx, scale = cache
    p = lambda n: params[f"{prefix}.{n}"]
    g = lambda n: grads[f"{prefix}.{n}"]

    grads[f"{prefix}.wo"] += np.einsum("bld,ble->de", ctx, dout)
    grads[f"{prefix}.bo"] += dout.sum(axis=(0, 1))
    dctx = _split_heads(dout @ p("wo").T, n_heads)

    dattn_d = dctx @ v.swapaxes(-1, -2)
    dv = attn_d.swapaxes(-1, -2) @ dctx
    dattn = _Dropout.backward(dattn_d, keep)
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dq = dscores @ k * scale
    dk = dscores.swapaxes(-1, -2) @ q * scale

    dq2, dk2, dv2 = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
    grads[f"{prefix}.wq"] += np.einsum("bld,ble->de", x_q, dq2)
    grads[f"{prefix}.bq"] += dq2.sum(axis=(0, 1))
    grads[f"{prefix}.wk"] += np.einsum("bld,ble->de", x_kv, dk2)
    grads[f"{prefix}.wv"] += np.einsum("bld,ble->de", x_kv, dv2)
    grads[f"{prefix}.bv"] += dv2.sum(axis=(0, 1))
    dx_q = dq2 @ p("wq").T
    dx_kv = dk2 @ p("wk").T + dv2 @ p("wv").T
    return dx_q, dx_kv


def _feed_forward(params, prefix, x, drop: _Dropout):
    w1, b1 = params[f"{prefix}.w1"], params[f"{prefix}.b1"]
    w2, b2 = params[f"{prefix}.w2"], params[f"{prefix}.b2"]
    h = x @ w1 + b1
    r = np.maximum(h, 0.0)
    out = r @ w2 + b2
    return out, (x, h, r)


def _feed_forward_backward(dout, params, prefix, cache, grads):
    x, h, r = cache
    w1, w2 = params[f"{prefix}.w1"], params[f"{prefix}.w2"]
    grads[f"{prefix}.w2"] += np.einsum("blf,bld->fd", r, dout)
    grads[f"{prefix}.b2"] += dout.sum(axis=(0, 1))
    dr = dout @ w2.T
    dh = dr * (h > 0.0)
    grads[f"{prefix}.w1"] += np.einsum("bld,blf->df", x, dh)
    grads[f"{prefix}.b1"] += dh.sum(axis=(0, 1))
    return dh @ w1.T


def _sublayer(params, ln_prefix, x, sub_out, drop: _Dropout):
    """Post-norm residual: LN(x + dropout(sub_out))."""
    dropped, keep = drop.apply(sub_out)
    y, ln_cache = _layer_norm(x + dropped, params[f"{ln_prefix}.g"], params[f"{ln_prefix}.b"])
    return y, (ln_cache, keep)


def _sublayer_backward(dy, params, ln_prefix, cache, grads):
    ln_cache, keep = cache
    dsum, dg, db = _layer_norm_backward(dy, ln_cache, params[f"{ln_prefix}.g"])
    grads[f"{ln_prefix}.g"] += dg
    grads[f"{ln_prefix}.b"] += db
    dsub = _Dropout.backward(dsum, keep)
    return dsum, dsub  # gradient w.r.t. x, gradient into the sublayer


def _embed(params, config, ids, drop: _Dropout):
    scale = np.sqrt(config.d_model)
    emb = params["embed"][ids] * scale
    pe = sinusoidal_positions(config.max_positions, config.d_model)[: ids.shape[1]]
    x, keep = drop.apply(emb + pe)
    return x, keep


def _embed_backward(dx, ids, keep, scale, grads):
    demb = _Dropout.backward(dx, keep) * scale
    d = demb.shape[-1]
    np.add.at(grads["embed"], ids.reshape(-1), demb.reshape(-1, d))


def _causal_mask(t: int) -> np.ndarray:
    mask = np.triu(np.full((t, t), NEG_INF), k=1)
    return mask[None, None, :, :]


def _key_pad_mask(pad: np.ndarray) -> np.ndarray:
    return ((1.0 - pad) * NEG_INF)[:, None, None, :]


def forward(params: dict, config: ModelConfig, batch: Batch, dropout_rng=None):
    """Logits (B, T, vocab) for every output position, plus backward cache.

    Position j is predicted from <bos> and output tokens < j; the shift
    happens here, so batches carry the unshifted output ids.
    """
    b, t = batch.out.shape
    if t > config.max_positions or batch.src.shape[1] > config.max_positions:
        raise DataError(
            f"batch length exceeds max_positions {config.max_positions}"
        )
    drop = _Dropout(config.dropout, dropout_rng)
    src_mask = _key_pad_mask(batch.src_pad)

    x, enc_emb_keep = _embed(params, config, batch.src, drop)
    enc_caches = []
    for i in range(config.n_enc_layers):
        attn_out, attn_cache = _attention(
            params, f"enc{i}.attn", x, x, src_mask, config.n_heads, drop
        )
        x1, sub1 = _sublayer(params, f"enc{i}.ln1", x, attn_out, drop)
        ff_out, ff_cache = _feed_forward(params, f"enc{i}.ff", x1, drop)
        x2, sub2 = _sublayer(params, f"enc{i}.ln2", x1, ff_out, drop)
        enc_caches.append((attn_cache, sub1, ff_cache, sub2))
        x = x2
    enc_out = x

    dec_in = np.concatenate(
        [np.full((b, 1), BOS_ID, dtype=np.int64), batch.out[:, :-1]], axis=1
    )
    y, dec_emb_keep = _embed(params, config, dec_in, drop)
    causal = _causal_mask(t)
    dec_caches = []
    for i in range(config.n_dec_layers):
        self_out, self_cache = _attention(
            params, f"dec{i}.self", y, y, causal, config.n_heads, drop
        )
        y1, sub1 = _sublayer(params, f"dec{i}.ln1", y, self_out, drop)
        cross_out, cross_cache = _attention(
            params, f"dec{i}.cross", y1, enc_out, src_mask, config.n_heads, drop
        )
        y2, sub2 = _sublayer(params, f"dec{i}.ln2", y1, cross_out, drop)
        ff_out, ff_cache = _feed_forward(params, f"dec{i}.ff", y2, drop)
        y3, sub3 = _sublayer(params, f"dec{i}.ln3", y2, ff_out, drop)
        dec_caches.append((self_cache, sub1, cross_cache, sub2, ff_cache, sub3))
        y = y3

    logits = y @ params["embed"].T
    cache = {
        "enc_emb_keep": enc_emb_keep,
        "dec_emb_keep": dec_emb_keep,
        "enc_caches": enc_caches,
        "dec_caches": dec_caches,
        "enc_out": enc_out,
        "dec_in": dec_in,
        "dec_out": y,
    }
    return logits, cache


def loss(logits: np.ndarray, batch: Batch) -> float:
    """Mean over examples of summed NLL at masked positions."""
    per_example = batch.loss_mask.sum(axis=1)
    if np.any(per_example == 0):
        bad = int(np.flatnonzero(per_example == 0)[0])
        raise DataError(f"example {bad} in batch has an all-zero loss mask")
    logp = log_softmax(logits)
    b, t = batch.out.shape
    nll = -logp[np.arange(b)[:, None], np.arange(t)[None, :], batch.out]
    return float((nll * batch.loss_mask).sum() / b)


def _loss_backward(logits: np.ndarray, batch: Batch) -> np.ndarray:
    b, t = batch.out.shape
    probs = softmax(logits)
    onehot_grad = probs
    onehot_grad[np.arange(b)[:, None], np.arange(t)[None, :], batch.out] -= 1.0
    return onehot_grad * batch.loss_mask[:, :, None] / b


def loss_and_gradients(params, config, batch, dropout_rng=None):
    """Loss plus its analytic gradient for every parameter tensor."""
    logits, cache = forward(params, config, batch, dropout_rng)
    value = loss(logits, batch)
    grads = zeros_like_params(params)
    dlogits = _loss_backward(logits, batch)

    # output projection is the tied embedding
    grads["embed"] += np.einsum("btv,btd->vd", dlogits, cache["dec_out"])
    dy = dlogits @ params["embed"]

    denc_out = np.zeros_like(cache["enc_out"])
    for i in reversed(range(config.n_dec_layers)):
        self_cache, sub1, cross_cache, sub2, ff_cache, sub3 = cache["dec_caches"][i]
        dy2, dff = _sublayer_backward(dy, params, f"dec{i}.ln3", sub3, grads)
        dy2 += _feed_forward_backward(dff, params, f"dec{i}.ff", ff_cache, grads)
        dy1, dcross = _sublayer_backward(dy2, params, f"dec{i}.ln2", sub2, grads)
        dq, dkv = _attention_backward(
            dcross, params, f"dec{i}.cross", cross_cache, config.n_heads, grads
        )
        dy1 += dq
        denc_out += dkv
        dy0, dself = _sublayer_backward(dy1, params, f"dec{i}.ln1", sub1, grads)
        dq, dkv = _attention_backward(
            dself, params, f"dec{i}.self", self_cache, config.n_heads, grads
        )
        dy = dy0 + dq + dkv
    _embed_backward(dy, cache["dec_in"], cache["dec_emb_keep"], np.sqrt(config.d_model), grads)

    dx = denc_out
    for i in reversed(range(config.n_enc_layers)):
        attn_cache, sub1, ff_cache, sub2 = cache["enc_caches"][i]
        dx1, dff = _sublayer_backward(dx, params, f"enc{i}.ln2", sub2, grads)
        dx1 += _feed_forward_backward(dff, params, f"enc{i}.ff", ff_cache, grads)
        dx0, dattn = _sublayer_backward(dx1, params, f"enc{i}.ln1", sub1, grads)
        dq, dkv = _attention_backward(
            dattn, params, f"enc{i}.attn", attn_cache, config.n_heads, grads
        )
        dx = dx0 + dq + dkv
    _embed_backward(dx, batch.src, cache["enc_emb_keep"], np.sqrt(config.d_model), grads)
    return value, grads


def encode_source(params, config, src: np.ndarray, src_pad: np.ndarray):
    """Encoder output for decoding; no dropout, no cache retention."""
    drop = _Dropout(0.0, None)
    src_mask = _key_pad_mask(src_pad)
    x, _ = _embed(params, config, src, drop)
    for i in range(config.n_enc_layers):
        attn_out, _ = _attention(params, f"enc{i}.attn", x, x, src_mask, config.n_heads, drop)
        x, _ = _sublayer(params, f"enc{i}.ln1", x, attn_out, drop)
        ff_out, _ = _feed_forward(params, f"enc{i}.ff", x, drop)
        x, _ = _sublayer(params, f"enc{i}.ln2", x, ff_out, drop)
    return x


def decoder_logits(params, config, enc_out, src_pad, dec_in: np.ndarray):
    """Logits (B, T, vocab) for explicit decoder input ids (starting <bos>)."""
    if dec_in.shape[1] > config.max_positions:
        raise DataError(
            f"decoder length {dec_in.shape[1]} exceeds max_positions {config.max_positions}"
        )
    drop = _Dropout(0.0, None)
    src_mask = _key_pad_mask(src_pad)
    causal = _causal_mask(dec_in.shape[1])
    y, _ = _embed(params, config, dec_in, drop)
    for i in range(config.n_dec_layers):
        self_out, _ = _attention(params, f"dec{i}.self", y, y, causal, config.n_heads, drop)
        y, _ = _sublayer(params, f"dec{i}.ln1", y, self_out, drop)
        cross_out, _ = _attention(params, f"dec{i}.cross", y, enc_out, src_mask, config.n_heads, drop)
        y, _ = _sublayer(params, f"dec{i}.ln2", y, cross_out, drop)
        ff_out, _ = _feed_forward(params, f"dec{i}.ff", y, drop)
        y, _ = _sublayer(params, f"dec{i}.ln3", y, ff_out, drop)
    return y @ params["embed"].T


@dataclass
class TrainConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 30
    seed: int = 0
    average_last: int = 0  # 0 disables checkpoint averaging
    warmup_steps: int = 0
    schedule: str = "constant"  # or "linear": decay to zero over all steps

    def lr_at(self, step: int, total_steps: int) -> float:
        """Step starts at 1. Warmup ramps to the peak; "linear" then decays
        toward zero at total_steps."""
        if self.schedule not in ("constant", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.warmup_steps > 0 and step <= self.warmup_steps:
            return self.lr * (step / self.warmup_steps)
        if self.schedule == "linear":
            return self.lr * max(0.0, 1.0 - step / max(total_steps, 1))
        return self.lr


@dataclass
class TrainResult:
    params: dict
    train_losses: list
    val_losses: list
    best_epoch: int


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float | None = None) -> None:
        self.t += 1
        c = self.cfg
        if lr is None:
            lr = c.lr
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for k, g in grads.items():
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            params[k] -= lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.adam_eps)


def _dataset_loss(params, config, examples, vocab, batch_size) -> float:
    total = 0.0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        batch = make_batch(chunk, vocab, config.max_positions)
        logits, _ = forward(params, config, batch)
        total += loss(logits, batch) * len(chunk)
    return total / len(examples)


def train(
    params: dict,
    config: ModelConfig,
    train_set: list,
    val_set: list | None,
    train_config: TrainConfig,
    vocab: Vocab,
    log=None,
) -> TrainResult:
    """Adam training loop with early stopping on validation loss.

    Deterministic for a fixed seed: shuffling, dropout, and batch order all
    derive from one generator. Returns the best-validation parameters, or
    the mean of the last average_last epoch snapshots when that is set.
    """
    if not train_set:
        raise DataError("training set is empty")
    params = {k: v.copy() for k, v in params.items()}
    rng = np.random.default_rng(train_config.seed)
    optimizer = Adam(params, train_config)
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_epoch = -1
    best_params = {k: v.copy() for k, v in params.items()}
    snapshots: list[dict] = []
    steps_per_epoch = -(-len(train_set) // train_config.batch_size)
    total_steps = steps_per_epoch * train_config.max_epochs
    step = 0

    for epoch in range(train_config.max_epochs):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), train_config.batch_size):
            chunk = [train_set[i] for i in order[start : start + train_config.batch_size]]
            batch = make_batch(chunk, vocab, config.max_positions)
            value, grads = loss_and_gradients(params, config, batch, dropout_rng=rng)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"training diverged: loss {value} at epoch {epoch}, "
                    f"batch starting at {start}"
                )
            step += 1
            optimizer.step(params, grads, train_config.lr_at(step, total_steps))
            epoch_loss += value * len(chunk)
        train_losses.append(epoch_loss / len(train_set))

        if val_set:
            val = _dataset_loss(params, config, val_set, vocab, train_config.batch_size)
            val_losses.append(val)
            if val < best_val:
                best_val = val
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in params.items()}
        else:
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}

        if train_config.average_last > 0:
            snapshots.append({k: v.copy() for k, v in params.items()})
            snapshots = snapshots[-train_config.average_last :]

        if log is not None:
            msg = f"epoch {epoch}: train {train_losses[-1]:.4f}"
            if val_set:
                msg += f" val {val_losses[-1]:.4f}"
            log(msg)
        if val_set and epoch - best_epoch >= train_config.patience:
            break

    final = average_params(snapshots) if snapshots else best_params
    return TrainResult(
        params=final,
        train_losses=train_losses,
        val_losses=val_losses,
        best_epoch=best_epoch,
    )


CHECKPOINT_MAGIC = b"PMTCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, params: dict, config: ModelConfig, vocab: Vocab) -> None:
    """Binary tensor file plus a <path>.json sidecar with config and vocab hash.

    Layout, all little-endian: magic, u16 version, u32 tensor count, then per
    tensor u16 name length, utf-8 name, u8 ndim, u32 per dimension, float64
    row-major payload.
    """
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(params)))
        for name in sorted(params):
            tensor = np.ascontiguousarray(params[name], dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(tensor.astype("<f8").tobytes())
    sidecar = {
        "format_version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "vocab_sha256": vocab.sha256(),
    }
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )


def load_checkpoint(path: str | Path):
    """Returns (params, ModelConfig, sidecar dict)."""
    path = Path(path)
    data = path.read_bytes()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    version, count = struct.unpack_from("<HI", data, off)
    off += struct.calcsize("<HI")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        n_items = int(np.prod(shape)) if ndim else 1
        tensor = np.frombuffer(data, dtype="<f8", count=n_items, offset=off)
        off += 8 * n_items
        params[name] = tensor.reshape(shape).copy()
    if off != len(data):
        raise DataError(f"{path}: {len(data) - off} trailing bytes")
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise DataError(f"{sidecar_path}: checkpoint sidecar missing")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    config = ModelConfig.from_dict(sidecar["config"])
    return params, config, sidecar
