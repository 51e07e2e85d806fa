"""Beam search with a forced knowledge prefix on the decoder.

The decoder is first driven through the given target prefix (ending in
[Output]) with its probabilities ignored, then ordinary beam search
continues until <eos>. Only the tokens generated after [Output] are
returned, subword-decoded back into whole tokens.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    BOS_ID,
    EOS,
    EOS_ID,
    OUTPUT,
    Vocab,
    bpe_decode_sequence,
)
from .errors import DataError
from .model import ModelConfig, decoder_logits, encode_source, log_softmax, make_batch
from .prompt import PromptedExample, split_output


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 4
    max_new_tokens: int = 64
    length_penalty: float = 1.0

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if self.length_penalty < 0:
            raise ValueError(f"length_penalty must be >= 0, got {self.length_penalty}")


@dataclass(frozen=True)
class DecodeStats:
    """Per-record accounting: tokens_forced counts the prefix plus [Output]."""

    tokens_forced: int
    tokens_generated: int
    wall_time: float


def _score(logprob: float, n_generated: int, penalty: float) -> float:
    return logprob / max(n_generated, 1) ** penalty


def beam_search(
    params: dict,
    config: ModelConfig,
    src_ids: np.ndarray,
    src_pad: np.ndarray,
    prefix_ids: list,
    cfg: BeamConfig,
):
    """Full decoder id sequence (prefix included) for the best hypothesis.

    The sequence starts with exactly prefix_ids; scoring covers only the
    generated part, logprob / n_generated^length_penalty. Ties prefer the
    lower token id. A finished hypothesis ends with <eos>; search stops
    when no unfinished hypothesis can still beat the worst kept finished
    one even with its best possible remaining score. Hypotheses still
    open at the token limit compete with their scores as they stand.
    """
    if len(prefix_ids) + cfg.max_new_tokens + 1 > config.max_positions:
        raise DataError(
            f"prefix {len(prefix_ids)} + max_new_tokens {cfg.max_new_tokens} "
            f"exceeds max_positions {config.max_positions}"
        )
    enc_out = encode_source(params, config, src_ids, src_pad)

    # (ids, logprob); all start as the forced prefix with probability mass 1
    beams = [(list(prefix_ids), 0.0)]
    finished: list[tuple[list, float]] = []

    def by_rank(candidate):
        # higher score first, lower token ids on ties
        return (-_gen_score(candidate, prefix_ids, cfg), candidate[0])

    for _ in range(cfg.max_new_tokens):
        dec_in = np.array(
            [[BOS_ID] + ids for ids, _ in beams], dtype=np.int64
        )
        n = len(beams)
        logits = decoder_logits(
            params,
            config,
            np.repeat(enc_out, n, axis=0),
            np.repeat(src_pad, n, axis=0),
            dec_in,
        )
        logp = log_softmax(logits[:, -1, :])

        candidates = []
        for b, (ids, total) in enumerate(beams):
            # stable sort on -logp keeps lower token ids first among ties
            for tok in np.argsort(-logp[b], kind="stable")[: cfg.beam_size]:
                candidates.append((ids + [int(tok)], total + float(logp[b, tok])))
        candidates.sort(key=by_rank)
        candidates = candidates[: cfg.beam_size]

        beams = []
        for ids, total in candidates:
            if ids[-1] == EOS_ID:
                finished.append((ids, total))
            else:
                beams.append((ids, total))
        finished.sort(key=by_rank)
        finished = finished[: cfg.beam_size]
        if not beams:
            break
        if len(finished) >= cfg.beam_size:
            # a live logprob (<= 0) can only shrink, so its best final score
            # is at the maximum generated length
            best_possible = max(
                _score(total, cfg.max_new_tokens, cfg.length_penalty)
                for _, total in beams
            )
            worst_kept = _gen_score(finished[-1], prefix_ids, cfg)
            if best_possible < worst_kept:
                break

    # hypotheses still open at the token limit compete as they stand; a
    # poor early finish must not outrank a stronger truncated one
    finished.extend(beams)
    finished.sort(key=by_rank)
    return finished[0][0]


def _gen_score(candidate, prefix_ids, cfg: BeamConfig) -> float:
    ids, total = candidate
    return _score(total, len(ids) - len(prefix_ids), cfg.length_penalty)


def greedy_decode(params, config, src_ids, src_pad, prefix_ids, max_new_tokens):
    """Plain argmax decoding, the reference for beam_size=1."""
    enc_out = encode_source(params, config, src_ids, src_pad)
    ids = list(prefix_ids)
    for _ in range(max_new_tokens):
        dec_in = np.array([[BOS_ID] + ids], dtype=np.int64)
        logits = decoder_logits(params, config, enc_out, src_pad, dec_in)
        ids.append(int(np.argmax(logits[0, -1])))
        if ids[-1] == EOS_ID:
            break
    return ids


def translate(
    params: dict,
    config: ModelConfig,
    vocab: Vocab,
    example: PromptedExample,
    cfg: BeamConfig = BeamConfig(),
    bpe=None,
):
    """Translate one prompted example; returns (tokens, DecodeStats).

    The example's output side is the decoder prefix; [Output] is appended
    when missing. Returned tokens exclude the prefix, [Output], and <eos>,
    and are whole tokens again when a BPE model is given.
    """
    start = time.perf_counter()
    prefix = list(example.output_tokens)
    if OUTPUT not in prefix:
        prefix.append(OUTPUT)
    else:
        prefix = prefix[: prefix.index(OUTPUT) + 1]
    src_ids = np.array([vocab.encode(example.input_tokens)], dtype=np.int64)
    src_pad = np.ones_like(src_ids, dtype=np.float64)
    prefix_ids = vocab.encode(prefix)

    full = beam_search(params, config, src_ids, src_pad, prefix_ids, cfg)
    generated = full[len(prefix_ids) :]
    units = [vocab.token_of(i) for i in generated]
    if units and units[-1] == EOS:
        units = units[:-1]
    tokens = bpe_decode_sequence(bpe, units) if bpe is not None else units
    stats = DecodeStats(
        tokens_forced=len(prefix_ids),
        tokens_generated=len(generated),
        wall_time=time.perf_counter() - start,
    )
    return tokens, stats


def batch_translate(
    params: dict,
    config: ModelConfig,
    vocab: Vocab,
    examples: list,
    cfg: BeamConfig = BeamConfig(),
    bpe=None,
):
    """Translate a dataset in order; returns (list of token lists, stats dict).

    The stats dict is the JSON summary: mean_forced, mean_generated, and
    sentences_per_second.
    """
    start = time.perf_counter()
    outputs = []
    forced = []
    generated = []
    for ex in examples:
        tokens, stats = translate(params, config, vocab, ex, cfg, bpe)
        outputs.append(tokens)
        forced.append(stats.tokens_forced)
        generated.append(stats.tokens_generated)
    elapsed = time.perf_counter() - start
    summary = {
        "mean_forced": float(np.mean(forced)) if forced else 0.0,
        "mean_generated": float(np.mean(generated)) if generated else 0.0,
        "sentences_per_second": len(examples) / elapsed if elapsed > 0 else 0.0,
    }
    return outputs, summary


def write_translations(translations, path: str | Path) -> None:
    Path(path).write_text(
        "".join(" ".join(tokens) + "\n" for tokens in translations),
        encoding="utf-8",
    )


def write_stats(stats: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
