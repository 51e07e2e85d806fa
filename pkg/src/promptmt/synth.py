"""Deterministic synthetic bilingual task with controlled ambiguity.

The language is a token map with two kinds of controlled variation.
Regular concept i has two interchangeable source spellings s{i}a and
s{i}b, both translating to the single target token t{i}. Each sentence
additionally carries one ambiguous term: source term{i} has several
valid renderings gloss{i}a, gloss{i}b, ... and the rendering used by
the reference is drawn independently of the rest of the sentence. From
the source alone the rendering is undecidable, so a knowledge-free
model's expected exact-match ceiling is 1/k for k renderings; the
dictionary entry or a retrieved similar pair carries exactly the
missing bit.

Near-duplicates are made by respelling one regular slot: the source
moves by one token while the target stays identical, the way a
translation memory hit with a trivially different source reuses its
stored translation verbatim. Training sentences come in such pairs so
that fuzzy retrieval over the training set itself finds a demonstrating
neighbour, and the translation memory holds a near-duplicate of every
test source plus random distractors.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .corpus import SentencePair
from .terminology import TermDictionary, TermEntry


@dataclass(frozen=True)
class SynthConfig:
    """term_position "random" scatters the ambiguous term anywhere in the
    sentence; "final" pins it to the last slot, which makes the rendering
    easier to read off a retrieved neighbour."""

    n_regular: int = 20
    n_ambiguous_terms: int = 4
    renderings_per_term: int = 2
    len_min: int = 3
    len_max: int = 8
    n_train: int = 600
    n_test: int = 48
    term_position: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.n_regular < 2:
            raise ValueError("n_regular must be >= 2")
        if self.n_ambiguous_terms < 0:
            raise ValueError("n_ambiguous_terms must be >= 0")
        if self.renderings_per_term < 2:
            raise ValueError("renderings_per_term must be >= 2")
        if not 2 <= self.len_min <= self.len_max:
            raise ValueError("need 2 <= len_min <= len_max")
        if self.n_train < 2 or self.n_test < 1:
            raise ValueError("need n_train >= 2 and n_test >= 1")
        if self.renderings_per_term > len(string.ascii_lowercase):
            raise ValueError("too many renderings per term")
        if self.term_position not in ("random", "final"):
            raise ValueError(f"unknown term_position {self.term_position!r}")


def _rendering(term: int, which: int) -> str:
    return f"gloss{term}{string.ascii_lowercase[which]}"


def build_dictionary(cfg: SynthConfig) -> TermDictionary:
    """Every (term, rendering) combination as one entry, in id order."""
    entries = []
    for term in range(cfg.n_ambiguous_terms):
        for which in range(cfg.renderings_per_term):
            entries.append(
                TermEntry(
                    source=(f"term{term}",),
                    target=(_rendering(term, which),),
                    id=term * cfg.renderings_per_term + which,
                )
            )
    return TermDictionary(entries)


def _base_sentence(cfg: SynthConfig, rng, term: int | None, which: int):
    """One aligned pair; term placement follows cfg.term_position."""
    length = int(rng.integers(cfg.len_min, cfg.len_max + 1))
    slots = rng.integers(0, cfg.n_regular, size=length)
    spellings = rng.integers(0, 2, size=length)
    src = [f"s{i}{'ab'[sp]}" for i, sp in zip(slots, spellings)]
    tgt = [f"t{i}" for i in slots]
    if term is not None:
        if cfg.term_position == "final":
            pos = length
        else:
            pos = int(rng.integers(0, length + 1))
        src.insert(pos, f"term{term}")
        tgt.insert(pos, _rendering(term, which))
    return src, tgt


def _respelled(rng, src: list, tgt: list):
    """Copy with one regular slot respelled; the target does not move."""
    regular = [i for i, tok in enumerate(src) if tok.startswith("s")]
    pos = regular[int(rng.integers(0, len(regular)))]
    flipped = "b" if src[pos].endswith("a") else "a"
    out_src = list(src)
    out_src[pos] = src[pos][:-1] + flipped
    return out_src, list(tgt)


def generate(cfg: SynthConfig):
    """Build (train pairs, test pairs, dictionary, TM entries), all seeded.

    Train renderings are uniform; test renderings cycle so each one is
    used equally often. The TM holds one near-duplicate of every test
    source (respelled source, target reused verbatim) followed by
    unrelated distractor pairs; TM entry ids are their own namespace.
    """
    rng = np.random.default_rng(cfg.seed)
    dictionary = build_dictionary(cfg)

    def pick_term(index: int | None):
        if cfg.n_ambiguous_terms == 0:
            return None, 0
        if index is None:
            term = int(rng.integers(0, cfg.n_ambiguous_terms))
            which = int(rng.integers(0, cfg.renderings_per_term))
        else:
            term = index % cfg.n_ambiguous_terms
            which = (index // cfg.n_ambiguous_terms) % cfg.renderings_per_term
        return term, which

    train = []
    while len(train) < cfg.n_train:
        term, which = pick_term(None)
        src, tgt = _base_sentence(cfg, rng, term, which)
        train.append(SentencePair(tuple(src), tuple(tgt), id=len(train)))
        if len(train) < cfg.n_train:
            var_src, var_tgt = _respelled(rng, src, tgt)
            train.append(SentencePair(tuple(var_src), tuple(var_tgt), id=len(train)))

    test = []
    for j in range(cfg.n_test):
        term, which = pick_term(j)
        src, tgt = _base_sentence(cfg, rng, term, which)
        test.append(SentencePair(tuple(src), tuple(tgt), id=j))

    tm = []
    for pair in test:
        near_src, near_tgt = _respelled(rng, list(pair.source), list(pair.target))
        tm.append((len(tm), tuple(near_src), tuple(near_tgt)))
    for _ in range(cfg.n_test):
        term, which = pick_term(None)
        src, tgt = _base_sentence(cfg, rng, term, which)
        tm.append((len(tm), tuple(src), tuple(tgt)))

    return train, test, dictionary, tm
