"""End-to-end experiment on the synthetic task.

Runs the whole chain in one process: generate the task, learn a joint
BPE and vocabulary, pretrain on plain parallel data, continue training
on knowledge-prompted data, then decode the held-out test set twice,
once with prompts and once with the knowledge stripped, and score both.
The prompted/unprompted contrast on the same checkpoint is the point:
ambiguous terms are undecidable from the source alone, so the gap is
attributable to the prompts.

Every stage is seeded from one RunConfig seed; two runs with the same
configuration produce identical reports.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import Vocab, bpe_encode_sequence, train_bpe, write_parallel
from .errors import DataError
from .metrics import EvalReport, evaluate, save_report
from .model import (
    ModelConfig,
    TrainConfig,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .decode import BeamConfig, batch_translate, write_stats, write_translations
from .prompt import EMPTY_BUNDLE, KnowledgeBundle, build_dataset, save_dataset
from .retrieval import TmIndex, save_tm
from .synth import SynthConfig, generate
from .terminology import TermDictionary, save_dictionary

KNOWLEDGE_KINDS = ("term", "sent")


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline run depends on.

    knowledge picks which prompt blocks are built ("term", "sent", or
    both); templates stay out of the synthetic task, whose sentences are
    deliberately flat. min_term_count filters dictionary entries by
    source-term frequency in the training corpus; the synthetic
    dictionary is exhaustive, so the default 0 keeps every entry.
    """

    synth: SynthConfig = field(default_factory=SynthConfig)
    knowledge: tuple = KNOWLEDGE_KINDS
    threshold: float = 0.4
    template_depth: int = 4
    min_term_count: int = 0
    bpe_merges: int = 300
    max_input_len: int = 512

    d_model: int = 48
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 192
    dropout: float = 0.1
    max_positions: int = 96

    lr: float = 1e-3
    batch_size: int = 32
    stage1_epochs: int = 15
    stage2_epochs: int = 40
    patience: int = 30
    warmup_steps: int = 0
    schedule: str = "constant"
    val_fraction: float = 0.1
    # stage 2 continues on prompted data alone; mixing the plain stage-1
    # data back in preserves more unprompted quality at the cost of a
    # much weaker incentive to read the prompts
    mix_plain: bool = False

    beam_size: int = 4
    max_new_tokens: int = 24
    length_penalty: float = 1.0
    seed: int = 0

    def __post_init__(self):
        bad = [k for k in self.knowledge if k not in KNOWLEDGE_KINDS]
        if bad:
            raise ValueError(f"unknown knowledge kinds {bad}, pick from {KNOWLEDGE_KINDS}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_enc_layers=self.n_enc_layers,
            n_dec_layers=self.n_dec_layers,
            d_ff=self.d_ff,
            max_positions=self.max_positions,
            dropout=self.dropout,
        )

    def train_config(self, epochs: int, seed: int) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            max_epochs=epochs,
            patience=self.patience,
            seed=seed,
            warmup_steps=self.warmup_steps,
            schedule=self.schedule,
        )

    def beam_config(self) -> BeamConfig:
        return BeamConfig(
            beam_size=self.beam_size,
            max_new_tokens=self.max_new_tokens,
            length_penalty=self.length_penalty,
        )


def prune_dictionary(dictionary: TermDictionary, pairs, min_count: int) -> TermDictionary:
    """Drop entries whose source term is rare in the given corpus."""
    if min_count <= 0:
        return dictionary
    counts = Counter()
    for pair in pairs:
        for entry in dictionary.match_source_only(pair.source):
            counts[entry.id] += 1
    kept = [e for e in dictionary.entries if counts[e.id] >= min_count]
    return TermDictionary(kept)


def build_bundles(pairs, dictionary, tm, cfg: RunConfig) -> list:
    """One KnowledgeBundle per pair from the enabled knowledge kinds.

    Term entries come from matching both sides, so the bundle carries the
    rendering the reference actually uses; the similar sentence is the
    best fuzzy TM hit above the threshold, if any.
    """
    bundles = []
    for pair in pairs:
        terms = ()
        similar = None
        if "term" in cfg.knowledge and dictionary is not None:
            terms = tuple(
                (e.source, e.target) for e in dictionary.match(pair.source, pair.target)
            )
        if "sent" in cfg.knowledge and tm is not None:
            hit = tm.retrieve_best(pair.source, cfg.threshold)
            if hit is not None:
                similar = (hit.src, hit.tgt)
        bundles.append(KnowledgeBundle(similar=similar, terms=terms))
    return bundles


def _split_train_val(pairs, fraction: float):
    n_val = max(1, int(len(pairs) * fraction))
    return pairs[:-n_val], pairs[-n_val:]


def run_pipeline(cfg: RunConfig, work_dir, log=None) -> dict:
    """Execute the experiment; returns {"prompted", "unprompted", "stats"}.

    Intermediate artifacts (corpora, BPE merges, vocabulary, datasets,
    checkpoint, hypotheses, reports) are written under work_dir.
    """
    say = log if log is not None else lambda msg: None
    work = Path(work_dir)
    work.mkdir(parents=True, exist_ok=True)

    synth_cfg = replace(cfg.synth, seed=cfg.seed)
    all_train, test, dictionary, tm_entries = generate(synth_cfg)
    dictionary = prune_dictionary(dictionary, all_train, cfg.min_term_count)
    train_pairs, val_pairs = _split_train_val(all_train, cfg.val_fraction)
    say(f"task: {len(train_pairs)} train / {len(val_pairs)} val / {len(test)} test, "
        f"{len(dictionary)} dictionary entries, {len(tm_entries)} TM entries")

    write_parallel(train_pairs, work / "train.src", work / "train.tgt")
    write_parallel(val_pairs, work / "val.src", work / "val.tgt")
    write_parallel(test, work / "test.src", work / "test.tgt")
    save_dictionary(dictionary, work / "dict.jsonl")
    save_tm(tm_entries, work / "tm.jsonl")

    lines = [list(p.source) for p in all_train] + [list(p.target) for p in all_train]
    bpe = train_bpe(lines, num_merges=cfg.bpe_merges)
    bpe.save(work / "bpe.txt")

    def units(tokens):
        return bpe_encode_sequence(bpe, tokens)

    seen = []
    for pair in all_train:
        seen += units(pair.source) + units(pair.target)
    for entry in dictionary.entries:
        seen += units(entry.source) + units(entry.target)
    for _, src, tgt in tm_entries:
        seen += units(src) + units(tgt)
    vocab = Vocab.build(seen)
    vocab.save(work / "vocab.txt")
    say(f"bpe: {len(bpe.merges)} merges, vocabulary {len(vocab)}")

    model_cfg = cfg.model_config(len(vocab))
    params = init_params(model_cfg, seed=cfg.seed + 1)

    plain_train = build_dataset(
        train_pairs, [EMPTY_BUNDLE] * len(train_pairs), bpe=bpe, max_input_len=cfg.max_input_len
    )
    plain_val = build_dataset(
        val_pairs, [EMPTY_BUNDLE] * len(val_pairs), bpe=bpe, max_input_len=cfg.max_input_len
    )
    say(f"stage 1: plain parallel data, {cfg.stage1_epochs} epochs")
    result = train(
        params,
        model_cfg,
        plain_train,
        plain_val,
        cfg.train_config(cfg.stage1_epochs, cfg.seed + 2),
        vocab,
        log=log,
    )

    # retrieval pool for training-time prompts is the whole parallel
    # corpus; a pair's own perfect match is ignored by the index
    train_tm = TmIndex.from_pairs(all_train)
    bundles = build_bundles(train_pairs, dictionary, train_tm, cfg)
    val_bundles = build_bundles(val_pairs, dictionary, train_tm, cfg)
    n_hits = sum(1 for b in bundles + val_bundles if b.similar is not None)
    say(f"knowledge: {n_hits}/{len(bundles) + len(val_bundles)} pairs "
        f"with a fuzzy match above {cfg.threshold}")
    prompted_train = build_dataset(
        train_pairs, bundles, bpe=bpe, max_input_len=cfg.max_input_len
    )
    prompted_val = build_dataset(
        val_pairs, val_bundles, bpe=bpe, max_input_len=cfg.max_input_len
    )
    save_dataset(prompted_train, work / "train.prompted.jsonl")
    stage2_train = prompted_train + plain_train if cfg.mix_plain else prompted_train
    stage2_val = prompted_val + plain_val if cfg.mix_plain else prompted_val
    say(f"stage 2: {len(stage2_train)} prompted examples, {cfg.stage2_epochs} epochs")
    result = train(
        result.params,
        model_cfg,
        stage2_train,
        stage2_val,
        cfg.train_config(cfg.stage2_epochs, cfg.seed + 3),
        vocab,
        log=log,
    )

    save_checkpoint(work / "model.ckpt", result.params, model_cfg, vocab)
    params, model_cfg, _ = load_checkpoint(work / "model.ckpt")

    test_tm = TmIndex(tm_entries)
    test_bundles = build_bundles(test, dictionary, test_tm, cfg)
    prompted_test = build_dataset(
        test, test_bundles, include_target=False, bpe=bpe, max_input_len=cfg.max_input_len
    )
    plain_test = build_dataset(
        test, [EMPTY_BUNDLE] * len(test), include_target=False, bpe=bpe,
        max_input_len=cfg.max_input_len,
    )
    save_dataset(prompted_test, work / "test.prompted.jsonl")
    save_dataset(plain_test, work / "test.plain.jsonl")

    beam = cfg.beam_config()
    say(f"decoding {len(test)} sentences, beam {beam.beam_size}")
    prompted_hyp, stats = batch_translate(params, model_cfg, vocab, prompted_test, beam, bpe=bpe)
    plain_hyp, plain_stats = batch_translate(params, model_cfg, vocab, plain_test, beam, bpe=bpe)
    write_translations(prompted_hyp, work / "hyp.prompted.txt")
    write_translations(plain_hyp, work / "hyp.plain.txt")
    write_stats(stats, work / "stats.prompted.json")
    write_stats(plain_stats, work / "stats.plain.json")

    refs = [list(p.target) for p in test]
    term_sets = [
        [list(e.target) for e in dictionary.match(p.source, p.target)] for p in test
    ]
    prompted_report = evaluate(prompted_hyp, refs, term_sets)
    plain_report = evaluate(plain_hyp, refs, term_sets)
    save_report(prompted_report, work / "report.prompted.json")
    save_report(plain_report, work / "report.plain.json")
    say("prompted:\n" + prompted_report.render())
    say("unprompted:\n" + plain_report.render())

    return {
        "prompted": prompted_report,
        "unprompted": plain_report,
        "stats": stats,
    }
