"""Command-line interface.

Every stage of the toolkit is a subcommand over the documented file
formats, so a whole experiment can be scripted as a sequence of plain
shell steps, or run in one shot with `pipeline`. Exit codes: 0 on
success, 1 on usage errors, 2 on data errors (missing or malformed
files).

The `pipeline` subcommand also accepts a config file of `key = value`
lines (# comments and blank lines ignored) holding RunConfig or
task-generator fields; flags given on the command line win over the
file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .corpus import BpeModel, Vocab, load_parallel, train_bpe, write_parallel
from .decode import BeamConfig, batch_translate, write_stats, write_translations
from .errors import DataError
from .metrics import evaluate, load_tokenized
from .model import (
    ModelConfig,
    TrainConfig,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .pipeline import RunConfig, build_bundles, run_pipeline
from .prompt import EMPTY_BUNDLE, KnowledgeBundle, build_dataset, load_dataset, save_dataset, strip_knowledge
from .retrieval import TmIndex, load_tm, save_hits, save_tm
from .synth import SynthConfig, generate
from .template import build_templates, extract_template, load_trees
from .terminology import load_dictionary, load_matches, save_dictionary, save_matches


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_lines(path) -> list:
    """Tokenized text, one whitespace-split sentence per line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    return load_tokenized(path)


# --------------------------------------------------------------------------
# subcommands


def cmd_bpe_train(args) -> int:
    lines = []
    for path in args.corpus:
        lines += _read_lines(path)
    model = train_bpe(lines, num_merges=args.merges)
    model.save(args.out)
    print(f"learned {len(model.merges)} merges -> {args.out}")
    return 0


def cmd_build_tm(args) -> int:
    pairs = load_parallel(args.src, args.tgt)
    entries = [(p.id, list(p.source), list(p.target)) for p in pairs]
    save_tm(entries, args.out)
    print(f"wrote {len(entries)} TM entries -> {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    pairs = load_parallel(args.tm_src, args.tm_tgt)
    index = TmIndex.from_pairs(pairs)
    queries = _read_lines(args.query)
    hits = index.retrieve_all(queries, args.threshold)
    if args.out:
        save_hits(hits, args.out)
    else:
        for hit in hits:
            if hit is None:
                print("null")
            else:
                print(json.dumps(
                    {"id": hit.id, "score": hit.score,
                     "src": list(hit.src), "tgt": list(hit.tgt)},
                    ensure_ascii=False,
                ))
    n = sum(1 for h in hits if h is not None)
    print(f"{n}/{len(hits)} queries above {args.threshold}", file=sys.stderr)
    return 0


def cmd_match_terms(args) -> int:
    dictionary = load_dictionary(args.dict)
    sources = _read_lines(args.src)
    if args.tgt:
        targets = _read_lines(args.tgt)
        if len(targets) != len(sources):
            raise DataError(
                f"{args.src}: {len(sources)} sentences but {args.tgt}: {len(targets)}"
            )
        matches = [
            (i, dictionary.match(s, t))
            for i, (s, t) in enumerate(zip(sources, targets))
        ]
    else:
        matches = [(i, dictionary.match_source_only(s)) for i, s in enumerate(sources)]
    save_matches(matches, args.out)
    n = sum(len(m) for _, m in matches)
    print(f"{n} term matches over {len(matches)} sentences -> {args.out}")
    return 0


def cmd_extract_templates(args) -> int:
    trees = load_trees(args.trees)
    templates = build_templates(trees, depth=args.depth)
    with open(args.out, "w", encoding="utf-8") as fh:
        for template in templates:
            fh.write(" ".join(template) + "\n")
    print(f"wrote {len(templates)} templates -> {args.out}")
    return 0


def cmd_build_dataset(args) -> int:
    pairs = load_parallel(args.src, args.tgt)
    dictionary = load_dictionary(args.dict) if args.dict else None
    tm = load_tm(args.tm) if args.tm else None
    trees = load_trees(args.trees) if args.trees else None
    if trees is not None and len(trees) != len(pairs):
        raise DataError(f"{args.trees}: {len(trees)} trees but {len(pairs)} sentence pairs")

    bundles = []
    for i, pair in enumerate(pairs):
        terms = ()
        similar = None
        template = None
        if dictionary is not None:
            matched = (
                dictionary.match_source_only(pair.source)
                if args.inference
                else dictionary.match(pair.source, pair.target)
            )
            terms = tuple((e.source, e.target) for e in matched)
        if tm is not None:
            hit = tm.retrieve_best(pair.source, args.threshold)
            if hit is not None:
                similar = (hit.src, hit.tgt)
        if trees is not None:
            template = tuple(extract_template(trees[i], depth=args.depth))
        bundles.append(KnowledgeBundle(similar=similar, terms=terms, template=template))

    bpe = BpeModel.load(args.bpe) if args.bpe else None
    examples = build_dataset(
        pairs,
        bundles,
        include_target=not args.inference,
        bpe=bpe,
        max_input_len=args.max_input_len,
    )
    save_dataset(examples, args.out)
    print(f"wrote {len(examples)} examples -> {args.out}")
    return 0


def cmd_train(args) -> int:
    train_set = load_dataset(args.data)
    if args.val:
        val_set = load_dataset(args.val)
    else:
        n_val = max(1, len(train_set) // 10)
        train_set, val_set = train_set[:-n_val], train_set[-n_val:]
    vocab = Vocab.load(args.vocab)
    model_cfg = ModelConfig(
        vocab_size=len(vocab),
        d_model=args.d_model,
        n_heads=args.n_heads,
        n_enc_layers=args.n_enc_layers,
        n_dec_layers=args.n_dec_layers,
        d_ff=args.d_ff,
        max_positions=args.max_positions,
        dropout=args.dropout,
    )
    train_cfg = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        average_last=args.average_last,
        warmup_steps=args.warmup_steps,
        schedule=args.schedule,
    )
    if args.init:
        params, ckpt_cfg, sidecar = load_checkpoint(args.init)
        if ckpt_cfg != model_cfg:
            raise DataError(f"{args.init}: checkpoint config differs from the requested one")
        _check_vocab(args.init, sidecar, vocab)
    else:
        params = init_params(model_cfg, seed=args.seed)
    result = train(params, model_cfg, train_set, val_set, train_cfg, vocab, log=print)
    save_checkpoint(args.out, result.params, model_cfg, vocab)
    print(f"best epoch {result.best_epoch}, "
          f"val loss {min(result.val_losses):.4f} -> {args.out}")
    return 0


def _check_vocab(ckpt_path, sidecar: dict, vocab: Vocab) -> None:
    # a checkpoint is only meaningful with the vocabulary it was trained on
    want = sidecar.get("vocab_sha256")
    if want is not None and want != vocab.sha256():
        raise DataError(f"{ckpt_path}: checkpoint was trained with a different vocabulary")


def cmd_translate(args) -> int:
    params, model_cfg, sidecar = load_checkpoint(args.ckpt)
    vocab = Vocab.load(args.vocab)
    _check_vocab(args.ckpt, sidecar, vocab)
    examples = load_dataset(args.data)
    if args.no_knowledge:
        examples = [strip_knowledge(ex) for ex in examples]
    bpe = BpeModel.load(args.bpe) if args.bpe else None
    beam = BeamConfig(
        beam_size=args.beam_size,
        max_new_tokens=args.max_new_tokens,
        length_penalty=args.length_penalty,
    )
    outputs, stats = batch_translate(params, model_cfg, vocab, examples, beam, bpe=bpe)
    write_translations(outputs, args.out)
    if args.stats:
        write_stats(stats, args.stats)
    print(f"{len(outputs)} sentences -> {args.out} "
          f"({stats['sentences_per_second']:.2f} sent/s)")
    return 0


def cmd_evaluate(args) -> int:
    hyps = _read_lines(args.hyp)
    refs = _read_lines(args.ref)
    term_sets = None
    if args.terms:
        matches = load_matches(args.terms)
        if len(matches) != len(hyps):
            raise DataError(f"{args.terms}: {len(matches)} records but {len(hyps)} hypotheses")
        term_sets = [[list(tgt) for _, tgt in terms] for _, terms in matches]
    report = evaluate(hyps, refs, term_sets, smooth=not args.no_smooth)
    if args.table:
        print(report.render())
    else:
        print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_regular=args.n_regular,
        n_ambiguous_terms=args.n_ambiguous_terms,
        renderings_per_term=args.renderings_per_term,
        len_min=args.len_min,
        len_max=args.len_max,
        n_train=args.n_train,
        n_test=args.n_test,
        term_position=args.term_position,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_pairs, test_pairs, dictionary, tm_entries = generate(cfg)
    write_parallel(train_pairs, out / "train.src", out / "train.tgt")
    write_parallel(test_pairs, out / "test.src", out / "test.tgt")
    save_dictionary(dictionary, out / "dict.jsonl")
    save_tm(tm_entries, out / "tm.jsonl")
    print(f"{len(train_pairs)} train / {len(test_pairs)} test pairs, "
          f"{len(dictionary)} dictionary entries, {len(tm_entries)} TM entries -> {out}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _pipeline_config(args)
    work = Path(args.work)
    out = run_pipeline(cfg, work, log=print if args.verbose else None)
    print(json.dumps(
        {
            "prompted": out["prompted"].to_dict(),
            "unprompted": out["unprompted"].to_dict(),
            "stats": out["stats"],
        },
        indent=2,
    ))
    return 0


# --------------------------------------------------------------------------
# pipeline config plumbing

_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "synth"}
_SYNTH_FIELDS = {f.name: f for f in dataclasses.fields(SynthConfig)}


def _parse_value(key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            return tuple(part for part in (p.strip() for p in raw.split(",")) if part)
        return raw
    except ValueError as exc:
        raise DataError(f"config key {key!r}: {exc}") from exc


def load_config_file(path) -> dict:
    """Read `key = value` lines into {key: parsed value}.

    Keys are RunConfig field names; task-generator fields may be written
    either bare (n_train) or prefixed (synth.n_train). Unknown keys are
    an error so typos cannot silently fall back to defaults.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        bare = key.removeprefix("synth.")
        if key in _RUN_FIELDS:
            typ = bool if _RUN_FIELDS[key].type == "bool" else type(_RUN_FIELDS[key].default)
            values[key] = _parse_value(key, raw, typ)
        elif bare in _SYNTH_FIELDS:
            typ = type(_SYNTH_FIELDS[bare].default)
            values["synth." + bare] = _parse_value(key, raw, typ)
        else:
            raise DataError(f"{path}: line {lineno}: unknown key {key!r}")
    return values


def _pipeline_config(args) -> RunConfig:
    values = load_config_file(args.config) if args.config else {}
    # flags win over the config file
    for key in list(_RUN_FIELDS) + ["synth." + k for k in _SYNTH_FIELDS]:
        flag = getattr(args, key.replace(".", "_").replace("-", "_"), None)
        if flag is not None:
            values[key] = flag
    if "knowledge" in values and isinstance(values["knowledge"], str):
        values["knowledge"] = tuple(
            part for part in (p.strip() for p in values["knowledge"].split(",")) if part
        )
    synth_kwargs = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("synth.")}
    run_kwargs = {k: v for k, v in values.items() if not k.startswith("synth.")}
    # one seed drives every stage; the task generator inherits it
    if "seed" in run_kwargs:
        synth_kwargs.setdefault("seed", run_kwargs["seed"])
    try:
        return RunConfig(synth=SynthConfig(**synth_kwargs), **run_kwargs)
    except ValueError as exc:
        raise DataError(f"bad configuration: {exc}") from exc


# --------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="promptmt", description=__doc__.split("\n", 1)[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("bpe-train", help="learn a BPE merge table from tokenized text")
    p.add_argument("--corpus", nargs="+", required=True, metavar="FILE",
                   help="tokenized text files, one sentence per line")
    p.add_argument("--merges", type=int, default=300)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_train)

    p = sub.add_parser("build-tm", help="pack a parallel corpus into a translation memory")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_tm)

    p = sub.add_parser("retrieve", help="fuzzy-match queries against a translation memory")
    p.add_argument("--tm-src", required=True, help="TM source side, tokenized text")
    p.add_argument("--tm-tgt", required=True, help="TM target side, tokenized text")
    p.add_argument("--query", required=True, help="query sentences, tokenized text")
    p.add_argument("--lambda", dest="threshold", type=float, default=0.4,
                   help="similarity threshold (default 0.4)")
    p.add_argument("--out", help="write JSONL hits here instead of stdout")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("match-terms", help="find dictionary terms in sentences")
    p.add_argument("--dict", required=True, help="terminology JSONL")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", help="when given, keep only entries whose target side matches too")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match_terms)

    p = sub.add_parser("extract-templates", help="truncate parse trees to template label sequences")
    p.add_argument("--trees", required=True, help="parse trees, one per line")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_templates)

    p = sub.add_parser("build-dataset", help="assemble prompted training or inference examples")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--dict", help="terminology JSONL for [Term] blocks")
    p.add_argument("--tm", help="translation memory JSONL for [Sentence] blocks")
    p.add_argument("--trees", help="parse trees for [Template] blocks, aligned with --src")
    p.add_argument("--lambda", dest="threshold", type=float, default=0.4)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--bpe", help="apply this merge table to text (not markers)")
    p.add_argument("--max-input-len", type=int, default=512)
    p.add_argument("--inference", action="store_true",
                   help="no reference targets: source-only term matching, empty outputs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train a model on a prompted dataset")
    p.add_argument("--data", required=True, help="training examples JSONL")
    p.add_argument("--val", help="validation examples JSONL (default: tail 10%% of --data)")
    p.add_argument("--vocab", required=True)
    p.add_argument("--init", help="warm-start from this checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--n-enc-layers", type=int, default=2)
    p.add_argument("--n-dec-layers", type=int, default=2)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--max-positions", type=int, default=96)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=30)
    p.add_argument("--average-last", type=int, default=0)
    p.add_argument("--warmup-steps", type=int, default=0)
    p.add_argument("--schedule", choices=("constant", "linear"), default="constant")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="decode a dataset with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="inference examples JSONL")
    p.add_argument("--vocab", required=True)
    p.add_argument("--bpe", help="undo BPE on the output with this merge table")
    p.add_argument("--out", required=True)
    p.add_argument("--stats", help="write decode statistics JSON here")
    p.add_argument("--no-knowledge", action="store_true",
                   help="strip knowledge blocks before decoding")
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--max-new-tokens", type=int, default=64)
    p.add_argument("--length-penalty", type=float, default=1.0)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--terms", help="per-sentence term matches JSONL for exact-match accuracy")
    p.add_argument("--no-smooth", action="store_true", help="raw n-gram precisions")
    p.add_argument("--table", action="store_true", help="plain-text table instead of JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate the synthetic disambiguation task")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-regular", type=int, default=20)
    p.add_argument("--n-ambiguous-terms", type=int, default=4)
    p.add_argument("--renderings-per-term", type=int, default=2)
    p.add_argument("--len-min", type=int, default=3)
    p.add_argument("--len-max", type=int, default=8)
    p.add_argument("--n-train", type=int, default=600)
    p.add_argument("--n-test", type=int, default=48)
    p.add_argument("--term-position", choices=("random", "final"), default="random")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="synth -> train -> translate -> evaluate in one run")
    p.add_argument("--work", default="runs/pipeline", help="artifact directory")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--verbose", action="store_true", help="log progress to stdout")
    # every RunConfig field is a flag; None means "not given"
    for name, fld in _RUN_FIELDS.items():
        flag = "--" + name.replace("_", "-")
        if fld.type == "bool" or isinstance(fld.default, bool):
            p.add_argument(flag, action="store_const", const=True, default=None)
        elif name == "knowledge":
            p.add_argument(flag, default=None,
                           help='comma-separated kinds, e.g. "term,sent"')
        else:
            typ = type(fld.default) if fld.default is not None else str
            p.add_argument(flag, type=typ, default=None)
    for name in _SYNTH_FIELDS:
        fld = _SYNTH_FIELDS[name]
        p.add_argument("--synth-" + name.replace("_", "-"),
                       dest="synth_" + name,
                       type=type(fld.default), default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # invalid option values (bad dimensions, unknown schedule, ...)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
