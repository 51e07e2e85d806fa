"""Assembly of knowledge-prompted training and inference examples.

Each example pairs an encoder sequence with a decoder sequence. Knowledge
blocks come first, every block opened by its special token, then [Input]
introduces the source sentence and [Output] the target. The loss mask is 1
exactly on decoder positions strictly after [Output], so training sees the
knowledge prefix but is never penalized on it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .corpus import (
    EOS,
    INPUT,
    OUTPUT,
    SENTENCE,
    TEMPLATE,
    TERM,
    SentencePair,
    bpe_encode_sequence,
)
from .errors import DataError


@dataclass(frozen=True)
class KnowledgeBundle:
    """Optional knowledge attached to one sentence pair.

    similar: a retrieved (source, target) pair; terms: matched dictionary
    entries as (source_term, target_term) token tuples; template: a
    (source_template, target_template) pair of token tuples. Any component
    may be absent.
    """

    similar: tuple[tuple[str, ...], tuple[str, ...]] | None = None
    terms: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...] = ()
    template: tuple[tuple[str, ...], tuple[str, ...]] | None = None

    @property
    def is_empty(self) -> bool:
        return self.similar is None and not self.terms and self.template is None


EMPTY_BUNDLE = KnowledgeBundle()


@dataclass(frozen=True)
class PromptedExample:
    """One encoder/decoder sequence pair with its per-position loss mask."""

    id: int
    input_tokens: tuple[str, ...]
    output_tokens: tuple[str, ...]
    loss_mask: tuple[int, ...]

    def __post_init__(self):
        if self.input_tokens.count(INPUT) != 1:
            raise DataError(f"example {self.id}: input needs exactly one {INPUT}")
        if self.output_tokens.count(OUTPUT) != 1:
            raise DataError(f"example {self.id}: output needs exactly one {OUTPUT}")
        if len(self.loss_mask) != len(self.output_tokens):
            raise DataError(
                f"example {self.id}: mask length {len(self.loss_mask)} != "
                f"output length {len(self.output_tokens)}"
            )
        cut = self.output_tokens.index(OUTPUT)
        expected = (0,) * (cut + 1) + (1,) * (len(self.output_tokens) - cut - 1)
        if tuple(self.loss_mask) != expected:
            raise DataError(
                f"example {self.id}: mask must be 1 exactly after {OUTPUT}"
            )


def _blocks(bundle: KnowledgeBundle, side: int) -> list[str]:
    """Knowledge prefix for one side (0 = source, 1 = target)."""
    out: list[str] = []
    if bundle.similar is not None:
        out.append(SENTENCE)
        out.extend(bundle.similar[side])
    for term in bundle.terms:
        out.append(TERM)
        out.extend(term[side])
    if bundle.template is not None:
        out.append(TEMPLATE)
        out.extend(bundle.template[side])
    return out


def _encode_side(tokens: list[str], bpe) -> list[str]:
    return tokens if bpe is None else bpe_encode_sequence(bpe, tokens)


def assemble(
    pair: SentencePair,
    bundle: KnowledgeBundle = EMPTY_BUNDLE,
    *,
    include_target: bool = True,
    bpe=None,
    max_input_len: int = 512,
) -> PromptedExample:
    """Build one example; blocks appear in the order Sentence, Term, Template.

    With include_target False (inference data) the output stops at [Output]
    and the mask is empty of ones. When bpe is given, both sides are
    subword-encoded after assembly (special tokens pass through whole) and
    max_input_len counts subword units. An over-long input drops whole
    knowledge blocks, template first, then sentence, then terms, from both
    sides so the prompt stays aligned; the bare sentence is never truncated.
    """
    if max_input_len < 1:
        raise ValueError(f"max_input_len must be >= 1, got {max_input_len}")

    trimmed = bundle
    while True:
        input_tokens = _blocks(trimmed, 0) + [INPUT] + list(pair.source)
        input_units = _encode_side(input_tokens, bpe)
        if len(input_units) <= max_input_len or trimmed.is_empty:
            break
        if trimmed.template is not None:
            trimmed = replace(trimmed, template=None)
        elif trimmed.similar is not None:
            trimmed = replace(trimmed, similar=None)
        else:
            trimmed = replace(trimmed, terms=())

    output_tokens = _blocks(trimmed, 1) + [OUTPUT]
    if include_target:
        output_tokens += list(pair.target) + [EOS]
    output_units = _encode_side(output_tokens, bpe)

    cut = output_units.index(OUTPUT)
    mask = (0,) * (cut + 1) + (1,) * (len(output_units) - cut - 1)
    return PromptedExample(
        id=pair.id,
        input_tokens=tuple(input_units),
        output_tokens=tuple(output_units),
        loss_mask=mask,
    )


def split_output(tokens) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split a decoder sequence into (knowledge prefix, translation)."""
    tokens = tuple(tokens)
    if tokens.count(OUTPUT) != 1:
        raise DataError(
            f"expected exactly one {OUTPUT}, found {tokens.count(OUTPUT)}"
        )
    cut = tokens.index(OUTPUT)
    return tokens[:cut], tokens[cut + 1 :]


def strip_knowledge(example: PromptedExample) -> PromptedExample:
    """The same example with every knowledge block removed from both sides."""
    input_tokens = example.input_tokens[example.input_tokens.index(INPUT) :]
    output_tokens = example.output_tokens[example.output_tokens.index(OUTPUT) :]
    mask = example.loss_mask[len(example.loss_mask) - len(output_tokens) :]
    return PromptedExample(
        id=example.id,
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        loss_mask=mask,
    )


def save_dataset(examples, path: str | Path) -> None:
    """Write examples as JSONL {"id", "input", "output", "mask"} records."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "id": ex.id,
                        "input": list(ex.input_tokens),
                        "output": list(ex.output_tokens),
                        "mask": list(ex.loss_mask),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_dataset(path: str | Path) -> list:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                examples.append(
                    PromptedExample(
                        id=int(rec["id"]),
                        input_tokens=tuple(rec["input"]),
                        output_tokens=tuple(rec["output"]),
                        loss_mask=tuple(int(b) for b in rec["mask"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, DataError) as exc:
                raise DataError(f"{path}: bad example at line {lineno}: {exc}") from exc
    return examples


def build_dataset(
    pairs,
    bundles,
    *,
    include_target: bool = True,
    bpe=None,
    max_input_len: int = 512,
) -> list:
    """Assemble aligned pairs and bundles into a dataset."""
    if len(pairs) != len(bundles):
        raise DataError(
            f"{len(pairs)} pairs but {len(bundles)} knowledge bundles"
        )
    return [
        assemble(
            p, b, include_target=include_target, bpe=bpe, max_input_len=max_input_len
        )
        for p, b in zip(pairs, bundles)
    ]
