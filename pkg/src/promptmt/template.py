"""Bracketed constituency trees and depth-pruned sentence templates.

Trees use the Penn Treebank text form, e.g.
(S (NP (DT the) (NN cat)) (VP (VBD sat))). A template is the tree read off
at a fixed depth: internal nodes above the cut recurse, an internal node on
the cut contributes its label, and words above or on the cut survive as
themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .corpus import TEMPLATE
from .errors import DataError


@dataclass(frozen=True)
class ParseTree:
    """A constituency tree node: leaves carry a word, internal nodes children."""

    label: str
    children: tuple["ParseTree", ...] = ()
    word: str | None = None

    def __post_init__(self):
        if (self.word is None) == (not self.children):
            raise DataError(
                f"node {self.label!r} must have either children or a word"
            )

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    def words(self) -> list[str]:
        if self.is_leaf:
            return [self.word]
        out = []
        for child in self.children:
            out.extend(child.words())
        return out

    def height(self) -> int:
        """Leaves have height 0."""
        if self.is_leaf:
            return 0
        return 1 + max(child.height() for child in self.children)

    def render(self) -> str:
        if self.is_leaf:
            return f"({self.label} {self.word})"
        return f"({self.label} " + " ".join(c.render() for c in self.children) + ")"


def parse_ptb(text: str) -> ParseTree:
    """Parse one bracketed tree; errors carry the character offset."""
    pos = 0
    n = len(text)

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def read_atom() -> str:
        nonlocal pos
        start = pos
        while pos < n and not text[pos].isspace() and text[pos] not in "()":
            pos += 1
        if pos == start:
            raise DataError(f"expected a label or word at offset {start}")
        return text[start:pos]

    def read_node() -> ParseTree:
        nonlocal pos
        skip_ws()
        if pos >= n or text[pos] != "(":
            raise DataError(f"expected '(' at offset {pos}")
        pos += 1
        skip_ws()
        label = read_atom()
        skip_ws()
        if pos < n and text[pos] == "(":
            children = []
            while pos < n and text[pos] == "(":
                children.append(read_node())
                skip_ws()
            if pos >= n or text[pos] != ")":
                raise DataError(f"expected ')' at offset {pos}")
            pos += 1
            return ParseTree(label=label, children=tuple(children))
        word = read_atom()
        skip_ws()
        if pos >= n or text[pos] != ")":
            raise DataError(f"expected ')' at offset {pos}")
        pos += 1
        return ParseTree(label=label, word=word)

    tree = read_node()
    skip_ws()
    if pos != n:
        raise DataError(f"trailing text at offset {pos}")
    return tree


def extract_template(tree: ParseTree, depth: int = 4) -> list[str]:
    """Template tokens from pruning the tree at the given depth.

    The root sits at depth 0. A node shallower than the cut recurses into
    its children; an internal node on the cut becomes its label; a leaf at
    or above the cut becomes its word.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")

    def walk(node: ParseTree, level: int) -> list[str]:
        if node.is_leaf:
            return [node.word]
        if level == depth:
            return [node.label]
        out = []
        for child in node.children:
            out.extend(walk(child, level + 1))
        return out

    return walk(tree, 0)


def load_trees(path: str | Path) -> list:
    """One tree per line; a blank line means no parse and loads as None."""
    trees = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            trees.append(None)
            continue
        try:
            trees.append(parse_ptb(line))
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return trees


def save_trees(trees, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tree in trees:
            fh.write(("" if tree is None else tree.render()) + "\n")


def build_templates(trees, depth: int = 4) -> list:
    """Template token list per tree, None where there is no tree."""
    return [None if t is None else extract_template(t, depth) for t in trees]


def build_template_dataset(pairs, src_trees, tgt_trees, depth: int = 4) -> list:
    """Training rows for a template predictor.

    Each row is (source tokens ++ [Template] ++ source template, target
    template). Trees align 1:1 with the pairs and must yield exactly
    their sentence. A None tree stands for a sentence without a parse:
    its side contributes an empty template and the source [Template]
    block is dropped.
    """
    if not len(pairs) == len(src_trees) == len(tgt_trees):
        raise DataError(
            f"{len(pairs)} pairs but {len(src_trees)} source trees "
            f"and {len(tgt_trees)} target trees"
        )
    rows = []
    for pair, src_tree, tgt_tree in zip(pairs, src_trees, tgt_trees):
        if src_tree is not None and tuple(src_tree.words()) != tuple(pair.source):
            raise DataError(f"pair {pair.id}: source tree yield differs from the sentence")
        if tgt_tree is not None and tuple(tgt_tree.words()) != tuple(pair.target):
            raise DataError(f"pair {pair.id}: target tree yield differs from the sentence")
        inp = list(pair.source)
        if src_tree is not None:
            inp += [TEMPLATE] + extract_template(src_tree, depth)
        out = [] if tgt_tree is None else extract_template(tgt_tree, depth)
        rows.append((inp, out))
    return rows
