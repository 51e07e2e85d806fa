"""
Learning subword units from a toy corpus
========================================

Merges are learned greedily from pair counts; encoding replays them in
order, so retraining on the same corpus always rebuilds the same table.
"""

from promptmt import BpeModel, bpe_decode_sequence, bpe_encode_sequence, train_bpe

corpus = [
    "the lowest tower glows".split(),
    "the slower mower slows".split(),
    "low towers glow slowly".split(),
]

# each merge joins the most frequent adjacent unit pair
model = train_bpe(corpus, num_merges=12)
print("first merges:")
for left, right in model.merges[:6]:
    print(f"  {left!r} + {right!r} -> {left + right!r}")

# tokens split into units; the continuation marker glues them back
for word in ["lowest", "slowest", "glowing"]:
    units = bpe_encode_sequence(model, [word])
    print(f"{word:10s} -> {units} -> {bpe_decode_sequence(model, units)}")

# round trip holds for words the corpus never saw
sentence = "the glowing mower slows the tower".split()
units = bpe_encode_sequence(model, sentence)
assert bpe_decode_sequence(model, units) == sentence
print(f"\n{len(sentence)} words -> {len(units)} units, reversible")

# the merge table is a plain text artifact
model.save("/tmp/demo_bpe.txt")
print("identical after reload:", BpeModel.load("/tmp/demo_bpe.txt").merges == model.merges)
