"""
Fuzzy matching against a translation memory
===========================================

A translation memory pairs previously translated sentences with their
translations. For a new source sentence we want the most similar stored
entry, where similarity is 1 - d/max(len) with d the word edit distance.
"""

from promptmt import TmIndex, similarity

tm = TmIndex(
    [
        (0, "the cat sat on the mat".split(), "die katze sass auf der matte".split()),
        (1, "the dog sat on the rug".split(), "der hund sass auf dem teppich".split()),
        (2, "a bird flew over the house".split(), "ein vogel flog ueber das haus".split()),
    ]
)

query = "the cat sat on the rug".split()

# pairwise similarity against every entry
for entry_id, src, _ in tm.entries:
    print(f"entry {entry_id}: similarity {similarity(query, src):.3f}  ({' '.join(src)})")

# the threshold controls how close a match has to be before we trust it
for threshold in [0.3, 0.7, 0.9]:
    hit = tm.retrieve_best(query, threshold)
    found = f"entry {hit.id} at {hit.score:.3f}" if hit else "nothing"
    print(f"threshold {threshold}: {found}")

# an exact copy of a stored source is deliberately skipped (feeding the
# model its own training sentence back teaches it nothing), so the query
# falls through to the next-best entry
hit = tm.retrieve_best("the cat sat on the mat".split(), 0.5)
print(f"exact duplicate falls through to entry {hit.id} at {hit.score:.3f}")

# the returned target side is what ends up in the prompt
hit = tm.retrieve_best(query, 0.5)
print("prompt material:", " ".join(hit.tgt))
