"""
Matching a bilingual terminology against sentence pairs
=======================================================

A terminology entry is a source term with its approved translation,
either side possibly several tokens long. Matching finds the entries a
sentence pair actually uses; those pairs become prompt material.
"""

from promptmt import TermDictionary, TermEntry

dictionary = TermDictionary(
    [
        TermEntry(("bank",), ("ufer",), id=0),
        TermEntry(("bank",), ("geldinstitut",), id=1),
        TermEntry(("interest", "rate"), ("zinssatz",), id=2),
    ]
)

# training time: both sides of the pair are known, so a match requires
# the source term in the source AND its translation in the target
source = "the bank raised the interest rate".split()
target = "das geldinstitut erhoehte den zinssatz".split()
for entry in dictionary.match(source, target):
    print(f"matched {' '.join(entry.source)} -> {' '.join(entry.target)}")

# the river reading of "bank" is filtered out by the target side
river = "wir sassen am ufer".split()
picks = dictionary.match("we sat on the bank".split(), river)
print("river sentence picks:", [" ".join(e.target) for e in picks])

# inference time: no reference target exists, so every entry whose
# source term occurs is a candidate, ambiguity included
candidates = dictionary.match_source_only(source)
print("source-only candidates:", [" ".join(e.target) for e in candidates])

# multi-token terms must occur as a contiguous run
scrambled = "the rate of interest rose".split()
print("scrambled phrase matches:", dictionary.match_source_only(scrambled))
