"""
Question/answer pairs, the train/test split, and corpus statistics
==================================================================

Every sheet yields exactly 14 visual questions across four families.
Answers are recomputed from the IR, never stored prose, so each one can
be regenerated from the ground truth plus its template id alone.
"""

from sheetgen.corpus import make_sheet_id
from sheetgen.qa import (
    compute_stats,
    generate_qa,
    ground_truth,
    regenerate_answer,
    split_manifest,
)
from sheetgen.sampler import derive_sheet_seed, generate_sheet

corpus_seed = 11
docs, pairs = [], []
for index in range(20):
    seed = derive_sheet_seed(corpus_seed, index)
    doc = generate_sheet(seed)
    sheet_id = make_sheet_id(index, seed)
    docs.append(doc)
    pairs.extend(generate_qa(doc, sheet_id, f"images/{sheet_id}.png"))

print(f"{len(docs)} sheets -> {len(pairs)} question pairs")
print()

# One sample per family from the first sheet that has all four.
by_family = {}
for pair in pairs:
    by_family.setdefault(pair.family, pair)
for family in ("ocr", "layout", "omr", "chord"):
    pair = by_family[family]
    print(f"[{family}] {pair.template_id}")
    print(f"  Q: {pair.question}")
    print(f"  A: {pair.answer}")
print()

# Any answer is a pure function of (ground truth, template id).
doc, pair = docs[0], pairs[0]
assert regenerate_answer(ground_truth(doc), pair.template_id) == pair.answer
print("answers regenerate from ground truth + template id")
print()

# The split shuffles whole sheets, so a sheet never leaks across sides.
manifest = split_manifest(pairs, ratio=0.9, seed=corpus_seed)
sides = {}
for entry in manifest.entries:
    sides.setdefault(entry.pair.sheet_id, set()).add(entry.split)
assert all(len(s) == 1 for s in sides.values())
n_train = sum(1 for s in sides.values() if s == {"train"})
print(f"split: {n_train} train sheets, {len(sides) - n_train} test sheets")
print()

print(compute_stats(docs, manifest).as_text())
