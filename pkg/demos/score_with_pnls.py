"""
Scoring predictions with PNLS and an optional binary judge
==========================================================

PNLS finds the best-matching substring of a prediction, so verbose
answers ("The tempo is 96 BPM.") are not punished for their padding,
while real errors still cost edit distance. A judge model can grade the
residue where string overlap is too blunt; here a stub stands in.
"""

from sheetgen.evaluate import (
    StubJudge,
    evaluate_predictions,
    judge_predictions,
    pnls,
)
from sheetgen.qa import generate_qa, split_manifest
from sheetgen.sampler import derive_sheet_seed, generate_sheet

# The metric in isolation: 1.0 is a perfect (sub)match.
cases = [
    ("96 BPM", "96 BPM"),
    ("96 BPM", "The tempo is 96 BPM."),
    ("96 BPM", "The tempo is 69 BPM."),
    ("4/4", "This piece is in 4/4 time"),
    ("qC4 qD4 hE4", "qC4 qD4 hE5"),
]
for reference, prediction in cases:
    print(f"  pnls({reference!r}, {prediction!r}) = "
          f"{pnls(reference, prediction):.3f}")
print()

# Score a small manifest against synthetic predictions: one family
# answered perfectly, one verbosely, one with a typo, the rest missing.
pairs = []
for index in range(6):
    seed = derive_sheet_seed(5, index)
    sheet_id = f"s{index:05d}-{seed & 0xFFFFFFFF:08x}"
    pairs.extend(generate_qa(generate_sheet(seed), sheet_id,
                             f"images/{sheet_id}.png"))
manifest = split_manifest(pairs, ratio=1.0, seed=5)

predictions = {}
for pair in pairs:
    if pair.family == "ocr":
        predictions[pair.qa_id] = f"Sure! The answer is {pair.answer}."
    elif pair.family == "layout":
        predictions[pair.qa_id] = pair.answer
    elif pair.family == "omr":
        predictions[pair.qa_id] = pair.answer[:-1] + "X"

report = evaluate_predictions(manifest, predictions)
print(report.as_text())
print()

# The stub judge grades by normalized equality, so the verbose OCR
# answers that PNLS forgives are the ones it rejects.
judged = judge_predictions(manifest, predictions, StubJudge())
print(judged.as_text())
