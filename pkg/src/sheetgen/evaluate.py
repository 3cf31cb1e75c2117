"""Scoring predicted answers: partial-alignment string metric and LLM judge.

The core metric (PNLS) is a partial-match normalized Levenshtein score. The
reference answer must be matched in full, but the prediction may carry extra
text on either side for free: among all substrings of the prediction we take
one with minimal edit distance d* to the reference, preferring longer
substrings and then earlier ones among equals, and score

    1 - d* / max(len(reference), len(substring))

so a verbose but correct answer is not punished, while a short reference
cannot be gamed by dumping the whole alphabet. Both strings are lowercased
and stripped first; an empty reference has no defined score.

Binary judging (for G-Acc style reports) goes through an injectable judge
object. ``StubJudge`` works offline and keeps the test suite networkless;
``HttpJudge`` speaks an OpenAI-style chat endpoint via httpx with retry and
exponential backoff handled in :func:`judge_binary`. A verdict other than a
bare ``0`` or ``1`` counts as an abstention, never as a grade.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import httpx

from .errors import JudgeError, MetricError, PredictionError
from .qa import FAMILIES, Manifest

__all__ = [
    "EvalReport",
    "FamilySummary",
    "HttpJudge",
    "JudgeFamily",
    "JudgeReport",
    "PairScore",
    "Prediction",
    "StubJudge",
    "TransientJudgeError",
    "evaluate_predictions",
    "judge_binary",
    "judge_predictions",
    "normalize",
    "pnls",
    "read_predictions",
]


def normalize(text: str) -> str:
    """Canonical form compared by the metric: stripped and lowercased."""
    return text.strip().lower()


def pnls(reference: str, prediction: str) -> float:
    """Partial-match normalized Levenshtein similarity in [0, 1].

    Raises MetricError when the reference normalizes to the empty string.
    """
    gt = normalize(reference)
    pred = normalize(prediction)
    if not gt:
        raise MetricError("reference answer is empty after normalization")
    m, n = len(gt), len(pred)
    # Semi-global DP over (cost, start): cost of editing gt[:i] into some
    # substring of pred ending at j, keeping the earliest start among
    # minimal costs. Prefix and suffix of the prediction are free.
    cost = [0] * (n + 1)
    start = list(range(n + 1))
    for i in range(1, m + 1):
        prev_cost, prev_start = cost, start
        cost = [i] + [0] * n
        start = [0] * (n + 1)
        for j in range(1, n + 1):
            best = (prev_cost[j - 1] + (gt[i - 1] != pred[j - 1]),
                    prev_start[j - 1])
            up = (prev_cost[j] + 1, prev_start[j])
            if up < best:
                best = up
            left = (cost[j - 1] + 1, start[j - 1])
            if left < best:
                best = left
            cost[j], start[j] = best
    best_key = min((cost[j], start[j] - j, start[j]) for j in range(n + 1))
    d_star, neg_length, _ = best_key
    return 1.0 - d_star / max(m, -neg_length)


# ---------------------------------------------------------------------------
# Prediction files and reports


@dataclass(frozen=True)
class Prediction:
    qa_id: str
    answer: str


def read_predictions(path: Path) -> tuple[Prediction, ...]:
    """JSONL with one {"qa_id", "answer"} object per line; duplicate ids are
    an error, not a silent overwrite."""
    from .corpus import read_jsonl

    seen: set[str] = set()
    predictions: list[Prediction] = []
    for number, obj in enumerate(read_jsonl(path), start=1):
        if not isinstance(obj, dict) or "qa_id" not in obj or "answer" not in obj:
            raise PredictionError(
                f"{path}:{number}: prediction record needs qa_id and answer")
        qa_id = str(obj["qa_id"])
        if qa_id in seen:
            raise PredictionError(
                f"{path}:{number}: duplicate prediction for {qa_id}")
        seen.add(qa_id)
        predictions.append(Prediction(qa_id=qa_id, answer=str(obj["answer"])))
    return tuple(predictions)


@dataclass(frozen=True)
class PairScore:
    qa_id: str
    family: str
    split: str
    score: float


@dataclass(frozen=True)
class FamilySummary:
    family: str
    evaluated: int
    missing: int
    mean_score: float | None


@dataclass(frozen=True)
class EvalReport:
    scores: tuple[PairScore, ...]
    families: tuple[FamilySummary, ...]
    overall_mean: float | None
    missing_ids: tuple[str, ...]

    @property
    def evaluated(self) -> int:
        return len(self.scores)

    def as_dict(self) -> dict:
        return {
            "evaluated": self.evaluated,
            "missing": len(self.missing_ids),
            "overall_mean": self.overall_mean,
            "families": {
                f.family: {"evaluated": f.evaluated, "missing": f.missing,
                           "mean": f.mean_score}
                for f in self.families
            },
            "scores": {s.qa_id: s.score for s in self.scores},
        }

    def as_text(self) -> str:
        rows = [("family", "n", "missing", "pnls")]
        for f in self.families:
            mean = "-" if f.mean_score is None else f"{f.mean_score:.3f}"
            rows.append((f.family, str(f.evaluated), str(f.missing), mean))
        overall = "-" if self.overall_mean is None else f"{self.overall_mean:.3f}"
        rows.append(("overall", str(self.evaluated), str(len(self.missing_ids)),
                     overall))
        widths = [max(len(row[col]) for row in rows) for col in range(4)]
        return "\n".join(
            "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
            for row in rows
        )


def _prediction_map(
    predictions: Mapping[str, str] | Iterable[Prediction],
) -> dict[str, str]:
    if isinstance(predictions, Mapping):
        return {str(k): str(v) for k, v in predictions.items()}
    by_id: dict[str, str] = {}
    for prediction in predictions:
        if prediction.qa_id in by_id:
            raise PredictionError(f"duplicate prediction for {prediction.qa_id}")
        by_id[prediction.qa_id] = prediction.answer
    return by_id


def _family_order(families: Iterable[str]) -> list[str]:
    present = set(families)
    ordered = [f for f in FAMILIES if f in present]
    return ordered + sorted(present - set(FAMILIES))


def evaluate_predictions(
    manifest: Manifest,
    predictions: Mapping[str, str] | Iterable[Prediction],
) -> EvalReport:
    """Score every manifest question that has a prediction.

    Questions without a prediction are excluded from the means but reported
    in ``missing_ids``; predictions for unknown question ids are an error.
    """
    by_id = _prediction_map(predictions)
    known = {entry.pair.qa_id for entry in manifest.entries}
    unknown = sorted(set(by_id) - known)
    if unknown:
        shown = ", ".join(unknown[:5])
        raise PredictionError(f"predictions for unknown question ids: {shown}")
    scores: list[PairScore] = []
    missing: list[str] = []
    family_scores: dict[str, list[float]] = {}
    family_missing: dict[str, int] = {}
    for entry in manifest.entries:
        pair = entry.pair
        if pair.qa_id not in by_id:
            missing.append(pair.qa_id)
            family_missing[pair.family] = family_missing.get(pair.family, 0) + 1
            continue
        score = pnls(pair.answer, by_id[pair.qa_id])
        scores.append(PairScore(qa_id=pair.qa_id, family=pair.family,
                                split=entry.split, score=score))
        family_scores.setdefault(pair.family, []).append(score)
    families = tuple(
        FamilySummary(
            family=family,
            evaluated=len(family_scores.get(family, [])),
            missing=family_missing.get(family, 0),
            mean_score=(sum(values) / len(values)
                        if (values := family_scores.get(family, [])) else None),
        )
        for family in _family_order(set(family_scores) | set(family_missing))
    )
    overall = sum(s.score for s in scores) / len(scores) if scores else None
    return EvalReport(scores=tuple(scores), families=families,
                      overall_mean=overall, missing_ids=tuple(missing))


# ---------------------------------------------------------------------------
# Binary judging


class TransientJudgeError(JudgeError):
    """Retryable judge failure: rate limit, server error, or transport."""


class Judge(Protocol):
    def ask(self, question: str, reference: str, prediction: str) -> str: ...


@dataclass
class StubJudge:
    """Offline judge. With no forced verdict it grades by normalized string
    equality, which keeps the full test suite runnable without a network."""

    verdict: str | None = None
    calls: list[tuple[str, str, str]] = field(default_factory=list)

    def ask(self, question: str, reference: str, prediction: str) -> str:
        self.calls.append((question, reference, prediction))
        if self.verdict is not None:
            return self.verdict
        return "1" if normalize(reference) == normalize(prediction) else "0"


_JUDGE_SYSTEM = (
    "You grade answers to questions about rendered music sheets. Compare the "
    "model answer with the reference answer and reply with exactly one "
    "character: 1 if the model answer matches the reference in meaning, 0 "
    "otherwise."
)


def _judge_message(question: str, reference: str, prediction: str) -> str:
    return (f"Question: {question}\n"
            f"Reference answer: {reference}\n"
            f"Model answer: {prediction}\n"
            "Verdict (1 or 0):")


class HttpJudge:
    """Judge backed by an OpenAI-style chat completion endpoint.

    Configuration comes from arguments or the SHEETGEN_JUDGE_URL,
    SHEETGEN_JUDGE_API_KEY, and SHEETGEN_JUDGE_MODEL environment variables.
    ``transport`` is surfaced for tests (httpx.MockTransport).
    """

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = url or os.environ.get("SHEETGEN_JUDGE_URL", "")
        if not self.url:
            raise JudgeError(
                "no judge endpoint configured; set SHEETGEN_JUDGE_URL or pass url")
        self.api_key = (api_key if api_key is not None
                        else os.environ.get("SHEETGEN_JUDGE_API_KEY", ""))
        self.model = model or os.environ.get("SHEETGEN_JUDGE_MODEL", "gpt-4o")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def ask(self, question: str, reference: str, prediction: str) -> str:
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": _JUDGE_SYSTEM},
                {"role": "user",
                 "content": _judge_message(question, reference, prediction)},
            ],
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._client.post(self.url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            raise TransientJudgeError(f"judge transport failure: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientJudgeError(
                f"judge endpoint returned {response.status_code}")
        if response.status_code >= 400:
            raise JudgeError(f"judge rejected the request: {response.status_code}")
        try:
            return str(response.json()["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise JudgeError(f"unexpected judge response shape: {exc}") from exc


def judge_binary(
    judge: Judge,
    question: str,
    reference: str,
    prediction: str,
    max_attempts: int = 4,
    base_delay: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> int | None:
    """One strict binary verdict: 1, 0, or None when the judge abstains.

    Transient failures are retried with exponential backoff (base_delay,
    then doubling); a still-failing judge raises JudgeError. Any reply other
    than a bare 0 or 1 is an abstention so that a chatty judge can never be
    mistaken for a grade.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    for attempt in range(max_attempts):
        try:
            raw = judge.ask(question, reference, prediction)
        except TransientJudgeError:
            if attempt + 1 == max_attempts:
                raise JudgeError(
                    f"judge still failing after {max_attempts} attempts")
            sleep(base_delay * (2 ** attempt))
            continue
        verdict = raw.strip()
        if verdict in ("0", "1"):
            return int(verdict)
        return None
    raise JudgeError("unreachable")  # pragma: no cover


@dataclass(frozen=True)
class JudgeFamily:
    family: str
    judged: int
    abstained: int
    missing: int
    accuracy: float | None


@dataclass(frozen=True)
class JudgeReport:
    families: tuple[JudgeFamily, ...]
    overall_accuracy: float | None
    judged: int
    abstained: int
    missing_ids: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "judged": self.judged,
            "abstained": self.abstained,
            "missing": len(self.missing_ids),
            "overall_accuracy": self.overall_accuracy,
            "families": {
                f.family: {"judged": f.judged, "abstained": f.abstained,
                           "missing": f.missing, "accuracy": f.accuracy}
                for f in self.families
            },
        }

    def as_text(self) -> str:
        rows = [("family", "judged", "abstained", "missing", "g-acc")]
        for f in self.families:
            acc = "-" if f.accuracy is None else f"{f.accuracy:.3f}"
            rows.append((f.family, str(f.judged), str(f.abstained),
                         str(f.missing), acc))
        overall = ("-" if self.overall_accuracy is None
                   else f"{self.overall_accuracy:.3f}")
        rows.append(("overall", str(self.judged), str(self.abstained),
                     str(len(self.missing_ids)), overall))
        widths = [max(len(row[col]) for row in rows) for col in range(5)]
        return "\n".join(
            "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
            for row in rows
        )


def judge_predictions(
    manifest: Manifest,
    predictions: Mapping[str, str] | Iterable[Prediction],
    judge: Judge,
    max_attempts: int = 4,
    base_delay: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgeReport:
    """Binary-judge every predicted answer; abstentions dilute nothing."""
    by_id = _prediction_map(predictions)
    known = {entry.pair.qa_id for entry in manifest.entries}
    unknown = sorted(set(by_id) - known)
    if unknown:
        shown = ", ".join(unknown[:5])
        raise PredictionError(f"predictions for unknown question ids: {shown}")
    verdicts: dict[str, list[int]] = {}
    abstained: dict[str, int] = {}
    family_missing: dict[str, int] = {}
    missing: list[str] = []
    judged = abstain_total = 0
    for entry in manifest.entries:
        pair = entry.pair
        if pair.qa_id not in by_id:
            missing.append(pair.qa_id)
            family_missing[pair.family] = family_missing.get(pair.family, 0) + 1
            continue
        verdict = judge_binary(judge, pair.question, pair.answer,
                               by_id[pair.qa_id], max_attempts=max_attempts,
                               base_delay=base_delay, sleep=sleep)
        if verdict is None:
            abstained[pair.family] = abstained.get(pair.family, 0) + 1
            abstain_total += 1
        else:
            verdicts.setdefault(pair.family, []).append(verdict)
            judged += 1
    families = tuple(
        JudgeFamily(
            family=family,
            judged=len(verdicts.get(family, [])),
            abstained=abstained.get(family, 0),
            missing=family_missing.get(family, 0),
            accuracy=(sum(values) / len(values)
                      if (values := verdicts.get(family, [])) else None),
        )
        for family in _family_order(
            set(verdicts) | set(abstained) | set(family_missing))
    )
    graded = [v for values in verdicts.values() for v in values]
    overall = sum(graded) / len(graded) if graded else None
    return JudgeReport(families=families, overall_accuracy=overall,
                       judged=judged, abstained=abstain_total,
                       missing_ids=tuple(missing))
