"""Partial-alignment metric, prediction scoring, and the binary judge."""

import itertools
import json

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sheetgen.errors import JudgeError, MetricError, PredictionError
from sheetgen.evaluate import (
    EvalReport,
    HttpJudge,
    Prediction,
    StubJudge,
    TransientJudgeError,
    evaluate_predictions,
    judge_binary,
    judge_predictions,
    normalize,
    pnls,
    read_predictions,
)
from sheetgen.qa import QAPair, split_manifest


# ---------------------------------------------------------------------------
# Metric oracle


def levenshtein(a, b):
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j - 1] + (ca != cb),
                               previous[j] + 1,
                               current[j - 1] + 1))
        previous = current
    return previous[-1]


def pnls_oracle(reference, prediction):
    gt = reference.strip().lower()
    pred = prediction.strip().lower()
    best = min(
        (levenshtein(gt, pred[s:e]), -(e - s), s)
        for s in range(len(pred) + 1)
        for e in range(s, len(pred) + 1)
    )
    return 1.0 - best[0] / max(len(gt), -best[1])


class TestPNLS:
    @pytest.mark.parametrize("reference,prediction,expected", [
        ("abc", "abc", 1.0),
        ("abc", "xx abc yy", 1.0),
        ("abc", "abd", 2 / 3),
        ("abc", "", 0.0),
        ("a", "b", 0.0),
        ("ab", "aXb", 2 / 3),           # whole window beats the short exact hit
        ("4/4", "The time signature is 4/4.", 1.0),
        ("117 BPM", "117 bpm", 1.0),    # case folded
        ("  abc  ", "abc", 1.0),        # reference stripped before matching
    ])
    def test_fixtures(self, reference, prediction, expected):
        assert pnls(reference, prediction) == pytest.approx(expected)

    def test_empty_reference_rejected(self):
        with pytest.raises(MetricError):
            pnls("", "anything")
        with pytest.raises(MetricError):
            pnls("   ", "anything")

    def test_containment_scores_one(self):
        import random

        rng = random.Random(5)
        for _ in range(200):
            gt = "".join(rng.choice("abcdef 0123") for _ in range(rng.randint(1, 12))).strip()
            if not gt:
                continue
            prefix = "".join(rng.choice("xyz ") for _ in range(rng.randint(0, 8)))
            suffix = "".join(rng.choice("xyz ") for _ in range(rng.randint(0, 8)))
            assert pnls(gt, prefix + gt + suffix) == pytest.approx(1.0)

    def test_single_substitution_costs_one_unit(self):
        gt = "quarter"
        corrupted = "qXarter"
        assert pnls(gt, corrupted) == pytest.approx(1 - 1 / len(gt))

    def test_exhaustive_small_alphabet(self):
        # all strings up to length 3 over {a, b}
        pool = [""]
        for length in range(1, 4):
            pool += ["".join(p) for p in itertools.product("ab", repeat=length)]
        for gt in pool:
            if not gt:
                continue
            for pred in pool:
                assert pnls(gt, pred) == pytest.approx(pnls_oracle(gt, pred)), (gt, pred)

    @settings(max_examples=300, deadline=None)
    @given(st.text(alphabet="abc", min_size=1, max_size=6),
           st.text(alphabet="abc", min_size=0, max_size=10))
    def test_matches_oracle(self, reference, prediction):
        assert pnls(reference, prediction) == pytest.approx(
            pnls_oracle(reference, prediction))

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet="abcxy ", min_size=1, max_size=8),
           st.text(alphabet="abcxy ", min_size=0, max_size=12))
    def test_bounded(self, reference, prediction):
        if not reference.strip():
            return
        score = pnls(reference, prediction)
        assert 0.0 <= score <= 1.0

    def test_symmetric_case_insensitivity(self):
        assert pnls("D Minor Chord", "d minor chord") == 1.0

    def test_normalize(self):
        assert normalize("  Mixed Case \n") == "mixed case"


# ---------------------------------------------------------------------------
# Prediction files and evaluation


def pair(qa_id, family="ocr", answer="42", sheet="s00000-aaaaaaaa"):
    return QAPair(qa_id=qa_id, sheet_id=sheet, image=f"images/{sheet}.png",
                  family=family, template_id="layout.bars.p1",
                  question="How many bars does this piece contain?",
                  answer=answer, answer_format="plain")


def manifest_of(pairs):
    return split_manifest(pairs, ratio=1.0, seed=0)


class TestReadPredictions:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        path.write_text('{"qa_id":"a-q01","answer":"one"}\n'
                        '{"qa_id":"a-q02","answer":"two"}\n')
        assert read_predictions(path) == (
            Prediction("a-q01", "one"), Prediction("a-q02", "two"))

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        path.write_text('{"qa_id":"a-q01","answer":"one"}\n'
                        '{"qa_id":"a-q01","answer":"again"}\n')
        with pytest.raises(PredictionError, match="duplicate"):
            read_predictions(path)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        path.write_text('{"qa_id":"a-q01"}\n')
        with pytest.raises(PredictionError, match="qa_id and answer"):
            read_predictions(path)


class TestEvaluatePredictions:
    def test_perfect_predictions(self):
        pairs = [pair("a-q01", "ocr"), pair("a-q02", "omr", answer="C4 D4")]
        manifest = manifest_of(pairs)
        report = evaluate_predictions(manifest, {p.qa_id: p.answer for p in pairs})
        assert report.overall_mean == pytest.approx(1.0)
        assert report.evaluated == 2
        assert report.missing_ids == ()
        assert {f.family: f.mean_score for f in report.families} == {
            "ocr": pytest.approx(1.0), "omr": pytest.approx(1.0)}

    def test_missing_counted_but_not_averaged(self):
        pairs = [pair("a-q01"), pair("a-q02"), pair("a-q03")]
        manifest = manifest_of(pairs)
        report = evaluate_predictions(manifest, {"a-q01": "42"})
        assert report.evaluated == 1
        assert report.missing_ids == ("a-q02", "a-q03")
        assert report.overall_mean == pytest.approx(1.0)
        family = report.families[0]
        assert family.evaluated == 1 and family.missing == 2

    def test_unknown_id_rejected(self):
        manifest = manifest_of([pair("a-q01")])
        with pytest.raises(PredictionError, match="unknown"):
            evaluate_predictions(manifest, {"a-q99": "x"})

    def test_duplicate_prediction_objects_rejected(self):
        manifest = manifest_of([pair("a-q01")])
        with pytest.raises(PredictionError, match="duplicate"):
            evaluate_predictions(
                manifest, [Prediction("a-q01", "x"), Prediction("a-q01", "y")])

    def test_family_means(self):
        pairs = [pair("a-q01", "ocr", answer="abc"),
                 pair("a-q02", "ocr", answer="abc"),
                 pair("a-q03", "omr", answer="abc")]
        manifest = manifest_of(pairs)
        report = evaluate_predictions(
            manifest, {"a-q01": "abc", "a-q02": "abd", "a-q03": "zzz"})
        by_family = {f.family: f.mean_score for f in report.families}
        assert by_family["ocr"] == pytest.approx((1.0 + 2 / 3) / 2)
        assert by_family["omr"] == pytest.approx(0.0)
        assert report.overall_mean == pytest.approx((1.0 + 2 / 3 + 0.0) / 3)

    def test_no_predictions(self):
        manifest = manifest_of([pair("a-q01")])
        report = evaluate_predictions(manifest, {})
        assert report.overall_mean is None
        assert report.evaluated == 0
        assert report.missing_ids == ("a-q01",)

    def test_families_listed_in_canonical_order(self):
        pairs = [pair("a-q01", "chord"), pair("a-q02", "ocr"),
                 pair("a-q03", "layout"), pair("a-q04", "omr")]
        manifest = manifest_of(pairs)
        report = evaluate_predictions(manifest, {p.qa_id: "42" for p in pairs})
        assert [f.family for f in report.families] == ["ocr", "omr", "layout", "chord"]

    def test_text_report_shape(self):
        pairs = [pair("a-q01", "ocr"), pair("a-q02", "omr")]
        manifest = manifest_of(pairs)
        report = evaluate_predictions(manifest, {"a-q01": "42"})
        text = report.as_text()
        lines = text.splitlines()
        assert lines[0].split() == ["family", "n", "missing", "pnls"]
        assert lines[-1].startswith("overall")
        assert "ocr" in text and "omr" in text

    def test_dict_report_round_trips_through_json(self):
        manifest = manifest_of([pair("a-q01")])
        report = evaluate_predictions(manifest, {"a-q01": "42"})
        payload = json.loads(json.dumps(report.as_dict()))
        assert payload["evaluated"] == 1
        assert payload["scores"]["a-q01"] == 1.0


# ---------------------------------------------------------------------------
# Judge


class TestStubJudge:
    def test_equality_verdicts(self):
        judge = StubJudge()
        assert judge.ask("q", "42 bars", "42 Bars ") == "1"
        assert judge.ask("q", "42", "41") == "0"
        assert len(judge.calls) == 2

    def test_forced_verdict(self):
        judge = StubJudge(verdict="1")
        assert judge.ask("q", "a", "b") == "1"


class TestJudgeBinary:
    def test_parses_strict_verdicts(self):
        assert judge_binary(StubJudge(verdict="1"), "q", "a", "a") == 1
        assert judge_binary(StubJudge(verdict="0"), "q", "a", "b") == 0
        assert judge_binary(StubJudge(verdict=" 1 \n"), "q", "a", "a") == 1

    @pytest.mark.parametrize("reply", ["yes", "01", "1.", "verdict: 1", "", "2"])
    def test_abstains_on_anything_else(self, reply):
        assert judge_binary(StubJudge(verdict=reply), "q", "a", "a") is None

    def test_retries_with_exponential_backoff(self):
        class Flaky:
            def __init__(self):
                self.attempts = 0

            def ask(self, question, reference, prediction):
                self.attempts += 1
                if self.attempts < 3:
                    raise TransientJudgeError("rate limited")
                return "1"

        delays = []
        judge = Flaky()
        verdict = judge_binary(judge, "q", "a", "a", max_attempts=4,
                               base_delay=0.5, sleep=delays.append)
        assert verdict == 1
        assert judge.attempts == 3
        assert delays == [0.5, 1.0]

    def test_gives_up_after_max_attempts(self):
        class Broken:
            def ask(self, question, reference, prediction):
                raise TransientJudgeError("down")

        delays = []
        with pytest.raises(JudgeError, match="3 attempts"):
            judge_binary(Broken(), "q", "a", "a", max_attempts=3,
                         base_delay=0.1, sleep=delays.append)
        assert delays == [0.1, 0.2]

    def test_rejects_zero_attempts(self):
        with pytest.raises(ValueError):
            judge_binary(StubJudge(), "q", "a", "a", max_attempts=0)


def chat_response(content, status=200):
    return httpx.Response(status, json={
        "choices": [{"message": {"content": content}}]})


class TestHttpJudge:
    def make(self, handler, **kwargs):
        return HttpJudge(url="https://judge.example/v1/chat/completions",
                         api_key="k", transport=httpx.MockTransport(handler),
                         **kwargs)

    def test_parses_completion(self):
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            seen["body"] = json.loads(request.content)
            return chat_response("1")

        judge = self.make(handler)
        assert judge.ask("q?", "ref", "pred") == "1"
        assert seen["auth"] == "Bearer k"
        messages = seen["body"]["messages"]
        assert messages[0]["role"] == "system"
        assert "Question: q?" in messages[1]["content"]
        assert "Reference answer: ref" in messages[1]["content"]

    @pytest.mark.parametrize("status", [429, 500, 503])
    def test_transient_statuses(self, status):
        judge = self.make(lambda request: httpx.Response(status))
        with pytest.raises(TransientJudgeError):
            judge.ask("q", "a", "b")

    def test_permanent_client_error(self):
        judge = self.make(lambda request: httpx.Response(403))
        with pytest.raises(JudgeError) as err:
            judge.ask("q", "a", "b")
        assert not isinstance(err.value, TransientJudgeError)

    def test_transport_failure_is_transient(self):
        def handler(request):
            raise httpx.ConnectError("refused")

        judge = self.make(handler)
        with pytest.raises(TransientJudgeError):
            judge.ask("q", "a", "b")

    def test_malformed_body_is_permanent(self):
        judge = self.make(lambda request: httpx.Response(200, json={"oops": 1}))
        with pytest.raises(JudgeError) as err:
            judge.ask("q", "a", "b")
        assert not isinstance(err.value, TransientJudgeError)

    def test_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv("SHEETGEN_JUDGE_URL", raising=False)
        with pytest.raises(JudgeError, match="SHEETGEN_JUDGE_URL"):
            HttpJudge()

    def test_env_configuration(self, monkeypatch):
        monkeypatch.setenv("SHEETGEN_JUDGE_URL", "https://judge.example/x")
        monkeypatch.setenv("SHEETGEN_JUDGE_API_KEY", "envkey")
        monkeypatch.setenv("SHEETGEN_JUDGE_MODEL", "local-model")
        judge = HttpJudge(transport=httpx.MockTransport(lambda r: chat_response("0")))
        assert judge.url == "https://judge.example/x"
        assert judge.api_key == "envkey"
        assert judge.model == "local-model"

    def test_retry_loop_end_to_end(self):
        state = {"n": 0}

        def handler(request):
            state["n"] += 1
            if state["n"] < 3:
                return httpx.Response(429)
            return chat_response("0")

        judge = self.make(handler)
        delays = []
        verdict = judge_binary(judge, "q", "ref", "pred", max_attempts=5,
                               base_delay=0.25, sleep=delays.append)
        assert verdict == 0
        assert state["n"] == 3
        assert delays == [0.25, 0.5]


class TestJudgePredictions:
    def test_aggregates_per_family(self):
        pairs = [pair("a-q01", "ocr", answer="yes"),
                 pair("a-q02", "ocr", answer="yes"),
                 pair("a-q03", "omr", answer="yes")]
        manifest = manifest_of(pairs)
        report = judge_predictions(
            manifest, {"a-q01": "yes", "a-q02": "no", "a-q03": "yes"},
            judge=StubJudge())
        by_family = {f.family: f.accuracy for f in report.families}
        assert by_family["ocr"] == pytest.approx(0.5)
        assert by_family["omr"] == pytest.approx(1.0)
        assert report.overall_accuracy == pytest.approx(2 / 3)
        assert report.judged == 3 and report.abstained == 0

    def test_abstentions_do_not_dilute(self):
        pairs = [pair("a-q01", answer="yes"), pair("a-q02", answer="yes")]
        manifest = manifest_of(pairs)

        class Moody:
            def __init__(self):
                self.n = 0

            def ask(self, question, reference, prediction):
                self.n += 1
                return "1" if self.n == 1 else "maybe"

        report = judge_predictions(manifest, {"a-q01": "yes", "a-q02": "yes"},
                                   judge=Moody())
        assert report.judged == 1
        assert report.abstained == 1
        assert report.overall_accuracy == pytest.approx(1.0)

    def test_missing_tracked(self):
        manifest = manifest_of([pair("a-q01"), pair("a-q02")])
        report = judge_predictions(manifest, {"a-q01": "42"}, judge=StubJudge())
        assert report.missing_ids == ("a-q02",)
        assert report.judged == 1

    def test_text_report(self):
        manifest = manifest_of([pair("a-q01")])
        report = judge_predictions(manifest, {"a-q01": "42"}, judge=StubJudge())
        lines = report.as_text().splitlines()
        assert lines[0].split() == ["family", "judged", "abstained", "missing", "g-acc"]
        assert lines[-1].startswith("overall")
