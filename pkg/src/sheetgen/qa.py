"""Visual question generation, dataset manifests, splits, and statistics.

Each rendered sheet yields a fixed slate of fourteen questions across four
families:

* ``ocr``    -- read printed text: title and composer, tempo, time
  signature, and (only when chord labels are printed) the chord names.
* ``layout`` -- describe page structure: clef count and type, bar count,
  repeat detection.
* ``omr``    -- read the notation itself: the key signature, plus six
  per-bar transcription questions (two duration-only, two pitch-only,
  two full pitch-and-duration) over randomly chosen bar/clef targets,
  half answered in kern+ tokens and half in compact JSON.
* ``chord``  -- only when chord labels are hidden: infer the chord of a
  randomly chosen bar from its notes.

Every answer is a pure function of the score document and the question's
``template_id``; :func:`regenerate_answer` recomputes it without the stored
answer text, which is how consistency is audited. Paraphrase choice changes
only the question wording, never the answer.

Splits are assigned per sheet, never dividing one sheet's questions:
sheet ids are shuffled by the corpus seed and the first 90% (by default)
become training data. A single-sheet corpus goes entirely to train.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .codec import DURATION_CODES, encode_json_notes, encode_kernplus
from .errors import ParseError
from .sampler import QA_STREAM, stream_rng
from .score import NoteEvent, ScoreDoc
from .theory import active_clefs, key_signature

MANIFEST_VERSION = 1

FAMILIES = ("ocr", "omr", "layout", "chord")
ANSWER_FORMATS = ("plain", "json", "kern+")


# ---------------------------------------------------------------------------
# Ground truth


@dataclass(frozen=True)
class GroundTruth:
    """Everything a question may ask about, extracted once per sheet.

    ``voices`` maps (bar index, clef kind) to that bar's note events;
    ``chord_labels`` hold the short printed form (Dm), ``chord_names`` the
    spoken form used as answers (D minor chord).
    """

    title: str
    composer: str
    tempo_bpm: int
    time_signature: str
    key_signature: str
    clef_kinds: tuple[str, ...]
    bar_count: int
    repeat_span: tuple[int, int] | None
    show_chord_labels: bool
    chord_labels: tuple[str, ...]
    chord_names: tuple[str, ...]
    voices: Mapping[tuple[int, str], tuple[NoteEvent, ...]]


def ground_truth(doc: ScoreDoc) -> GroundTruth:
    meta = doc.meta
    voices = {
        (bar.index, kind): events
        for bar in doc.bars
        for kind, events in bar.voices.items()
    }
    return GroundTruth(
        title=meta.title,
        composer=meta.composer,
        tempo_bpm=meta.tempo_bpm,
        time_signature=str(meta.time_signature),
        key_signature=key_signature(meta.scale).describe(),
        clef_kinds=tuple(c.kind for c in active_clefs(meta.clef_config)),
        bar_count=meta.bar_count,
        repeat_span=meta.repeat_span,
        show_chord_labels=meta.show_chord_labels,
        chord_labels=tuple(bar.chord.label() for bar in doc.bars),
        chord_names=tuple(bar.chord.describe() for bar in doc.bars),
        voices=voices,
    )


# ---------------------------------------------------------------------------
# Question templates

# Paraphrases per task; the sampled index becomes the pN part of the
# template_id, so the wording of a stored question is reproducible.
_TEMPLATES: dict[str, tuple[str, ...]] = {
    "ocr.title": (
        "What are the title of this piece and the composer's name?",
        "Identify and extract the title and the author's name from this music sheet.",
        "Read the header of the sheet: what is the piece called, and who wrote it?",
    ),
    "ocr.tempo": (
        "What is the tempo marking of this piece, in BPM?",
        "Identify and extract the tempo (beats per minute) printed on the sheet.",
        "How many beats per minute does the metronome marking ask for?",
    ),
    "ocr.timesig": (
        "What is the time signature of this piece?",
        "Recognize and return the time signature printed at the start of the sheet.",
        "In which meter is this music written?",
    ),
    "ocr.chordnames": (
        "Extract the chord names printed above the bars, in order.",
        "List every chord label written on this sheet, from the first bar to the last.",
        "Which chord symbols are explicitly labeled on the music sheet?",
    ),
    "layout.clefs": (
        "How many clefs does this sheet use, and which ones?",
        "Identify the number and type of clefs (e.g., treble, bass) in the sheet.",
        "Which clef or clefs is this piece written in?",
    ),
    "layout.bars": (
        "How many bars does this piece contain?",
        "Count the number of bars (measures) in the music sheet.",
        "What is the total number of measures printed on the page?",
    ),
    "layout.repeats": (
        "Does this piece contain a repeated section? If so, which bars does it cover?",
        "Recognize any repeat signs in the structure and report the bars they enclose.",
        "Is some passage of this sheet marked to be played twice?",
    ),
    "omr.keysig": (
        "What is the key signature of this piece?",
        "Recognize the key signature at the start of the staff.",
        "How many sharps or flats are in the key signature, and on which notes?",
    ),
    "omr.durations": (
        "Extract the duration of every note in bar {bar} of the {clef} staff, {fmt}.",
        "What are the note durations (e.g., quarter, eighth, dotted, tied notes) in bar {bar} of the {clef} clef? Answer {fmt}.",
        "Transcribe the rhythm of bar {bar} on the {clef} staff, {fmt}.",
    ),
    "omr.pitches": (
        "Identify the pitch of every note in bar {bar} of the {clef} staff, {fmt}.",
        "What pitches occur, in order, in bar {bar} of the {clef} clef? Answer {fmt}.",
        "List the note names sounding in bar {bar} on the {clef} staff, {fmt}.",
    ),
    "omr.notes": (
        "Extract both pitch and duration for all notes in bar {bar} of the {clef} staff, {fmt}.",
        "Transcribe bar {bar} of the {clef} clef completely, {fmt}.",
        "Return every note of bar {bar} on the {clef} staff together with its duration, {fmt}.",
    ),
    "chord.infer": (
        "No chord labels are printed on this sheet. Based on its notes, which chord does bar {bar} outline?",
        "Infer the chord being played in bar {bar} from the notes alone.",
        "The sheet carries no chord symbols; name the chord implied by bar {bar}.",
    ),
}

# Wording of the answer-format request inside per-bar OMR questions.
_FMT_CLAUSES: dict[tuple[str, str], str] = {
    ("omr.durations", "kernplus"): "as space-separated kern-style duration tokens",
    ("omr.durations", "json"): "as a JSON list of duration strings without indent",
    ("omr.pitches", "kernplus"): "as space-separated note names with octave numbers",
    ("omr.pitches", "json"): "as a JSON list of pitch strings without indent",
    ("omr.notes", "kernplus"): "in kern+ tokens",
    ("omr.notes", "json"):
        "as a JSON string of a list of dictionaries with pitch and duration keys, without indent",
}

# Per-bar OMR slots in generation order: (task, format).
_OMR_BAR_SLOTS = (
    ("omr.durations", "kernplus"),
    ("omr.durations", "json"),
    ("omr.pitches", "kernplus"),
    ("omr.pitches", "json"),
    ("omr.notes", "kernplus"),
    ("omr.notes", "json"),
)

_FORMAT_NAMES = {"kernplus": "kern+", "json": "json"}


@dataclass(frozen=True)
class QAPair:
    qa_id: str
    sheet_id: str
    image: str
    family: str
    template_id: str
    question: str
    answer: str
    answer_format: str


# ---------------------------------------------------------------------------
# Answers


def _tie_prefix(event: NoteEvent) -> str:
    return "_" if event.tie_to_next else ""


def _duration_text(event: NoteEvent) -> str:
    return f"{event.value.base}" + "." * event.value.dots


def _kern_duration(event: NoteEvent) -> str:
    return _tie_prefix(event) + DURATION_CODES[event.value.base] + "." * event.value.dots


def _compact(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _clefs_answer(kinds: Sequence[str]) -> str:
    if len(kinds) == 1:
        return f"1 clef: {kinds[0]}"
    return f"{len(kinds)} clefs: {' and '.join(kinds)}"


def _repeats_answer(span: tuple[int, int] | None) -> str:
    if span is None:
        return "no, there is no repeated section"
    return f"yes, bars {span[0]} to {span[1]} are repeated"


def _voice_for(gt: GroundTruth, bar: int, clef: str) -> tuple[NoteEvent, ...]:
    try:
        return gt.voices[(bar, clef)]
    except KeyError:
        raise ParseError(f"sheet has no bar {bar} on the {clef} staff")


def _bar_answer(gt: GroundTruth, task: str, fmt: str, bar: int, clef: str) -> str:
    voice = _voice_for(gt, bar, clef)
    if task == "omr.durations":
        if fmt == "kernplus":
            return " ".join(_kern_duration(ev) for ev in voice)
        return _compact([_duration_text(ev) for ev in voice])
    if task == "omr.pitches":
        texts = [_tie_prefix(ev) + str(ev.pitch) for ev in voice]
        if fmt == "kernplus":
            return " ".join(texts)
        return _compact(texts)
    if task == "omr.notes":
        if fmt == "kernplus":
            return encode_kernplus(voice)
        return encode_json_notes(voice)
    raise ParseError(f"unknown per-bar task {task!r}")


def _plain_answer(gt: GroundTruth, task: str) -> str:
    if task == "ocr.title":
        return f"{gt.title} by {gt.composer}"
    if task == "ocr.tempo":
        return f"{gt.tempo_bpm} BPM"
    if task == "ocr.timesig":
        return gt.time_signature
    if task == "ocr.chordnames":
        return ", ".join(gt.chord_labels)
    if task == "layout.clefs":
        return _clefs_answer(gt.clef_kinds)
    if task == "layout.bars":
        return str(gt.bar_count)
    if task == "layout.repeats":
        return _repeats_answer(gt.repeat_span)
    if task == "omr.keysig":
        return gt.key_signature
    raise ParseError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# Template ids

# Shapes: family.task.pN | omr.task.fmt.pN.bNN.clef | chord.infer.pN.bNN


def _simple_template_id(task: str, paraphrase: int) -> str:
    return f"{task}.p{paraphrase + 1}"


def _bar_template_id(task: str, fmt: str, paraphrase: int, bar: int, clef: str) -> str:
    return f"{task}.{fmt}.p{paraphrase + 1}.b{bar:02d}.{clef}"


def _chord_template_id(paraphrase: int, bar: int) -> str:
    return f"chord.infer.p{paraphrase + 1}.b{bar:02d}"


def _parse_paraphrase(part: str, template_id: str, task: str) -> int:
    if not part.startswith("p") or not part[1:].isdigit():
        raise ParseError(f"bad paraphrase part {part!r} in {template_id!r}")
    index = int(part[1:]) - 1
    if not 0 <= index < len(_TEMPLATES[task]):
        raise ParseError(f"paraphrase {part} out of range in {template_id!r}")
    return index


def _parse_bar(part: str, template_id: str) -> int:
    if not part.startswith("b") or not part[1:].isdigit():
        raise ParseError(f"bad bar part {part!r} in {template_id!r}")
    return int(part[1:])


def regenerate_answer(gt: GroundTruth, template_id: str) -> str:
    """Recompute the answer a template id denotes, ignoring any stored text.

    Raises ParseError for ids that are malformed or reference a bar or clef
    the sheet does not have.
    """
    parts = template_id.split(".")
    if len(parts) == 3:
        task = f"{parts[0]}.{parts[1]}"
        if task not in _TEMPLATES or "{bar}" in _TEMPLATES[task][0]:
            raise ParseError(f"template {template_id!r} is missing its target")
        _parse_paraphrase(parts[2], template_id, task)
        return _plain_answer(gt, task)
    if len(parts) == 4 and parts[0] == "chord" and parts[1] == "infer":
        _parse_paraphrase(parts[2], template_id, "chord.infer")
        bar = _parse_bar(parts[3], template_id)
        if not 1 <= bar <= gt.bar_count:
            raise ParseError(f"sheet has no bar {bar}")
        return gt.chord_names[bar - 1]
    if len(parts) == 6 and parts[0] == "omr":
        task = f"{parts[0]}.{parts[1]}"
        fmt = parts[2]
        if (task, fmt) not in _FMT_CLAUSES:
            raise ParseError(f"unknown task/format in {template_id!r}")
        _parse_paraphrase(parts[3], template_id, task)
        bar = _parse_bar(parts[4], template_id)
        return _bar_answer(gt, task, fmt, bar, parts[5])
    raise ParseError(f"malformed template id {template_id!r}")


# ---------------------------------------------------------------------------
# Generation


def _question(task: str, paraphrase: int, **fields) -> str:
    return _TEMPLATES[task][paraphrase].format(**fields)


def generate_qa(
    doc: ScoreDoc,
    sheet_id: str,
    image: str,
    rng: np.random.Generator | None = None,
) -> tuple[QAPair, ...]:
    """Fixed slate of fourteen questions for one sheet.

    The rng draws are consumed in a fixed order regardless of presentation
    toggles, so the chosen bars, clefs, and paraphrases depend only on the
    sheet's seed. ``rng`` defaults to the sheet's dedicated QA stream.
    """
    if rng is None:
        rng = stream_rng(doc.meta.seed, QA_STREAM)
    gt = ground_truth(doc)

    def pick(task: str) -> int:
        return int(rng.integers(0, len(_TEMPLATES[task])))

    planned: list[tuple[str, str, str]] = []  # family, template_id, answer_format

    for task in ("ocr.title", "ocr.tempo", "ocr.timesig"):
        planned.append(("ocr", _simple_template_id(task, pick(task)), "plain"))
    # Drawn even when unused so later targets do not shift with the toggle.
    chordnames_p = pick("ocr.chordnames")
    if gt.show_chord_labels:
        planned.append(
            ("ocr", _simple_template_id("ocr.chordnames", chordnames_p), "plain"))
    for task in ("layout.clefs", "layout.bars", "layout.repeats"):
        planned.append(("layout", _simple_template_id(task, pick(task)), "plain"))
    planned.append(("omr", _simple_template_id("omr.keysig", pick("omr.keysig")), "plain"))
    for task, fmt in _OMR_BAR_SLOTS:
        bar = int(rng.integers(1, gt.bar_count + 1))
        clef = gt.clef_kinds[int(rng.integers(0, len(gt.clef_kinds)))]
        template_id = _bar_template_id(task, fmt, pick(task), bar, clef)
        planned.append(("omr", template_id, _FORMAT_NAMES[fmt]))
    chord_bar = int(rng.integers(1, gt.bar_count + 1))
    chord_p = pick("chord.infer")
    if not gt.show_chord_labels:
        planned.append(("chord", _chord_template_id(chord_p, chord_bar), "plain"))

    pairs = []
    for number, (family, template_id, answer_format) in enumerate(planned, start=1):
        pairs.append(QAPair(
            qa_id=f"{sheet_id}-q{number:02d}",
            sheet_id=sheet_id,
            image=image,
            family=family,
            template_id=template_id,
            question=_render_question(template_id),
            answer=regenerate_answer(gt, template_id),
            answer_format=answer_format,
        ))
    return tuple(pairs)


def _render_question(template_id: str) -> str:
    parts = template_id.split(".")
    if len(parts) == 3:
        task = f"{parts[0]}.{parts[1]}"
        return _question(task, _parse_paraphrase(parts[2], template_id, task))
    if len(parts) == 4:
        bar = _parse_bar(parts[3], template_id)
        return _question("chord.infer",
                         _parse_paraphrase(parts[2], template_id, "chord.infer"),
                         bar=bar)
    task, fmt = f"{parts[0]}.{parts[1]}", parts[2]
    return _question(
        task,
        _parse_paraphrase(parts[3], template_id, task),
        bar=_parse_bar(parts[4], template_id),
        clef=parts[5],
        fmt=_FMT_CLAUSES[(task, fmt)],
    )


# ---------------------------------------------------------------------------
# Manifest and splits


@dataclass(frozen=True)
class ManifestEntry:
    pair: QAPair
    split: str  # "train" | "test"


@dataclass(frozen=True)
class Manifest:
    version: int
    entries: tuple[ManifestEntry, ...]

    def pairs(self) -> tuple[QAPair, ...]:
        return tuple(entry.pair for entry in self.entries)


def split_manifest(
    pairs: Sequence[QAPair],
    ratio: float = 0.9,
    seed: int = 0,
) -> Manifest:
    """Assign train/test by sheet: shuffle sheet ids with ``seed``, send the
    first ``round(n * ratio)`` sheets to train. A question never lands in a
    different split than its sheet, and a lone sheet always trains."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"split ratio {ratio} outside (0, 1]")
    sheet_ids: list[str] = []
    for pair in pairs:
        if pair.sheet_id not in sheet_ids:
            sheet_ids.append(pair.sheet_id)
    rng = np.random.default_rng(seed)
    order = [sheet_ids[i] for i in rng.permutation(len(sheet_ids))]
    n_train = round(len(order) * ratio)
    if order and n_train < 1:
        n_train = 1
    train = set(order[:n_train])
    entries = tuple(
        ManifestEntry(pair=pair, split="train" if pair.sheet_id in train else "test")
        for pair in pairs
    )
    return Manifest(version=MANIFEST_VERSION, entries=entries)


def _entry_to_obj(entry: ManifestEntry) -> dict:
    pair = entry.pair
    return {
        "version": MANIFEST_VERSION,
        "id": pair.qa_id,
        "sheet_id": pair.sheet_id,
        "image": pair.image,
        "family": pair.family,
        "template_id": pair.template_id,
        "question": pair.question,
        "answer": pair.answer,
        "answer_format": pair.answer_format,
        "split": entry.split,
    }


def _entry_from_obj(obj: dict, where: str) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: manifest record must be an object")
    if obj.get("version") != MANIFEST_VERSION:
        raise ParseError(f"{where}: unsupported manifest version {obj.get('version')!r}")
    try:
        pair = QAPair(
            qa_id=str(obj["id"]),
            sheet_id=str(obj["sheet_id"]),
            image=str(obj["image"]),
            family=str(obj["family"]),
            template_id=str(obj["template_id"]),
            question=str(obj["question"]),
            answer=str(obj["answer"]),
            answer_format=str(obj["answer_format"]),
        )
        split = str(obj["split"])
    except KeyError as exc:
        raise ParseError(f"{where}: manifest record missing {exc.args[0]!r}") from exc
    if pair.family not in FAMILIES:
        raise ParseError(f"{where}: unknown family {pair.family!r}")
    if pair.answer_format not in ANSWER_FORMATS:
        raise ParseError(f"{where}: unknown answer format {pair.answer_format!r}")
    if split not in ("train", "test"):
        raise ParseError(f"{where}: unknown split {split!r}")
    return ManifestEntry(pair=pair, split=split)


def write_manifest(path: Path, manifest: Manifest) -> None:
    from .corpus import write_jsonl

    write_jsonl(path, (_entry_to_obj(e) for e in manifest.entries))


def read_manifest(path: Path) -> Manifest:
    from .corpus import read_jsonl

    entries = tuple(
        _entry_from_obj(obj, f"{path}:{n}")
        for n, obj in enumerate(read_jsonl(path), start=1)
    )
    return Manifest(version=MANIFEST_VERSION, entries=entries)


# ---------------------------------------------------------------------------
# Statistics


@dataclass(frozen=True)
class Distribution:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float

    @classmethod
    def of(cls, values: Sequence[int]) -> "Distribution":
        data = np.asarray(values, dtype=float)
        q1, median, q3 = np.percentile(data, [25, 50, 75])
        return cls(minimum=float(data.min()), q1=float(q1), median=float(median),
                   q3=float(q3), maximum=float(data.max()), mean=float(data.mean()))

    def as_dict(self) -> dict:
        return {"min": self.minimum, "q1": self.q1, "median": self.median,
                "q3": self.q3, "max": self.maximum, "mean": round(self.mean, 3)}


@dataclass(frozen=True)
class CorpusStats:
    sheet_count: int
    qa_count: int
    notes_per_sheet: Distribution
    bars_per_sheet: Distribution
    scale_counts: dict[str, int]
    clef_counts: dict[str, int]
    family_counts: dict[str, int]
    split_counts: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "sheet_count": self.sheet_count,
            "qa_count": self.qa_count,
            "notes_per_sheet": self.notes_per_sheet.as_dict(),
            "bars_per_sheet": self.bars_per_sheet.as_dict(),
            "scale_counts": dict(sorted(self.scale_counts.items())),
            "clef_counts": dict(sorted(self.clef_counts.items())),
            "family_counts": dict(sorted(self.family_counts.items())),
            "split_counts": dict(sorted(self.split_counts.items())),
        }

    def as_text(self) -> str:
        def dist(d: Distribution) -> str:
            return (f"min {d.minimum:g}  q1 {d.q1:g}  median {d.median:g}"
                    f"  q3 {d.q3:g}  max {d.maximum:g}  mean {d.mean:.2f}")

        def counts(c: dict[str, int]) -> str:
            return ", ".join(f"{k} {v}" for k, v in sorted(c.items()))

        return "\n".join([
            f"sheets          {self.sheet_count}",
            f"qa pairs        {self.qa_count}",
            f"notes per sheet {dist(self.notes_per_sheet)}",
            f"bars per sheet  {dist(self.bars_per_sheet)}",
            f"clefs           {counts(self.clef_counts)}",
            f"families        {counts(self.family_counts)}",
            f"splits          {counts(self.split_counts)}",
            f"scales          {counts(self.scale_counts)}",
        ])


def compute_stats(docs: Sequence[ScoreDoc], manifest: Manifest) -> CorpusStats:
    if not docs:
        raise ValueError("no sheets to summarize")
    note_counts = [
        sum(len(events) for bar in doc.bars for events in bar.voices.values())
        for doc in docs
    ]
    bar_counts = [doc.meta.bar_count for doc in docs]
    scale_counts = Counter(str(doc.meta.scale) for doc in docs)
    clef_counts = Counter(doc.meta.clef_config.value for doc in docs)
    family_counts = Counter(e.pair.family for e in manifest.entries)
    split_counts = Counter(e.split for e in manifest.entries)
    return CorpusStats(
        sheet_count=len(docs),
        qa_count=len(manifest.entries),
        notes_per_sheet=Distribution.of(note_counts),
        bars_per_sheet=Distribution.of(bar_counts),
        scale_counts=dict(scale_counts),
        clef_counts=dict(clef_counts),
        family_counts=dict(family_counts),
        split_counts=dict(split_counts),
    )
