"""Score intermediate representation: sheet metadata, bars of timed note
events, whole-document validation, and a versioned text serialization.

The IR is the single source of truth for both engraving and QA ground truth.
``validate`` re-checks every structural invariant and returns violations as
strings instead of raising, so corpus-level soundness sweeps can report all
problems at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .errors import ParseError
from .theory import (
    BEAT_BINS,
    Chord,
    ClefConfig,
    NoteValue,
    Pitch,
    Scale,
    TimeSignature,
    active_clefs,
    parse_note_value,
    parse_pitch,
    parse_scale,
    parse_time_signature,
    scale_notes,
)

IR_VERSION = 1

TEMPO_RANGE = (50, 140)
BAR_COUNT_RANGE = (10, 20)
TITLE_WORD_RANGE = (1, 10)
COMPOSER_WORD_RANGE = (1, 3)
WORD_LENGTH_RANGE = (3, 8)
SPACING_RANGE = (1, 4)


class GroupingMode(Enum):
    BEAT = "beat"
    SEPARATED = "separated"


class NoteSize(Enum):
    REGULAR = "regular"
    SMALL = "small"


def _check_words(text: str, word_range: tuple[int, int], what: str) -> None:
    words = text.split()
    lo, hi = word_range
    if not lo <= len(words) <= hi:
        raise ValueError(f"{what} must have {lo}..{hi} words, got {len(words)}")
    for word in words:
        if not WORD_LENGTH_RANGE[0] <= len(word) <= WORD_LENGTH_RANGE[1]:
            raise ValueError(
                f"{what} word {word!r} outside"
                f" {WORD_LENGTH_RANGE[0]}..{WORD_LENGTH_RANGE[1]} characters"
            )


@dataclass(frozen=True)
class SheetMeta:
    """Everything about a sheet besides its notes: header text, key, meter,
    presentation toggles, and the seed that regenerates the sheet."""

    title: str
    composer: str
    tempo_bpm: int
    time_signature: TimeSignature
    scale: Scale
    clef_config: ClefConfig
    bar_count: int
    repeat_span: tuple[int, int] | None
    show_chord_labels: bool
    show_bar_indices: bool
    spacing_setting: int
    note_size: NoteSize
    seed: int

    def __post_init__(self):
        _check_words(self.title, TITLE_WORD_RANGE, "title")
        _check_words(self.composer, COMPOSER_WORD_RANGE, "composer")
        if not TEMPO_RANGE[0] <= self.tempo_bpm <= TEMPO_RANGE[1]:
            raise ValueError(f"tempo {self.tempo_bpm} outside {TEMPO_RANGE}")
        if not BAR_COUNT_RANGE[0] <= self.bar_count <= BAR_COUNT_RANGE[1]:
            raise ValueError(f"bar count {self.bar_count} outside {BAR_COUNT_RANGE}")
        if self.repeat_span is not None:
            start, end = self.repeat_span
            if not 1 <= start < end <= self.bar_count:
                raise ValueError(f"repeat span {self.repeat_span} invalid for"
                                 f" {self.bar_count} bars")
        if not SPACING_RANGE[0] <= self.spacing_setting <= SPACING_RANGE[1]:
            raise ValueError(f"spacing {self.spacing_setting} outside {SPACING_RANGE}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True, slots=True)
class NoteEvent:
    """One written note: spelled pitch, printed duration, tie/beam markers,
    and its onset inside the bar in 16th bins."""

    pitch: Pitch
    value: NoteValue
    tie_to_next: bool = False
    beam_group: int | None = None
    onset_bin: int = 0

    def __post_init__(self):
        if self.onset_bin < 0:
            raise ValueError(f"onset {self.onset_bin} negative")

    @property
    def offset_bin(self) -> int:
        return self.onset_bin + self.value.bins


@dataclass(frozen=True)
class Bar:
    """One measure: per-clef voices over a shared chord."""

    index: int  # 1-based
    voices: dict[str, tuple[NoteEvent, ...]]
    chord: Chord
    grouping_mode: GroupingMode

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"bar index {self.index} must be 1-based")


@dataclass(frozen=True)
class ScoreDoc:
    meta: SheetMeta
    bars: tuple[Bar, ...] = field(default_factory=tuple)


def _validate_voice(
    problems: list[str],
    where: str,
    events: tuple[NoteEvent, ...],
    meta: SheetMeta,
    clef_kind: str,
) -> None:
    from .theory import CLEFS_BY_KIND

    clef = CLEFS_BY_KIND[clef_kind]
    bins_per_bar = meta.time_signature.bins_per_bar
    diatonic = set(scale_notes(meta.scale))
    if not events:
        problems.append(f"{where}: empty voice")
        return
    expected_onset = 0
    for i, ev in enumerate(events):
        if ev.onset_bin != expected_onset:
            problems.append(
                f"{where} note {i + 1}: onset {ev.onset_bin} != expected {expected_onset}"
            )
        expected_onset = ev.onset_bin + ev.value.bins
        if ev.offset_bin > bins_per_bar:
            problems.append(
                f"{where} note {i + 1}: extends to bin {ev.offset_bin}"
                f" past bar end {bins_per_bar}"
            )
        if ev.pitch.pitch_class not in diatonic:
            problems.append(
                f"{where} note {i + 1}: pitch {ev.pitch} not diatonic in {meta.scale}"
            )
        if not clef.contains(ev.pitch):
            problems.append(
                f"{where} note {i + 1}: pitch {ev.pitch} outside {clef_kind} range"
            )
        if ev.tie_to_next:
            if i + 1 >= len(events):
                problems.append(f"{where} note {i + 1}: tie dangles at end of bar")
            elif events[i + 1].pitch != ev.pitch:
                problems.append(
                    f"{where} note {i + 1}: tie into different pitch"
                    f" {events[i + 1].pitch}"
                )
    if expected_onset != bins_per_bar:
        problems.append(
            f"{where}: durations cover {expected_onset} bins, bar holds {bins_per_bar}"
        )
    # Beam sanity: beamed notes are flagged-value notes that stay in one beat.
    for i, ev in enumerate(events):
        if ev.beam_group is None:
            continue
        if ev.value.base < 8:
            problems.append(
                f"{where} note {i + 1}: beam on unbeamable value {ev.value}"
            )
        if ev.onset_bin // BEAT_BINS != (ev.offset_bin - 1) // BEAT_BINS:
            problems.append(f"{where} note {i + 1}: beamed note crosses a beat")
    groups: dict[int, list[int]] = {}
    for i, ev in enumerate(events):
        if ev.beam_group is not None:
            groups.setdefault(ev.beam_group, []).append(i)
    for group_id, members in groups.items():
        if len(members) < 2:
            problems.append(f"{where}: beam group {group_id} has a single note")
        if members != list(range(members[0], members[0] + len(members))):
            problems.append(f"{where}: beam group {group_id} is not contiguous")
        beats = {events[i].onset_bin // BEAT_BINS for i in members}
        if len(beats) > 1:
            problems.append(f"{where}: beam group {group_id} spans beats {sorted(beats)}")


def validate(doc: ScoreDoc) -> list[str]:
    """Check every structural invariant; return human-readable violations."""
    problems: list[str] = []
    meta = doc.meta

    try:
        # Re-run constructor checks in case fields were mutated after build.
        _check_words(meta.title, TITLE_WORD_RANGE, "title")
        _check_words(meta.composer, COMPOSER_WORD_RANGE, "composer")
    except ValueError as exc:
        problems.append(str(exc))
    if not TEMPO_RANGE[0] <= meta.tempo_bpm <= TEMPO_RANGE[1]:
        problems.append(f"tempo {meta.tempo_bpm} outside {TEMPO_RANGE}")
    if not BAR_COUNT_RANGE[0] <= meta.bar_count <= BAR_COUNT_RANGE[1]:
        problems.append(f"bar count {meta.bar_count} outside {BAR_COUNT_RANGE}")
    if not SPACING_RANGE[0] <= meta.spacing_setting <= SPACING_RANGE[1]:
        problems.append(f"spacing {meta.spacing_setting} outside {SPACING_RANGE}")
    if len(doc.bars) != meta.bar_count:
        problems.append(f"{len(doc.bars)} bars present, metadata says {meta.bar_count}")
    if meta.repeat_span is not None:
        start, end = meta.repeat_span
        if not 1 <= start < end <= meta.bar_count:
            problems.append(f"repeat span {meta.repeat_span} invalid for"
                            f" {meta.bar_count} bars")

    expected_voices = [c.kind for c in active_clefs(meta.clef_config)]
    for position, bar in enumerate(doc.bars, start=1):
        where = f"bar {position}"
        if bar.index != position:
            problems.append(f"{where}: stored index {bar.index}")
        if sorted(bar.voices) != sorted(expected_voices):
            problems.append(
                f"{where}: voices {sorted(bar.voices)} do not match clef config"
                f" {meta.clef_config.value}"
            )
        if bar.chord.scale != meta.scale:
            problems.append(f"{where}: chord built on {bar.chord.scale},"
                            f" sheet is in {meta.scale}")
        if position == 1 and bar.chord.degree != 1:
            problems.append(f"bar 1: chord degree {bar.chord.degree}, expected tonic")
        for clef_kind, events in bar.voices.items():
            if clef_kind not in expected_voices:
                continue
            _validate_voice(problems, f"{where} {clef_kind}", events, meta, clef_kind)
        if bar.grouping_mode is GroupingMode.SEPARATED:
            for clef_kind, events in bar.voices.items():
                if any(ev.beam_group is not None for ev in events):
                    problems.append(f"{where} {clef_kind}: beams in separated mode")
    return problems


# ---------------------------------------------------------------------------
# Serialization


def _meta_to_obj(meta: SheetMeta) -> dict[str, Any]:
    return {
        "title": meta.title,
        "composer": meta.composer,
        "tempo_bpm": meta.tempo_bpm,
        "time_signature": str(meta.time_signature),
        "scale": str(meta.scale),
        "clef_config": meta.clef_config.value,
        "bar_count": meta.bar_count,
        "repeat_span": list(meta.repeat_span) if meta.repeat_span else None,
        "show_chord_labels": meta.show_chord_labels,
        "show_bar_indices": meta.show_bar_indices,
        "spacing_setting": meta.spacing_setting,
        "note_size": meta.note_size.value,
        "seed": meta.seed,
    }


def _event_to_obj(ev: NoteEvent) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "pitch": str(ev.pitch),
        "duration": str(ev.value),
        "onset": ev.onset_bin,
    }
    if ev.tie_to_next:
        obj["tie"] = True
    if ev.beam_group is not None:
        obj["beam"] = ev.beam_group
    return obj


def serialize_ir(doc: ScoreDoc) -> str:
    """One deterministic, newline-free JSON record for the whole sheet."""
    obj = {
        "version": IR_VERSION,
        "meta": _meta_to_obj(doc.meta),
        "bars": [
            {
                "index": bar.index,
                "chord_degree": bar.chord.degree,
                "grouping": bar.grouping_mode.value,
                "voices": {
                    kind: [_event_to_obj(ev) for ev in events]
                    for kind, events in sorted(bar.voices.items())
                },
            }
            for bar in doc.bars
        ],
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _req(obj: Any, key: str, kind: type, path: str) -> Any:
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: expected object, got {type(obj).__name__}")
    if key not in obj:
        raise ParseError(f"{path}: missing field {key!r}")
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise ParseError(f"{path}.{key}: expected integer")
    if not isinstance(value, kind):
        raise ParseError(f"{path}.{key}: expected {kind.__name__}")
    return value


def _meta_from_obj(obj: Any) -> SheetMeta:
    path = "meta"
    repeat = obj.get("repeat_span") if isinstance(obj, dict) else None
    if repeat is not None:
        if (not isinstance(repeat, list) or len(repeat) != 2
                or not all(isinstance(x, int) for x in repeat)):
            raise ParseError(f"{path}.repeat_span: expected [start, end]")
        repeat = (repeat[0], repeat[1])
    try:
        return SheetMeta(
            title=_req(obj, "title", str, path),
            composer=_req(obj, "composer", str, path),
            tempo_bpm=_req(obj, "tempo_bpm", int, path),
            time_signature=parse_time_signature(_req(obj, "time_signature", str, path)),
            scale=parse_scale(_req(obj, "scale", str, path)),
            clef_config=ClefConfig(_req(obj, "clef_config", str, path)),
            bar_count=_req(obj, "bar_count", int, path),
            repeat_span=repeat,
            show_chord_labels=_req(obj, "show_chord_labels", bool, path),
            show_bar_indices=_req(obj, "show_bar_indices", bool, path),
            spacing_setting=_req(obj, "spacing_setting", int, path),
            note_size=NoteSize(_req(obj, "note_size", str, path)),
            seed=_req(obj, "seed", int, path),
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _event_from_obj(obj: Any, path: str) -> NoteEvent:
    tie = obj.get("tie", False) if isinstance(obj, dict) else False
    beam = obj.get("beam") if isinstance(obj, dict) else None
    if not isinstance(tie, bool):
        raise ParseError(f"{path}.tie: expected boolean")
    if beam is not None and not isinstance(beam, int):
        raise ParseError(f"{path}.beam: expected integer")
    try:
        return NoteEvent(
            pitch=parse_pitch(_req(obj, "pitch", str, path)),
            value=parse_note_value(_req(obj, "duration", str, path)),
            tie_to_next=tie,
            beam_group=beam,
            onset_bin=_req(obj, "onset", int, path),
        )
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def deserialize_ir(text: str) -> ScoreDoc:
    """Inverse of :func:`serialize_ir`; raises ParseError with a location."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed IR record: {exc.msg} at char {exc.pos}",
                         position=exc.pos) from exc
    version = _req(obj, "version", int, "record")
    if version != IR_VERSION:
        raise ParseError(f"record: unsupported version {version}")
    meta = _meta_from_obj(_req(obj, "meta", dict, "record"))
    bars_obj = _req(obj, "bars", list, "record")
    bars = []
    for i, bar_obj in enumerate(bars_obj):
        path = f"bars[{i}]"
        degree = _req(bar_obj, "chord_degree", int, path)
        try:
            chord = Chord(meta.scale, degree)
            grouping = GroupingMode(_req(bar_obj, "grouping", str, path))
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        voices_obj = _req(bar_obj, "voices", dict, path)
        voices = {}
        for kind, events_obj in voices_obj.items():
            if kind not in ("treble", "bass"):
                raise ParseError(f"{path}.voices: unknown clef {kind!r}")
            if not isinstance(events_obj, list):
                raise ParseError(f"{path}.voices.{kind}: expected list")
            voices[kind] = tuple(
                _event_from_obj(ev_obj, f"{path}.voices.{kind}[{j}]")
                for j, ev_obj in enumerate(events_obj)
            )
        try:
            bars.append(Bar(
                index=_req(bar_obj, "index", int, path),
                voices=voices,
                chord=chord,
                grouping_mode=grouping,
            ))
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    return ScoreDoc(meta=meta, bars=tuple(bars))
