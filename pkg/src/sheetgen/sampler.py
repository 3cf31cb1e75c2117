"""Seeded sampling of sheet metadata and note content.

Every random decision flows through a numpy Generator derived from
(corpus seed, sheet index) via SeedSequence spawn keys, so corpora are
reproducible bit-for-bit and individual sheets can be regenerated from the
seed stored in their metadata. Rhythm is sampled in 16th-note bins: a bar's
duration total is partitioned uniformly over all compositions, and segments
that no single printed note can express become runs of tied notes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import OverrideError, PartitionError
from .score import (
    BAR_COUNT_RANGE,
    Bar,
    GroupingMode,
    NoteEvent,
    NoteSize,
    ScoreDoc,
    SheetMeta,
    SPACING_RANGE,
    TEMPO_RANGE,
)
from .theory import (
    BEAT_BINS,
    Chord,
    Clef,
    ClefConfig,
    NoteValue,
    Pitch,
    Scale,
    TimeSignature,
    ALL_SCALES,
    active_clefs,
    chromatic_number,
    parse_scale,
    parse_time_signature,
    representable,
)

__all__ = [
    "GenConfig",
    "META_STREAM",
    "QA_STREAM",
    "SCORE_STREAM",
    "Overrides",
    "SheetMeta",
    "apply_grouping",
    "derive_sheet_seed",
    "generate_score",
    "generate_sheet",
    "sample_bar_chord",
    "sample_bar_pitches",
    "sample_bar_rhythm",
    "sample_note_count",
    "sample_sheet_meta",
    "split_duration",
    "stream_rng",
]

META_STREAM = 0
SCORE_STREAM = 1
QA_STREAM = 2


def derive_sheet_seed(corpus_seed: int, index: int) -> int:
    """Stable per-sheet seed from the corpus seed and sheet position."""
    seq = np.random.SeedSequence(corpus_seed, spawn_key=(0, index))
    return int(seq.generate_state(1, np.uint64)[0])


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent substream (metadata / score / QA) of one sheet's seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"


def _sample_word(rng: np.random.Generator) -> str:
    """A pronounceable 3-8 character word, capitalized."""
    length = int(rng.integers(3, 9))
    consonant_next = bool(rng.integers(0, 2))
    chars = []
    while len(chars) < length:
        pool = _CONSONANTS if consonant_next else _VOWELS
        chars.append(pool[int(rng.integers(0, len(pool)))])
        consonant_next = not consonant_next
    return "".join(chars).capitalize()


def _sample_phrase(rng: np.random.Generator, low: int, high: int) -> str:
    count = int(rng.integers(low, high + 1))
    return " ".join(_sample_word(rng) for _ in range(count))


_OVERRIDE_KEYS = ("scale", "clef_config", "time_signature", "bar_count",
                  "spacing", "note_size")


@dataclass(frozen=True)
class Overrides:
    """Optional pins for sampled fields; pinned values skip their draw."""

    scale: Scale | None = None
    clef_config: ClefConfig | None = None
    time_signature: TimeSignature | None = None
    bar_count: int | None = None
    spacing: int | None = None
    note_size: NoteSize | None = None

    def __post_init__(self):
        if self.bar_count is not None and not (
                BAR_COUNT_RANGE[0] <= self.bar_count <= BAR_COUNT_RANGE[1]):
            raise OverrideError(
                f"bar_count override {self.bar_count} outside"
                f" {BAR_COUNT_RANGE[0]}..{BAR_COUNT_RANGE[1]}"
            )
        if self.spacing is not None and not (
                SPACING_RANGE[0] <= self.spacing <= SPACING_RANGE[1]):
            raise OverrideError(
                f"spacing override {self.spacing} outside"
                f" {SPACING_RANGE[0]}..{SPACING_RANGE[1]}"
            )

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "Overrides":
        unknown = set(mapping) - set(_OVERRIDE_KEYS)
        if unknown:
            raise OverrideError(f"unknown override keys: {sorted(unknown)}")
        kwargs = {}
        try:
            if "scale" in mapping:
                kwargs["scale"] = parse_scale(mapping["scale"])
            if "clef_config" in mapping:
                kwargs["clef_config"] = ClefConfig(mapping["clef_config"])
            if "time_signature" in mapping:
                kwargs["time_signature"] = parse_time_signature(
                    mapping["time_signature"])
            if "bar_count" in mapping:
                kwargs["bar_count"] = int(mapping["bar_count"])
            if "spacing" in mapping:
                kwargs["spacing"] = int(mapping["spacing"])
            if "note_size" in mapping:
                kwargs["note_size"] = NoteSize(mapping["note_size"])
        except OverrideError:
            raise
        except ValueError as exc:
            raise OverrideError(str(exc)) from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "Overrides":
        """Parse KEY=VALUE lines; blank lines and '#' comments are skipped."""
        mapping: dict[str, str] = {}
        with open(path, encoding="utf-8") as handle:
            for line_no, raw in enumerate(handle, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise OverrideError(f"{path}:{line_no}: expected KEY=VALUE")
                key, _, value = line.partition("=")
                mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)

    def to_mapping(self) -> dict[str, str]:
        out = {}
        if self.scale is not None:
            out["scale"] = str(self.scale)
        if self.clef_config is not None:
            out["clef_config"] = self.clef_config.value
        if self.time_signature is not None:
            out["time_signature"] = str(self.time_signature)
        if self.bar_count is not None:
            out["bar_count"] = str(self.bar_count)
        if self.spacing is not None:
            out["spacing"] = str(self.spacing)
        if self.note_size is not None:
            out["note_size"] = self.note_size.value
        return out


@dataclass(frozen=True)
class GenConfig:
    """Corpus-level generation request."""

    seed: int
    sheet_count: int
    overrides: Overrides | None = None

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise OverrideError("seed must fit in 64 bits")
        if self.sheet_count < 1:
            raise OverrideError("sheet_count must be positive")


def sample_sheet_meta(
    rng: np.random.Generator,
    overrides: Overrides | None = None,
    seed: int = 0,
) -> SheetMeta:
    """Draw one sheet's metadata; overridden fields consume no draws."""
    ov = overrides or Overrides()
    title = _sample_phrase(rng, 1, 10)
    composer = _sample_phrase(rng, 1, 3)
    tempo = int(rng.integers(TEMPO_RANGE[0], TEMPO_RANGE[1] + 1))
    if ov.time_signature is not None:
        time_signature = ov.time_signature
    else:
        time_signature = TimeSignature(int(rng.choice((2, 3, 4))))
    if ov.scale is not None:
        scale = ov.scale
    else:
        scale = ALL_SCALES[int(rng.integers(0, len(ALL_SCALES)))]
    if ov.clef_config is not None:
        clef_config = ov.clef_config
    else:
        clef_config = (ClefConfig.TREBLE, ClefConfig.BASS, ClefConfig.GRAND)[
            int(rng.integers(0, 3))
        ]
    if ov.bar_count is not None:
        bar_count = ov.bar_count
    else:
        bar_count = int(rng.integers(BAR_COUNT_RANGE[0], BAR_COUNT_RANGE[1] + 1))
    repeat_span = None
    if bool(rng.integers(0, 2)):
        picks = rng.choice(bar_count, size=2, replace=False)
        low, high = sorted(int(x) + 1 for x in picks)
        repeat_span = (low, high)
    show_chord_labels = bool(rng.integers(0, 2))
    show_bar_indices = bool(rng.integers(0, 2))
    if ov.spacing is not None:
        spacing = ov.spacing
    else:
        spacing = int(rng.integers(SPACING_RANGE[0], SPACING_RANGE[1] + 1))
    if ov.note_size is not None:
        note_size = ov.note_size
    else:
        note_size = (NoteSize.REGULAR, NoteSize.SMALL)[int(rng.integers(0, 2))]
    return SheetMeta(
        title=title,
        composer=composer,
        tempo_bpm=tempo,
        time_signature=time_signature,
        scale=scale,
        clef_config=clef_config,
        bar_count=bar_count,
        repeat_span=repeat_span,
        show_chord_labels=show_chord_labels,
        show_bar_indices=show_bar_indices,
        spacing_setting=spacing,
        note_size=note_size,
        seed=seed,
    )


def sample_note_count(rng: np.random.Generator, ts: TimeSignature) -> int:
    """Uniform 1 .. 3×beats notes for one bar of one voice."""
    return int(rng.integers(1, 3 * ts.numerator + 1))


def sample_bar_rhythm(
    rng: np.random.Generator, ts: TimeSignature, n: int
) -> tuple[int, ...]:
    """Uniformly random composition of the bar's bins into n positive parts.

    Equivalent to choosing n-1 distinct cut points among the bar's internal
    bin boundaries, so every composition is equally likely.
    """
    total = ts.bins_per_bar
    if not 1 <= n <= total:
        raise PartitionError(f"cannot split {total} bins into {n} notes")
    if n == 1:
        return (total,)
    cuts = np.sort(rng.choice(total - 1, size=n - 1, replace=False)) + 1
    edges = [0, *[int(c) for c in cuts], total]
    return tuple(edges[i + 1] - edges[i] for i in range(n))


def split_duration(bin_count: int) -> tuple[tuple[NoteValue, bool], ...]:
    """Express a bin count as printed notes, greedily largest-first.

    Returns (value, tie_to_next) pairs; every piece except the last carries a
    tie. A representable count comes back as a single untied note.
    """
    if bin_count < 1:
        raise PartitionError(f"cannot express {bin_count} bins")
    pieces: list[NoteValue] = []
    remaining = bin_count
    while remaining > 0:
        direct = representable(min(remaining, 16))
        if direct is None:
            candidates = [b for b in range(1, min(remaining, 16) + 1)
                          if representable(b) is not None]
            direct = representable(max(candidates))
        pieces.append(direct)
        remaining -= direct.bins
    return tuple((value, i < len(pieces) - 1) for i, value in enumerate(pieces))


def _split_at_beats(event: NoteEvent, ts: TimeSignature) -> list[NoteEvent]:
    """Split one note at every beat boundary strictly inside it, tying the
    pieces together."""
    start, end = event.onset_bin, event.offset_bin
    first_boundary = (start // BEAT_BINS + 1) * BEAT_BINS
    boundaries = [b for b in range(first_boundary, end, BEAT_BINS)]
    if not boundaries:
        return [event]
    edges = [start, *boundaries, end]
    out: list[NoteEvent] = []
    for i in range(len(edges) - 1):
        piece_bins = edges[i + 1] - edges[i]
        onset = edges[i]
        subpieces = split_duration(piece_bins)
        for j, (value, tie) in enumerate(subpieces):
            last_piece = i == len(edges) - 2 and j == len(subpieces) - 1
            out.append(NoteEvent(
                pitch=event.pitch,
                value=value,
                tie_to_next=event.tie_to_next if last_piece else True,
                beam_group=None,
                onset_bin=onset,
            ))
            onset += value.bins
    return out


def _assign_beams(events: list[NoteEvent]) -> tuple[NoteEvent, ...]:
    """Beam maximal runs of 2+ consecutive same-base flagged notes within a
    beat."""
    runs: list[list[int]] = []
    current: list[int] = []

    def flush():
        nonlocal current
        if len(current) >= 2:
            runs.append(current)
        current = []

    previous_key = None
    for i, ev in enumerate(events):
        beamable = ev.value.base >= 8
        in_one_beat = ev.onset_bin // BEAT_BINS == (ev.offset_bin - 1) // BEAT_BINS
        key = (ev.onset_bin // BEAT_BINS, ev.value.base) if beamable and in_one_beat else None
        if key is None or key != previous_key:
            flush()
        if key is not None:
            current.append(i)
        previous_key = key
    flush()

    group_of: dict[int, int] = {}
    for group_id, members in enumerate(runs):
        for i in members:
            group_of[i] = group_id
    return tuple(
        NoteEvent(ev.pitch, ev.value, ev.tie_to_next, group_of.get(i), ev.onset_bin)
        for i, ev in enumerate(events)
    )


def apply_grouping(
    events: Iterable[NoteEvent],
    mode: GroupingMode,
    ts: TimeSignature,
) -> tuple[NoteEvent, ...]:
    """Apply the bar's notation style.

    Separated mode returns the input unchanged. Beat-grouped mode splits every
    note that crosses a beat boundary into tied within-beat pieces, then beams
    flagged notes that share a beat.
    """
    events = tuple(events)
    total = sum(ev.value.bins for ev in events)
    if total != ts.bins_per_bar:
        raise PartitionError(
            f"bar carries {total} bins, meter {ts} holds {ts.bins_per_bar}"
        )
    if mode is GroupingMode.SEPARATED:
        return events
    split: list[NoteEvent] = []
    for ev in events:
        split.extend(_split_at_beats(ev, ts))
    return _assign_beams(split)


def sample_bar_chord(
    rng: np.random.Generator, scale: Scale, bar_index: int
) -> Chord:
    """Tonic triad in bar 1, uniform over the seven degrees afterwards."""
    if bar_index < 1:
        raise ValueError(f"bar index {bar_index} must be 1-based")
    if bar_index == 1:
        return Chord(scale, 1)
    return Chord(scale, int(rng.integers(1, 8)))


def chord_tone_candidates(chord: Chord, clef: Clef) -> tuple[Pitch, ...]:
    """Every octave realization of the chord's tones inside the clef range,
    keeping the spelled octave attached to the letter name."""
    candidates = []
    for tone in chord.tones:
        for octave in range(1, 7):
            midi = chromatic_number(tone.letter, tone.accidental, octave)
            if clef.low_midi <= midi <= clef.high_midi:
                candidates.append(Pitch(tone, octave))
    candidates.sort(key=lambda p: (p.midi, p.pitch_class.letter))
    return tuple(candidates)


def sample_bar_pitches(
    rng: np.random.Generator, chord: Chord, clef: Clef, n: int
) -> tuple[Pitch, ...]:
    """n independent uniform draws (with replacement) from the chord's
    realizations in the clef range."""
    candidates = chord_tone_candidates(chord, clef)
    if not candidates:
        raise PartitionError(f"no realization of {chord.describe()} in"
                             f" {clef.kind} range")
    picks = rng.integers(0, len(candidates), size=n)
    return tuple(candidates[int(i)] for i in picks)


def generate_score(meta: SheetMeta) -> ScoreDoc:
    """Deterministically expand sheet metadata into a full score document."""
    rng = stream_rng(meta.seed, SCORE_STREAM)
    ts = meta.time_signature
    clefs = active_clefs(meta.clef_config)
    bars = []
    for bar_index in range(1, meta.bar_count + 1):
        chord = sample_bar_chord(rng, meta.scale, bar_index)
        mode = (GroupingMode.BEAT, GroupingMode.SEPARATED)[int(rng.integers(0, 2))]
        voices: dict[str, tuple[NoteEvent, ...]] = {}
        for clef in clefs:
            n = sample_note_count(rng, ts)
            segments = sample_bar_rhythm(rng, ts, n)
            pitches = sample_bar_pitches(rng, chord, clef, n)
            events: list[NoteEvent] = []
            onset = 0
            for segment_bins, pitch in zip(segments, pitches):
                for value, tie in split_duration(segment_bins):
                    events.append(NoteEvent(
                        pitch=pitch,
                        value=value,
                        tie_to_next=tie,
                        beam_group=None,
                        onset_bin=onset,
                    ))
                    onset += value.bins
            voices[clef.kind] = apply_grouping(events, mode, ts)
        bars.append(Bar(index=bar_index, voices=voices, chord=chord,
                        grouping_mode=mode))
    return ScoreDoc(meta=meta, bars=tuple(bars))


def generate_sheet(seed: int, overrides: Overrides | None = None) -> ScoreDoc:
    """Full per-sheet pipeline: metadata draw, then score expansion."""
    rng = stream_rng(seed, META_STREAM)
    meta = sample_sheet_meta(rng, overrides, seed=seed)
    return generate_score(meta)
