"""Music-theory core: spelled pitches, the 30-scale key system, diatonic
triads, and a duration algebra over 16th-note bins.

Everything downstream (sampling, engraving, codecs, QA ground truth) is built
on the types here. Pitches are spelled, not enharmonically collapsed: F# major
and Gb major are distinct scales, and the octave digit attaches to the letter
name (B#3 sounds one semitone above B3 even though that crosses into the C4
octave).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from .errors import InvalidScaleError, UnconstructibleDurationError

LETTERS = "CDEFGAB"
_LETTER_SEMITONE = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_LETTER_DIATONIC = {letter: i for i, letter in enumerate(LETTERS)}

SHARP_ORDER = "FCGDAEB"
FLAT_ORDER = "BEADGCF"


class Accidental(Enum):
    FLAT = "b"
    NATURAL = ""
    SHARP = "#"

    @property
    def semitones(self) -> int:
        return {"b": -1, "": 0, "#": 1}[self.value]


@dataclass(frozen=True, slots=True)
class PitchClass:
    """A spelled note name: letter plus at most one accidental."""

    letter: str
    accidental: Accidental = Accidental.NATURAL

    def __post_init__(self):
        if self.letter not in _LETTER_SEMITONE:
            raise ValueError(f"unknown letter {self.letter!r}")
        if not isinstance(self.accidental, Accidental):
            raise ValueError(f"unknown accidental {self.accidental!r}")

    @property
    def semitone(self) -> int:
        return (_LETTER_SEMITONE[self.letter] + self.accidental.semitones) % 12

    def __str__(self) -> str:
        return self.letter + self.accidental.value


_PITCH_CLASS_RE = re.compile(r"^([A-G])(#|b)?$")


def parse_pitch_class(text: str) -> PitchClass:
    m = _PITCH_CLASS_RE.match(text)
    if not m:
        raise ValueError(f"malformed pitch class {text!r}")
    letter, acc = m.groups()
    return PitchClass(letter, Accidental(acc or ""))


def chromatic_number(letter: str, accidental: Accidental, octave: int) -> int:
    """MIDI-style chromatic position with the octave attached to the letter.

    B#3 maps to 60 (*sounds* C4) and Cb4 maps to 59, matching how key
    signatures and staff positions treat spelled notes.
    """
    return 12 * (octave + 1) + _LETTER_SEMITONE[letter] + accidental.semitones


# Supported chromatic span: Ab1 .. F#6 inclusive.
GLOBAL_LOW_MIDI = chromatic_number("A", Accidental.FLAT, 1)
GLOBAL_HIGH_MIDI = chromatic_number("F", Accidental.SHARP, 6)


@dataclass(frozen=True, slots=True)
class Pitch:
    """A spelled pitch in scientific notation, restricted to Ab1..F#6."""

    pitch_class: PitchClass
    octave: int

    def __post_init__(self):
        midi = self.midi
        if not GLOBAL_LOW_MIDI <= midi <= GLOBAL_HIGH_MIDI:
            raise ValueError(
                f"pitch {self.pitch_class}{self.octave} is outside the supported"
                " range Ab1..F#6"
            )

    @property
    def midi(self) -> int:
        return chromatic_number(
            self.pitch_class.letter, self.pitch_class.accidental, self.octave
        )

    @property
    def diatonic(self) -> int:
        """Staff-position index: one step per letter name."""
        return self.octave * 7 + _LETTER_DIATONIC[self.pitch_class.letter]

    def __str__(self) -> str:
        return f"{self.pitch_class}{self.octave}"


_PITCH_RE = re.compile(r"^([A-G])(#|b)?([0-9])$")


def parse_pitch(text: str) -> Pitch:
    m = _PITCH_RE.match(text)
    if not m:
        raise ValueError(f"malformed pitch {text!r}")
    letter, acc, octave = m.groups()
    return Pitch(PitchClass(letter, Accidental(acc or "")), int(octave))


class Mode(Enum):
    MAJOR = "major"
    MINOR = "minor"


# Roots that produce 0..7 sharps/flats without double accidentals, in
# signature order: naturals first, then 1..7 sharps, then 1..7 flats.
_MAJOR_ROOT_NAMES = (
    "C", "G", "D", "A", "E", "B", "F#", "C#",
    "F", "Bb", "Eb", "Ab", "Db", "Gb", "Cb",
)
_MINOR_ROOT_NAMES = (
    "A", "E", "B", "F#", "C#", "G#", "D#", "A#",
    "D", "G", "C", "F", "Bb", "Eb", "Ab",
)
_VALID_ROOTS = {
    Mode.MAJOR: frozenset(_MAJOR_ROOT_NAMES),
    Mode.MINOR: frozenset(_MINOR_ROOT_NAMES),
}


@dataclass(frozen=True, slots=True)
class Scale:
    """One of the 30 supported scales: 15 major and 15 minor roots."""

    root: PitchClass
    mode: Mode

    def __post_init__(self):
        if str(self.root) not in _VALID_ROOTS[self.mode]:
            raise InvalidScaleError(
                f"{self.root} {self.mode.value} is not one of the 30 supported scales"
            )

    def __str__(self) -> str:
        return f"{self.root} {self.mode.value}"


def parse_scale(text: str) -> Scale:
    parts = text.split()
    if len(parts) != 2:
        raise InvalidScaleError(f"malformed scale name {text!r}")
    root_text, mode_text = parts
    try:
        root = parse_pitch_class(root_text)
        mode = Mode(mode_text.lower())
    except ValueError as exc:
        raise InvalidScaleError(f"malformed scale name {text!r}") from exc
    return Scale(root, mode)


ALL_SCALES: tuple[Scale, ...] = tuple(
    [Scale(parse_pitch_class(name), Mode.MAJOR) for name in _MAJOR_ROOT_NAMES]
    + [Scale(parse_pitch_class(name), Mode.MINOR) for name in _MINOR_ROOT_NAMES]
)

_MODE_STEPS = {
    Mode.MAJOR: (2, 2, 1, 2, 2, 2, 1),
    Mode.MINOR: (2, 1, 2, 2, 1, 2, 2),
}

_ACC_BY_SEMITONES = {-1: Accidental.FLAT, 0: Accidental.NATURAL, 1: Accidental.SHARP}


@lru_cache(maxsize=None)
def scale_notes(scale: Scale) -> tuple[PitchClass, ...]:
    """The seven scale degrees, spelled with one letter each and no double
    accidentals."""
    notes = [scale.root]
    current = scale.root
    for step in _MODE_STEPS[scale.mode][:-1]:
        next_letter = LETTERS[(_LETTER_DIATONIC[current.letter] + 1) % 7]
        natural_gap = (
            _LETTER_SEMITONE[next_letter] - _LETTER_SEMITONE[current.letter]
        ) % 12
        acc_value = current.accidental.semitones + step - natural_gap
        if acc_value not in _ACC_BY_SEMITONES:
            raise InvalidScaleError(
                f"{scale} requires a double accidental on {next_letter}"
            )
        current = PitchClass(next_letter, _ACC_BY_SEMITONES[acc_value])
        notes.append(current)
    return tuple(notes)


@dataclass(frozen=True, slots=True)
class KeySignature:
    """Printed signature: up to seven sharps or flats in circle-of-fifths
    order."""

    kind: str  # "sharps" | "flats" | "none"
    count: int
    altered_letters: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in ("sharps", "flats", "none"):
            raise ValueError(f"unknown signature kind {self.kind!r}")
        if not 0 <= self.count <= 7 or len(self.altered_letters) != self.count:
            raise ValueError("signature count and altered letters disagree")
        if self.kind == "none" and self.count != 0:
            raise ValueError("empty signature must have count 0")

    @property
    def signed_count(self) -> int:
        """Positive for sharps, negative for flats, zero for none."""
        return self.count if self.kind == "sharps" else -self.count

    def describe(self) -> str:
        """Human-readable form used as QA ground truth, e.g. '2 sharps (F#, C#)'."""
        if self.count == 0:
            return "no sharps or flats"
        mark = "#" if self.kind == "sharps" else "b"
        noun = self.kind[:-1] if self.count == 1 else self.kind
        names = ", ".join(letter + mark for letter in self.altered_letters)
        return f"{self.count} {noun} ({names})"


def key_signature(scale: Scale) -> KeySignature:
    """Signature implied by a scale's spelling; relative pairs agree."""
    notes = scale_notes(scale)
    sharps = {n.letter for n in notes if n.accidental is Accidental.SHARP}
    flats = {n.letter for n in notes if n.accidental is Accidental.FLAT}
    if sharps and flats:
        raise InvalidScaleError(f"{scale} mixes sharps and flats")
    if sharps:
        letters = tuple(l for l in SHARP_ORDER if l in sharps)
        return KeySignature("sharps", len(letters), letters)
    if flats:
        letters = tuple(l for l in FLAT_ORDER if l in flats)
        return KeySignature("flats", len(letters), letters)
    return KeySignature("none", 0, ())


class Quality(Enum):
    MAJOR = "major"
    MINOR = "minor"
    DIMINISHED = "diminished"


_QUALITY_BY_INTERVALS = {
    (4, 3): Quality.MAJOR,
    (3, 4): Quality.MINOR,
    (3, 3): Quality.DIMINISHED,
}


@dataclass(frozen=True, slots=True)
class Chord:
    """Diatonic triad on a scale degree; tones and quality are derived, not
    stored."""

    scale: Scale
    degree: int

    def __post_init__(self):
        if not 1 <= self.degree <= 7:
            raise ValueError(f"chord degree {self.degree} outside 1..7")

    @property
    def tones(self) -> tuple[PitchClass, PitchClass, PitchClass]:
        notes = scale_notes(self.scale)
        i = self.degree - 1
        return (notes[i], notes[(i + 2) % 7], notes[(i + 4) % 7])

    @property
    def root(self) -> PitchClass:
        return self.tones[0]

    @property
    def quality(self) -> Quality:
        a, b, c = self.tones
        intervals = ((b.semitone - a.semitone) % 12, (c.semitone - b.semitone) % 12)
        try:
            return _QUALITY_BY_INTERVALS[intervals]
        except KeyError:  # unreachable for the 30 supported scales
            raise InvalidScaleError(f"triad on degree {self.degree} of {self.scale}"
                                    f" has non-tertian intervals {intervals}")

    def label(self) -> str:
        """Lead-sheet label as printed above a bar: C, Dm, Bdim, F#m, Bb."""
        suffix = {Quality.MAJOR: "", Quality.MINOR: "m", Quality.DIMINISHED: "dim"}
        return f"{self.root}{suffix[self.quality]}"

    def describe(self) -> str:
        """Long form used as QA ground truth, e.g. 'D minor chord'."""
        return f"{self.root} {self.quality.value} chord"


def diatonic_triad(scale: Scale, degree: int) -> Chord:
    return Chord(scale, degree)


@dataclass(frozen=True, slots=True)
class TimeSignature:
    """Quarter-note meters only: 2/4, 3/4, or 4/4."""

    numerator: int
    denominator: int = 4

    def __post_init__(self):
        if self.numerator not in (2, 3, 4):
            raise ValueError(f"unsupported numerator {self.numerator}")
        if self.denominator != 4:
            raise ValueError(f"unsupported denominator {self.denominator}")

    @property
    def bins_per_bar(self) -> int:
        return self.numerator * 4

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"


def parse_time_signature(text: str) -> TimeSignature:
    m = re.match(r"^(\d+)/(\d+)$", text)
    if not m:
        raise ValueError(f"malformed time signature {text!r}")
    return TimeSignature(int(m.group(1)), int(m.group(2)))


BEAT_BINS = 4  # one quarter-note beat in 16th bins

_VALID_BASES = (1, 2, 4, 8, 16)
# Dot multipliers as integer ratios: 1, 3/2, 7/4.
_DOT_NUMER = {0: 1, 1: 3, 2: 7}
_DOT_DENOM = {0: 1, 1: 2, 2: 4}


@dataclass(frozen=True, slots=True)
class NoteValue:
    """Printed duration: base note (1=whole .. 16=sixteenth) plus 0-2 dots.

    Only combinations landing on an integer number of 16th bins exist; a
    dotted sixteenth (1.5 bins) is rejected at construction.
    """

    base: int
    dots: int = 0

    def __post_init__(self):
        if self.base not in _VALID_BASES:
            raise UnconstructibleDurationError(f"unknown base duration {self.base}")
        if self.dots not in (0, 1, 2):
            raise UnconstructibleDurationError(f"dot count {self.dots} outside 0..2")
        numer = (16 // self.base) * _DOT_NUMER[self.dots]
        if numer % _DOT_DENOM[self.dots] != 0:
            raise UnconstructibleDurationError(
                f"base {self.base} with {self.dots} dot(s) is not a whole number"
                " of 16th bins"
            )

    @property
    def bins(self) -> int:
        return (16 // self.base) * _DOT_NUMER[self.dots] // _DOT_DENOM[self.dots]

    def __str__(self) -> str:
        return f"{self.base}{'.' * self.dots}"


def parse_note_value(text: str) -> NoteValue:
    m = re.match(r"^(\d+)(\.{0,2})$", text)
    if not m:
        raise ValueError(f"malformed duration {text!r}")
    return NoteValue(int(m.group(1)), len(m.group(2)))


def bins(value: NoteValue) -> int:
    """16th-bin count of a constructible duration."""
    return value.bins


def _representable_table() -> dict[int, NoteValue]:
    table: dict[int, NoteValue] = {}
    for base in _VALID_BASES:
        for dots in (0, 1, 2):
            try:
                value = NoteValue(base, dots)
            except UnconstructibleDurationError:
                continue
            if 1 <= value.bins <= 16 and value.bins not in table:
                table[value.bins] = value
    return table

_REPRESENTABLE: dict[int, NoteValue] = _representable_table()

REPRESENTABLE_BINS: frozenset[int] = frozenset(_REPRESENTABLE)


def representable(bin_count: int) -> NoteValue | None:
    """The unique single note value covering ``bin_count`` bins, if any."""
    if not 1 <= bin_count <= 16:
        raise ValueError(f"bin count {bin_count} outside 1..16")
    return _REPRESENTABLE.get(bin_count)


@dataclass(frozen=True, slots=True)
class Clef:
    """A staff clef with its non-overlapping slice of the global pitch range."""

    kind: str  # "treble" | "bass"
    low_midi: int
    high_midi: int

    def contains(self, pitch: Pitch) -> bool:
        return self.low_midi <= pitch.midi <= self.high_midi


TREBLE_CLEF = Clef("treble", chromatic_number("C", Accidental.NATURAL, 4), GLOBAL_HIGH_MIDI)
BASS_CLEF = Clef("bass", GLOBAL_LOW_MIDI, chromatic_number("B", Accidental.NATURAL, 3))

CLEFS_BY_KIND = {"treble": TREBLE_CLEF, "bass": BASS_CLEF}


class ClefConfig(Enum):
    TREBLE = "treble"
    BASS = "bass"
    GRAND = "grand"


def active_clefs(config: ClefConfig) -> tuple[Clef, ...]:
    """Clefs present on a sheet, treble first for grand staff."""
    if config is ClefConfig.TREBLE:
        return (TREBLE_CLEF,)
    if config is ClefConfig.BASS:
        return (BASS_CLEF,)
    return (TREBLE_CLEF, BASS_CLEF)
