"""Deterministic music-sheet synthesis with exact symbolic ground truth,
visual QA pair emission, and partial-alignment evaluation."""

__version__ = "0.1.0"

from .theory import (  # noqa: F401
    Accidental,
    ALL_SCALES,
    BASS_CLEF,
    Chord,
    Clef,
    ClefConfig,
    KeySignature,
    Mode,
    NoteValue,
    Pitch,
    PitchClass,
    Quality,
    Scale,
    TimeSignature,
    TREBLE_CLEF,
    active_clefs,
    bins,
    diatonic_triad,
    key_signature,
    representable,
    scale_notes,
)
