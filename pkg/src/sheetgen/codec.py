"""Text codecs for note sequences: a compact kern-style token stream and a
JSON object form.

kern+ writes one token per note: optional ``_`` (this note ties into the
next), a duration letter (w h q e s for whole..16th), 0-2 dots, then the
spelled pitch — ``qC4``, ``e.F#5``, ``_hG3``. The JSON form writes an array of
``{"pitch":"C4","duration":"4"}`` objects with dots appended to the duration
and the ``_`` tie marker prefixed to the pitch of the tie-initiating note.
Decoding rebuilds events with onsets accumulated from zero; beam groups are
presentation data and are not carried by either codec.
"""

from __future__ import annotations

import json
import re
from typing import Iterable, Sequence

from .errors import ParseError
from .score import NoteEvent
from .theory import NoteValue, parse_pitch

DURATION_CODES = {1: "w", 2: "h", 4: "q", 8: "e", 16: "s"}
BASES_BY_CODE = {code: base for base, code in DURATION_CODES.items()}

_KERN_TOKEN_RE = re.compile(r"^(_?)([whqes])(\.{0,2})([A-G](?:#|b)?[0-9])$")
_JSON_DURATION_RE = re.compile(r"^(\d+)(\.{0,2})$")


def duration_token(value: NoteValue, tie_to_next: bool = False) -> str:
    """kern-style duration part: optional tie marker, letter code, dots."""
    return ("_" if tie_to_next else "") + DURATION_CODES[value.base] + "." * value.dots


def encode_kernplus(notes: Sequence[NoteEvent]) -> str:
    """Space-separated kern+ tokens; ties are rendered on the first note of a
    tied pair."""
    return " ".join(
        duration_token(ev.value, ev.tie_to_next) + str(ev.pitch) for ev in notes
    )


def _finish_sequence(parsed: list) -> tuple[NoteEvent, ...]:
    """Build events from (pitch, value, tie) triples, accumulating onsets and
    enforcing tie structure."""
    events: list[NoteEvent] = []
    onset = 0
    for pitch, value, tie in parsed:
        events.append(NoteEvent(pitch=pitch, value=value, tie_to_next=tie,
                                beam_group=None, onset_bin=onset))
        onset += value.bins
    for i, ev in enumerate(events):
        if not ev.tie_to_next:
            continue
        if i + 1 >= len(events):
            raise ParseError(f"note {i + 1}: tie dangles at end of sequence",
                             position=i)
        if events[i + 1].pitch != ev.pitch:
            raise ParseError(
                f"note {i + 1}: tie into a different pitch"
                f" ({ev.pitch} -> {events[i + 1].pitch})",
                position=i,
            )
    return tuple(events)


def decode_kernplus(text: str) -> tuple[NoteEvent, ...]:
    """Inverse of :func:`encode_kernplus`; rejects malformed tokens with their
    position."""
    parsed = []
    for i, token in enumerate(text.split()):
        m = _KERN_TOKEN_RE.match(token)
        if not m:
            raise ParseError(f"token {i + 1}: malformed kern+ token {token!r}",
                             position=i)
        tie_mark, code, dots, pitch_text = m.groups()
        try:
            value = NoteValue(BASES_BY_CODE[code], len(dots))
            pitch = parse_pitch(pitch_text)
        except ValueError as exc:
            raise ParseError(f"token {i + 1}: {exc}", position=i) from exc
        parsed.append((pitch, value, tie_mark == "_"))
    return _finish_sequence(parsed)


def encode_json_notes(notes: Sequence[NoteEvent]) -> str:
    """Compact JSON array of pitch/duration objects, no whitespace."""
    objects = [
        {
            "pitch": ("_" if ev.tie_to_next else "") + str(ev.pitch),
            "duration": str(ev.value.base) + "." * ev.value.dots,
        }
        for ev in notes
    ]
    return json.dumps(objects, separators=(",", ":"))


def decode_json_notes(text: str) -> tuple[NoteEvent, ...]:
    """Inverse of :func:`encode_json_notes`."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg} at char {exc.pos}",
                         position=exc.pos) from exc
    if not isinstance(data, list):
        raise ParseError("expected a JSON array of note objects")
    parsed = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict) or set(obj) != {"pitch", "duration"}:
            raise ParseError(
                f"note {i + 1}: expected an object with pitch and duration",
                position=i,
            )
        pitch_text = obj["pitch"]
        duration_text = obj["duration"]
        if not isinstance(pitch_text, str) or not isinstance(duration_text, str):
            raise ParseError(f"note {i + 1}: pitch and duration must be strings",
                             position=i)
        tie = pitch_text.startswith("_")
        if tie:
            pitch_text = pitch_text[1:]
        m = _JSON_DURATION_RE.match(duration_text)
        if not m:
            raise ParseError(f"note {i + 1}: malformed duration {duration_text!r}",
                             position=i)
        try:
            value = NoteValue(int(m.group(1)), len(m.group(2)))
            pitch = parse_pitch(pitch_text)
        except ValueError as exc:
            raise ParseError(f"note {i + 1}: {exc}", position=i) from exc
        parsed.append((pitch, value, tie))
    return _finish_sequence(parsed)


def content_tuple(ev: NoteEvent) -> tuple:
    """Notation content of an event: everything except beam grouping."""
    return (str(ev.pitch), ev.value.base, ev.value.dots, ev.tie_to_next,
            ev.onset_bin)


def content_equal(a: Iterable[NoteEvent], b: Iterable[NoteEvent]) -> bool:
    """True when two sequences agree on pitches, durations, ties, and onsets;
    beam groups are ignored."""
    return [content_tuple(ev) for ev in a] == [content_tuple(ev) for ev in b]
