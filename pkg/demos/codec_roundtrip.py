"""
Two text encodings of a voice: kern+ and JSON
=============================================

The same bar can be asked for as a compact kern+ string or as a JSON
list of pitch/duration objects. Both decode back to the identical note
events; kern+ is always the shorter of the two.
"""

from sheetgen.codec import (
    content_equal,
    decode_json_notes,
    decode_kernplus,
    encode_json_notes,
    encode_kernplus,
)
from sheetgen.errors import ParseError
from sheetgen.sampler import derive_sheet_seed, generate_sheet

doc = generate_sheet(derive_sheet_seed(31, 0))
kind, voice = next(iter(doc.bars[0].voices.items()))
print(f"bar 1, {kind} staff of \"{doc.meta.title}\" "
      f"({doc.meta.time_signature}):")
print()

kern = encode_kernplus(voice)
as_json = encode_json_notes(voice)
print(f"kern+ ({len(kern)} chars):")
print(f"  {kern}")
print(f"json ({len(as_json)} chars):")
print(f"  {as_json}")
print()

# Both strings carry the full voice; ties survive the round trip (a
# leading underscore marks the note that starts a tie).
assert content_equal(decode_kernplus(kern), voice)
assert content_equal(decode_json_notes(as_json), voice)
print("both decode back to the same events")

tied = decode_kernplus("_hG3 sG3 eA3 qB3")
print(f"'_hG3 sG3 eA3 qB3' -> {len(tied)} events, "
      f"tie flags {[ev.tie_to_next for ev in tied]}")
print()

# Malformed text fails loudly with a position, never silently.
for bad in ("qC4 zD4", "_hG3 sA3"):
    try:
        decode_kernplus(bad)
    except ParseError as exc:
        print(f"decode_kernplus({bad!r}) -> ParseError: {exc}")
