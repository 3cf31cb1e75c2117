"""
Scales, key signatures, chords and printable durations
======================================================

A walk through the music-theory layer: the 30 supported scales, their
key signatures, diatonic triads, the pitch range per clef, and which
16th-bin counts have a single printable note value.
"""

from sheetgen.theory import (
    ALL_SCALES,
    CLEFS_BY_KIND,
    REPRESENTABLE_BINS,
    Chord,
    key_signature,
    representable,
    scale_notes,
)

# Every scale is a (tonic, mode) pair; 15 major plus 15 minor spellings.
print(f"{len(ALL_SCALES)} scales:")
print("  " + ", ".join(str(s) for s in ALL_SCALES[:8]) + ", ...")
print()

# A scale knows its diatonic spelling and its key signature.
for scale in ALL_SCALES[:4]:
    notes = " ".join(str(pc) for pc in scale_notes(scale))
    print(f"{str(scale):16}  {notes:22}  {key_signature(scale).describe()}")
print()

# Triads are built on scale degrees 1..7; the label follows chord-symbol
# convention (plain = major, m = minor, dim = diminished).
scale = ALL_SCALES[0]
print(f"triads of {scale}:")
for degree in range(1, 8):
    chord = Chord(scale, degree)
    print(f"  degree {degree}: {chord.label():6} {chord.describe()}")
print()

# The two clefs partition the global range Ab1..F#6.
for kind, clef in CLEFS_BY_KIND.items():
    print(f"{kind} clef covers midi {clef.low_midi}..{clef.high_midi}")
print()

# Durations are measured in 16th-note bins. Ten of the sixteen possible
# bar-fragment lengths print as a single (possibly dotted) note.
print(f"printable bin counts: {sorted(REPRESENTABLE_BINS)}")
for bin_count in (3, 5, 7, 10):
    value = representable(bin_count)
    text = str(value) if value else "needs a tie"
    print(f"  {bin_count:2} bins -> {text}")
