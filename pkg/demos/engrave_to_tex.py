"""
From score IR to MusiXTeX source (and, with TeX installed, to a PNG)
====================================================================

The emitter is a pure function from IR to a complete .tex document.
Rendering needs pdftex + musixflx + a PDF rasterizer on PATH; when they
are missing this script still shows the source and stops there.
"""

from pathlib import Path

from sheetgen.engrave import ToolchainError, discover_toolchain, emit_musixtex, \
    render_sheet
from sheetgen.sampler import Overrides, generate_sheet

doc = generate_sheet(7, Overrides.from_mapping(
    {"scale": "G major", "clef_config": "grand", "bar_count": "10"}))
source = emit_musixtex(doc)

lines = source.splitlines()
print(f"emitted {len(lines)} lines of MusiXTeX for "
      f'"{doc.meta.title}" ({doc.meta.bar_count} bars, grand staff)')
print()
print("\n".join(lines[:16]))
print(f"... [{len(lines) - 16} more lines]")
print()

# Emission is deterministic, so diffing two runs of a corpus diffs sources.
assert emit_musixtex(doc) == source

out = Path("demo_sheet")
out.mkdir(exist_ok=True)
(out / "sheet.tex").write_text(source)
print(f"wrote {out / 'sheet.tex'}")

try:
    toolchain = discover_toolchain()
except ToolchainError as exc:
    print(f"not rendering: {exc}")
else:
    result = render_sheet(doc, out / "sheet.png", toolchain=toolchain)
    print(f"rendered {out / 'sheet.png'}: {result.pages} page, "
          f"{result.iterations} fit iteration(s), "
          f"{len(result.doc.bars)} bars kept")
