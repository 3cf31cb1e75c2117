"""MusiXTeX emission and the PDF/PNG render pipeline.

A score document becomes a standalone MusiXTeX source file, compiled by the
classic three-pass cycle (tex, musixflx, tex again) and rasterized to a single
PNG page. Sheets that overflow one page are shrunk deterministically: drop the
final bar down to a floor of ten, then tighten the spacing setting, and give
up with :class:`~sheetgen.errors.FitError` if the floor still overflows.

Pitches are written with MusiXTeX's absolute letters, where ``A``..``N`` cover
A1..G3 and ``a``..``z`` cover A3..E7; the supported range Ab1..F#6 sits fully
inside that window. Every pitch in a sheet is diatonic under its key
signature, so no accidental glyphs are ever emitted.

External programs are found on PATH or through the SHEETGEN_TEX,
SHEETGEN_MUSIXFLX, and SHEETGEN_RASTERIZER environment variables.
"""

from __future__ import annotations

import dataclasses
import os
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .errors import (
    CompileError,
    EmitError,
    FitError,
    RasterizeError,
    ToolchainError,
)
from .score import NoteEvent, NoteSize, ScoreDoc
from .theory import ClefConfig, Pitch, active_clefs, key_signature

__all__ = [
    "FitResult",
    "Toolchain",
    "compile_pdf",
    "count_pdf_pages",
    "discover_toolchain",
    "emit_musixtex",
    "fit_single_page",
    "pitch_code",
    "rasterize",
    "render_sheet",
]

BAR_FLOOR = 10
MAX_FIT_ITERATIONS = 16

_CODE_LETTERS = "ABCDEFGHIJKLMN" + "abcdefghijklmnopqrstuvwxyz"
_CODE_BASE_DIATONIC = 12  # 'A' encodes A1

# middle staff line, above which stems point down: B4 (treble), D3 (bass)
_MIDDLE_LINE = {"treble": 34, "bass": 22}

# zero-width text anchors above each staff kind
_TEMPO_ANCHOR = {"treble": "v", "bass": "h"}
_LABEL_ANCHOR = {"treble": "r", "bass": "e"}

_UNBEAMED = {
    (1, True): "\\wh", (1, False): "\\wh",
    (2, True): "\\hu", (2, False): "\\hl",
    (4, True): "\\qu", (4, False): "\\ql",
    (8, True): "\\cu", (8, False): "\\cl",
    (16, True): "\\ccu", (16, False): "\\ccl",
}


def pitch_code(pitch: Pitch) -> str:
    """Absolute pitch code: a letter where one exists, otherwise the
    equivalent signed number on the same scale (a = 0 = A3). Within the
    supported range only G#1, one staff step below the letter floor of A1,
    needs the numeric form."""
    index = pitch.diatonic - _CODE_BASE_DIATONIC
    if 0 <= index < len(_CODE_LETTERS):
        return _CODE_LETTERS[index]
    return str(pitch.diatonic - 26)


def _tex_escape(text: str) -> str:
    return text.replace("#", "\\#")


def _spacing_command(min_gap_bins: int) -> str:
    """Pick the notes-group variant from the tightest slice gap in a bar."""
    for threshold, command in ((16, "\\NOTEs"), (8, "\\NOTes"),
                               (4, "\\NOtes"), (2, "\\Notes")):
        if min_gap_bins >= threshold:
            return command
    return "\\notes"


def _beam_runs(voice: Sequence[NoteEvent]) -> dict[int, tuple[int, int]]:
    """Map beam group id to (first index, last index) within the voice."""
    spans: dict[int, tuple[int, int]] = {}
    for i, ev in enumerate(voice):
        if ev.beam_group is None:
            continue
        if ev.beam_group in spans:
            first, _ = spans[ev.beam_group]
            spans[ev.beam_group] = (first, i)
        else:
            spans[ev.beam_group] = (i, i)
    return spans


class _TieSlots:
    """Alternating tie numbers per staff so a tie ending and a tie starting on
    the same note never share an id; the bass staff owns 0 and 1, the treble
    staff 2 and 3."""

    def __init__(self, base: int):
        self._base = base
        self._next = 0
        self._open: int | None = None

    def start(self) -> int:
        slot = self._base + self._next
        self._next = 1 - self._next
        self._open = slot
        return slot

    def finish(self) -> int:
        if self._open is None:
            raise EmitError("tie ends with no tie open")
        slot, self._open = self._open, None
        return slot


def _voice_tokens(
    voice: Sequence[NoteEvent],
    clef_kind: str,
    union_onsets: Sequence[int],
    beam_number: int,
    tie_base: int,
    extra_first_slice: str = "",
) -> str:
    """Token stream for one staff across one bar, padded with spacers so both
    staves advance in lockstep over the union of onsets."""
    by_onset = {ev.onset_bin: (i, ev) for i, ev in enumerate(voice)}
    spans = _beam_runs(voice)
    beam_dir_up: dict[int, bool] = {}
    beam_ref: dict[int, str] = {}
    for group, (first, last) in spans.items():
        run = voice[first:last + 1]
        mean = sum(ev.pitch.diatonic for ev in run) / len(run)
        up = mean < _MIDDLE_LINE[clef_kind]
        beam_dir_up[group] = up
        extreme = max(run, key=lambda ev: ev.pitch.diatonic) if up else \
            min(run, key=lambda ev: ev.pitch.diatonic)
        beam_ref[group] = pitch_code(extreme.pitch)

    ties = _TieSlots(tie_base)
    tie_ends = {i + 1 for i, ev in enumerate(voice) if ev.tie_to_next}

    chunks = []
    for slice_index, onset in enumerate(union_onsets):
        atoms = extra_first_slice if slice_index == 0 else ""
        if onset not in by_onset:
            chunks.append(atoms + "\\sk")
            continue
        index, ev = by_onset[onset]
        code = pitch_code(ev.pitch)
        group = ev.beam_group
        if group is not None:
            up = beam_dir_up[group]
            first, last = spans[group]
            if index == first:
                opener = "\\ib" + ("b" if ev.value.base == 16 else "") + \
                    ("u" if up else "l")
                atoms += f"{opener}{beam_number}{{{beam_ref[group]}}}{{0}}"
            if index == last:
                atoms += ("\\tbu" if up else "\\tbl") + str(beam_number)
        else:
            up = ev.pitch.diatonic < _MIDDLE_LINE[clef_kind]
        if ev.value.dots == 1:
            atoms += f"\\pt{{{code}}}"
        elif ev.value.dots == 2:
            atoms += f"\\ppt{{{code}}}"
        if index in tie_ends:
            atoms += f"\\ttie{{{ties.finish()}}}"
        if ev.tie_to_next:
            tie_command = "\\itied" if up else "\\itieu"
            atoms += f"{tie_command}{{{ties.start()}}}{{{code}}}"
        if group is not None:
            atoms += f"\\qb{beam_number}{{{code}}}"
        else:
            atoms += f"{_UNBEAMED[(ev.value.base, up)]}{{{code}}}"
        chunks.append(atoms)
    return "".join(chunks)


def emit_musixtex(doc: ScoreDoc) -> str:
    """Render a score document to a complete MusiXTeX source file."""
    meta = doc.meta
    signature = key_signature(meta.scale)
    # staff streams run bottom-up: staff 1 is the bass of a grand staff
    staves = tuple(reversed(active_clefs(meta.clef_config)))
    top = staves[-1]

    lines = [
        "\\input musixtex",
        "\\ifdefined\\pdfobjcompresslevel\\pdfobjcompresslevel=0\\fi",
        "\\nopagenumbers",
        "\\parindent0pt",
        "\\font\\sheettitlefont=cmbx12",
        "\\font\\sheetcomposerfont=cmti10",
        "\\normalmusicsize" if meta.note_size is NoteSize.REGULAR
        else "\\smallmusicsize",
        "\\instrumentnumber{1}",
        "\\setname1{}",
    ]
    if meta.clef_config is ClefConfig.GRAND:
        lines.append("\\setstaffs1{2}")
        lines.append("\\setclef1{\\bass}")
    elif meta.clef_config is ClefConfig.BASS:
        lines.append("\\setclef1{\\bass}")
    else:
        lines.append("\\setclef1{\\treble}")
    lines.append(f"\\generalsignature{{{signature.signed_count}}}")
    lines.append(
        f"\\generalmeter{{\\meterfrac{{{meta.time_signature.numerator}}}"
        f"{{{meta.time_signature.denominator}}}}}")
    if meta.show_bar_indices:
        lines.append("\\barnumbers")
    lines.append(f"\\mulooseness={meta.spacing_setting - 1}")
    lines.append(f"\\centerline{{\\sheettitlefont {meta.title}}}")
    lines.append("\\smallskip")
    lines.append(f"\\centerline{{\\sheetcomposerfont {meta.composer}}}")
    lines.append("\\medskip")
    lines.append("\\startpiece")

    repeat = meta.repeat_span
    if repeat is not None and repeat[0] == 1:
        lines.append("\\leftrepeat")

    for bar in doc.bars:
        union: set[int] = set()
        for voice in bar.voices.values():
            union.update(ev.onset_bin for ev in voice)
        onsets = sorted(union)
        gaps = [b - a for a, b in zip(onsets, onsets[1:])]
        gaps.append(meta.time_signature.bins_per_bar - onsets[-1])
        spacing = _spacing_command(min(gaps))

        streams = []
        for staff_index, clef in enumerate(staves):
            extra = ""
            if clef is top:
                if bar.index == 1:
                    anchor = _TEMPO_ANCHOR[clef.kind]
                    extra += (f"\\zcharnote{{{anchor}}}"
                              f"{{\\metron{{\\qu}}{{{meta.tempo_bpm}}}}}")
                if meta.show_chord_labels:
                    anchor = _LABEL_ANCHOR[clef.kind]
                    label = _tex_escape(bar.chord.label())
                    extra += f"\\zcharnote{{{anchor}}}{{\\rm {label}}}"
            streams.append(_voice_tokens(
                bar.voices[clef.kind], clef.kind, onsets,
                beam_number=staff_index, tie_base=2 * staff_index,
                extra_first_slice=extra,
            ))

        lines.append(f"% bar {bar.index}")
        lines.append(f"{spacing} " + "|".join(streams) + "\\en")

        if bar.index < meta.bar_count:
            if repeat is not None and repeat[1] == bar.index:
                lines.append("\\rightrepeat")
            elif repeat is not None and repeat[0] == bar.index + 1:
                lines.append("\\leftrepeat")
            else:
                lines.append("\\bar")
    if repeat is not None and repeat[1] == meta.bar_count:
        lines.append("\\rightrepeat\\zstoppiece")
    else:
        lines.append("\\endpiece")
    lines.append("\\bye")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Toolchain:
    """Resolved external programs: a TeX engine, the musixflx spacing pass,
    and a PDF rasterizer (pdftoppm or ghostscript)."""

    tex: str
    musixflx: str
    rasterizer: str


def discover_toolchain() -> Toolchain:
    """Locate the external programs, honoring the SHEETGEN_* overrides."""
    tex = os.environ.get("SHEETGEN_TEX") or shutil.which("pdfetex") \
        or shutil.which("pdftex")
    if not tex:
        raise ToolchainError(
            "no TeX engine found: install pdftex or set SHEETGEN_TEX")
    musixflx = os.environ.get("SHEETGEN_MUSIXFLX") or shutil.which("musixflx")
    if not musixflx:
        raise ToolchainError(
            "musixflx not found: install musixtex or set SHEETGEN_MUSIXFLX")
    rasterizer = os.environ.get("SHEETGEN_RASTERIZER") \
        or shutil.which("pdftoppm") or shutil.which("gs")
    if not rasterizer:
        raise ToolchainError(
            "no rasterizer found: install poppler-utils or ghostscript,"
            " or set SHEETGEN_RASTERIZER")
    return Toolchain(tex=tex, musixflx=musixflx, rasterizer=rasterizer)


def _run(cmd: list[str], cwd: Path) -> subprocess.CompletedProcess:
    try:
        return subprocess.run(
            cmd, cwd=cwd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
            timeout=120, check=False,
        )
    except FileNotFoundError as exc:
        raise ToolchainError(f"cannot run {cmd[0]}: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise CompileError(f"{cmd[0]} timed out after 120s") from exc


def compile_pdf(source: str, toolchain: Toolchain,
                workdir: str | Path | None = None) -> bytes:
    """Three-pass MusiXTeX compile; returns the finished PDF bytes."""

    def passes(directory: Path) -> bytes:
        tex_file = directory / "sheet.tex"
        tex_file.write_text(source)
        tex_cmd = [toolchain.tex, "-interaction=nonstopmode",
                   "-halt-on-error", "sheet.tex"]
        for cmd in (tex_cmd, [toolchain.musixflx, "sheet"], tex_cmd):
            proc = _run(cmd, directory)
            if proc.returncode != 0:
                log = proc.stdout.decode("utf-8", "replace")
                raise CompileError(
                    f"{Path(cmd[0]).name} failed with code {proc.returncode}",
                    log_tail=log[-2000:],
                )
        pdf_file = directory / "sheet.pdf"
        if not pdf_file.exists():
            raise CompileError("compile finished but produced no sheet.pdf")
        return pdf_file.read_bytes()

    if workdir is not None:
        directory = Path(workdir)
        directory.mkdir(parents=True, exist_ok=True)
        return passes(directory)
    with tempfile.TemporaryDirectory(prefix="sheetgen-") as tmp:
        return passes(Path(tmp))


_PAGE_OBJECT_RE = re.compile(rb"/Type\s*/Page\b")
_PAGE_COUNT_RE = re.compile(rb"/Type\s*/Pages[^>]*?/Count\s+(\d+)", re.DOTALL)


def count_pdf_pages(pdf: bytes) -> int:
    """Page count from the raw PDF, preferring explicit page objects."""
    pages = len(_PAGE_OBJECT_RE.findall(pdf))
    if pages:
        return pages
    counts = [int(m.group(1)) for m in _PAGE_COUNT_RE.finditer(pdf)]
    if counts:
        return max(counts)
    raise CompileError("no page objects found in PDF output")


@dataclass(frozen=True)
class FitResult:
    """Outcome of the single-page fit loop: the possibly shrunk document, its
    final source and PDF, and how many compiles it took."""

    doc: ScoreDoc
    source: str
    pdf: bytes
    iterations: int
    pages: int


def _shrink(doc: ScoreDoc) -> ScoreDoc | None:
    """One reduction step: drop the last bar above the floor, otherwise
    tighten spacing; None when fully exhausted."""
    meta = doc.meta
    if meta.bar_count > BAR_FLOOR:
        new_count = meta.bar_count - 1
        span = meta.repeat_span
        if span is not None:
            start, end = span
            end = min(end, new_count)
            span = (start, end) if start < end else None
        new_meta = dataclasses.replace(meta, bar_count=new_count,
                                       repeat_span=span)
        return ScoreDoc(meta=new_meta, bars=doc.bars[:new_count])
    if meta.spacing_setting > 1:
        new_meta = dataclasses.replace(
            meta, spacing_setting=meta.spacing_setting - 1)
        return ScoreDoc(meta=new_meta, bars=doc.bars)
    return None


def fit_single_page(
    doc: ScoreDoc,
    compile_fn: Callable[[str], bytes],
    max_iterations: int = MAX_FIT_ITERATIONS,
) -> FitResult:
    """Compile, and while the sheet spills past one page, shrink and retry."""
    current = doc
    iterations = 0
    while True:
        source = emit_musixtex(current)
        pdf = compile_fn(source)
        iterations += 1
        pages = count_pdf_pages(pdf)
        if pages <= 1:
            return FitResult(doc=current, source=source, pdf=pdf,
                             iterations=iterations, pages=pages)
        if iterations >= max_iterations:
            raise FitError(
                f"sheet still spans {pages} pages after {iterations} compiles")
        shrunk = _shrink(current)
        if shrunk is None:
            raise FitError(
                f"sheet spans {pages} pages at {BAR_FLOOR} bars and the"
                " tightest spacing")
        current = shrunk


def rasterize(pdf_path: Path, png_path: Path, dpi: int,
              toolchain: Toolchain) -> None:
    """Rasterize a single-page PDF to PNG via pdftoppm or ghostscript."""
    png_path.parent.mkdir(parents=True, exist_ok=True)
    name = Path(toolchain.rasterizer).name
    if "pdftoppm" in name:
        cmd = [toolchain.rasterizer, "-png", "-r", str(dpi), "-singlefile",
               str(pdf_path), str(png_path.with_suffix(""))]
    else:
        cmd = [toolchain.rasterizer, "-dNOPAUSE", "-dBATCH", "-dQUIET",
               "-sDEVICE=png16m", f"-r{dpi}",
               f"-sOutputFile={png_path}", str(pdf_path)]
    try:
        proc = subprocess.run(cmd, stdout=subprocess.PIPE,
                              stderr=subprocess.STDOUT, timeout=120,
                              check=False)
    except FileNotFoundError as exc:
        raise ToolchainError(f"cannot run {cmd[0]}: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise RasterizeError(f"{name} timed out after 120s") from exc
    if proc.returncode != 0:
        out = proc.stdout.decode("utf-8", "replace")
        raise RasterizeError(f"{name} failed with code {proc.returncode}:"
                             f" {out[-500:]}")
    if not png_path.exists():
        raise RasterizeError(f"{name} succeeded but {png_path} is missing")


def render_sheet(
    doc: ScoreDoc,
    png_path: Path,
    dpi: int = 150,
    toolchain: Toolchain | None = None,
) -> FitResult:
    """Fit a sheet onto one page and write its PNG; returns the fit outcome,
    whose document may hold fewer bars than the input."""
    toolchain = toolchain or discover_toolchain()
    result = fit_single_page(doc, lambda src: compile_pdf(src, toolchain))
    with tempfile.TemporaryDirectory(prefix="sheetgen-") as tmp:
        pdf_path = Path(tmp) / "sheet.pdf"
        pdf_path.write_bytes(result.pdf)
        rasterize(pdf_path, Path(png_path), dpi, toolchain)
    return result
