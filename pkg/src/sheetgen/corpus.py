"""Corpus layout on disk and the build/render orchestration.

A corpus directory holds corpus.json (the generating configuration),
sheets.jsonl (one record per sheet: id plus inline score IR), qa.jsonl (the
question manifest), and images/ with one PNG per sheet. All writes go through
a temp file and atomic rename so interrupted runs never leave half-written
manifests. Rendering is resumable: sheets whose PNG already exists are
skipped, and when the single-page fit loop shrinks a sheet, sheets.jsonl is
rewritten immediately so the stored IR always matches the rendered images.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .engrave import FitResult, Toolchain, discover_toolchain, render_sheet
from .errors import ParseError
from .sampler import GenConfig, Overrides, derive_sheet_seed, generate_sheet
from .score import ScoreDoc, deserialize_ir, serialize_ir

CORPUS_VERSION = 1


@dataclass(frozen=True)
class CorpusPaths:
    """File layout inside one corpus directory."""

    root: Path

    @property
    def corpus_file(self) -> Path:
        return self.root / "corpus.json"

    @property
    def sheets_file(self) -> Path:
        return self.root / "sheets.jsonl"

    @property
    def qa_file(self) -> Path:
        return self.root / "qa.jsonl"

    @property
    def images_dir(self) -> Path:
        return self.root / "images"

    def image_file(self, sheet_id: str) -> Path:
        return self.images_dir / f"{sheet_id}.png"

    def image_ref(self, sheet_id: str) -> str:
        """Image path relative to the corpus root, as stored in manifests."""
        return f"images/{sheet_id}.png"


def make_sheet_id(index: int, seed: int) -> str:
    """Stable sheet identifier carrying the position and a seed fingerprint;
    independent of content so the fit loop may shrink a sheet without
    renaming its files."""
    return f"s{index:05d}-{seed & 0xFFFFFFFF:08x}"


@dataclass(frozen=True)
class SheetRecord:
    sheet_id: str
    doc: ScoreDoc


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: Path, objects: Iterable[dict]) -> None:
    lines = [json.dumps(obj, sort_keys=True, separators=(",", ":"))
             for obj in objects]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_jsonl(path: Path) -> Iterator[dict]:
    with open(path) as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{number}: {exc.msg}",
                                 position=number) from exc


def _record_to_obj(record: SheetRecord) -> dict:
    return {"sheet_id": record.sheet_id,
            "ir": json.loads(serialize_ir(record.doc))}


def _record_from_obj(obj: dict) -> SheetRecord:
    if not isinstance(obj, dict) or "sheet_id" not in obj or "ir" not in obj:
        raise ParseError("sheet record needs sheet_id and ir fields")
    ir_text = json.dumps(obj["ir"], sort_keys=True, separators=(",", ":"))
    return SheetRecord(sheet_id=str(obj["sheet_id"]),
                       doc=deserialize_ir(ir_text))


def write_sheet_records(path: Path, records: Iterable[SheetRecord]) -> None:
    write_jsonl(path, (_record_to_obj(r) for r in records))


def read_sheet_records(path: Path) -> list[SheetRecord]:
    return [_record_from_obj(obj) for obj in read_jsonl(path)]


def _config_obj(config: GenConfig) -> dict:
    overrides = config.overrides.to_mapping() if config.overrides else {}
    return {
        "version": CORPUS_VERSION,
        "seed": int(config.seed),
        "sheet_count": int(config.sheet_count),
        "overrides": overrides,
    }


def config_from_corpus(paths: CorpusPaths) -> GenConfig:
    """Rebuild the generating configuration stored in corpus.json."""
    try:
        obj = json.loads(paths.corpus_file.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{paths.corpus_file}: {exc.msg}") from exc
    if not isinstance(obj, dict) or obj.get("version") != CORPUS_VERSION:
        raise ParseError(f"{paths.corpus_file}: unsupported corpus version")
    overrides = None
    if obj.get("overrides"):
        overrides = Overrides.from_mapping(obj["overrides"])
    return GenConfig(seed=int(obj["seed"]),
                     sheet_count=int(obj["sheet_count"]),
                     overrides=overrides)


def build_corpus(config: GenConfig, paths: CorpusPaths,
                 force: bool = False) -> tuple[list[SheetRecord], bool]:
    """Generate the sheet corpus, or reuse one already on disk when the
    stored configuration matches. Returns (records, reused)."""
    wanted = _config_obj(config)
    if not force and paths.corpus_file.exists() and paths.sheets_file.exists():
        try:
            stored = json.loads(paths.corpus_file.read_text())
        except json.JSONDecodeError:
            stored = None
        if stored == wanted:
            records = read_sheet_records(paths.sheets_file)
            if len(records) == config.sheet_count:
                return records, True
    records = []
    for index in range(config.sheet_count):
        seed = derive_sheet_seed(config.seed, index)
        doc = generate_sheet(seed, config.overrides)
        records.append(SheetRecord(sheet_id=make_sheet_id(index, seed),
                                   doc=doc))
    write_sheet_records(paths.sheets_file, records)
    atomic_write_text(paths.corpus_file,
                      json.dumps(wanted, sort_keys=True, indent=2) + "\n")
    return records, False


@dataclass(frozen=True)
class RenderSummary:
    rendered: int
    skipped: int
    shrunk: int
    total_iterations: int


def render_corpus(
    records: list[SheetRecord],
    paths: CorpusPaths,
    dpi: int = 150,
    toolchain: Toolchain | None = None,
    force: bool = False,
    workers: int = 1,
    on_sheet: Callable[[SheetRecord, FitResult, float], None] | None = None,
) -> tuple[list[SheetRecord], RenderSummary]:
    """Render every sheet to images/, skipping finished PNGs. Sheets shrunk
    by the fit loop replace their stored IR at once, keeping sheets.jsonl
    authoritative for what the images actually show. ``on_sheet`` fires
    after each finished render with the (possibly updated) record, the fit
    result, and the wall seconds spent."""
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    toolchain = toolchain or discover_toolchain()
    out: list[SheetRecord] = list(records)
    pending = [position for position, record in enumerate(records)
               if force or not paths.image_file(record.sheet_id).exists()]
    skipped = len(records) - len(pending)
    rendered = shrunk = total_iterations = 0
    lock = threading.Lock()

    def finish(position: int, result: FitResult, seconds: float) -> None:
        nonlocal rendered, shrunk, total_iterations
        with lock:
            rendered += 1
            total_iterations += result.iterations
            if result.doc != records[position].doc:
                shrunk += 1
                out[position] = SheetRecord(
                    sheet_id=records[position].sheet_id, doc=result.doc)
                write_sheet_records(paths.sheets_file, out)
            if on_sheet is not None:
                on_sheet(out[position], result, seconds)

    def render_one(position: int) -> None:
        record = records[position]
        began = time.monotonic()
        result = render_sheet(record.doc, paths.image_file(record.sheet_id),
                              dpi=dpi, toolchain=toolchain)
        finish(position, result, time.monotonic() - began)

    if workers == 1 or len(pending) <= 1:
        for position in pending:
            render_one(position)
    else:
        # TeX runs as subprocesses, so threads give real parallelism here.
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(render_one, p) for p in pending]
            done, not_done = wait(futures, return_when=FIRST_EXCEPTION)
            for future in not_done:
                future.cancel()
            for future in done:
                future.result()
    return out, RenderSummary(rendered=rendered, skipped=skipped,
                              shrunk=shrunk,
                              total_iterations=total_iterations)
