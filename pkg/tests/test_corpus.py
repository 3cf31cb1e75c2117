"""Corpus directory layout, atomic IO, idempotent builds, and render resume."""

import dataclasses
import json
import re

import pytest

import sheetgen.corpus as corpus_module
from sheetgen.corpus import (
    CorpusPaths,
    RenderSummary,
    SheetRecord,
    atomic_write_text,
    build_corpus,
    config_from_corpus,
    make_sheet_id,
    read_jsonl,
    read_sheet_records,
    render_corpus,
    write_jsonl,
    write_sheet_records,
)
from sheetgen.engrave import FitResult, Toolchain
from sheetgen.errors import ParseError
from sheetgen.sampler import GenConfig, Overrides, derive_sheet_seed, generate_sheet


FAKE_TOOLCHAIN = Toolchain(tex="/bin/true", musixflx="/bin/true", rasterizer="/bin/true")


class TestPaths:
    def test_layout(self, tmp_path):
        paths = CorpusPaths(tmp_path)
        assert paths.corpus_file == tmp_path / "corpus.json"
        assert paths.sheets_file == tmp_path / "sheets.jsonl"
        assert paths.qa_file == tmp_path / "qa.jsonl"
        assert paths.image_file("s00001-aa") == tmp_path / "images" / "s00001-aa.png"
        assert paths.image_ref("s00001-aa") == "images/s00001-aa.png"

    def test_sheet_id_shape(self):
        assert re.fullmatch(r"s\d{5}-[0-9a-f]{8}", make_sheet_id(3, 0xDEAD_BEEF))
        assert make_sheet_id(3, 0xDEAD_BEEF) == "s00003-deadbeef"
        # only the low 32 bits of the seed appear
        assert make_sheet_id(0, (1 << 40) | 0x1234) == "s00000-00001234"

    def test_sheet_ids_distinct_across_corpus(self):
        ids = {make_sheet_id(i, derive_sheet_seed(7, i)) for i in range(500)}
        assert len(ids) == 500


class TestAtomicIO:
    def test_write_creates_parents_and_no_temp_litter(self, tmp_path):
        target = tmp_path / "deep" / "nested" / "file.txt"
        atomic_write_text(target, "payload")
        assert target.read_text() == "payload"
        assert [p.name for p in target.parent.iterdir()] == ["file.txt"]

    def test_overwrite_replaces(self, tmp_path):
        target = tmp_path / "file.txt"
        atomic_write_text(target, "one")
        atomic_write_text(target, "two")
        assert target.read_text() == "two"

    def test_jsonl_round_trip(self, tmp_path):
        path = tmp_path / "data.jsonl"
        objects = [{"b": 2, "a": 1}, {"x": [1, 2]}]
        write_jsonl(path, objects)
        assert list(read_jsonl(path)) == objects

    def test_jsonl_lines_are_canonical(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_jsonl(path, [{"b": 2, "a": 1}])
        assert path.read_text() == '{"a":1,"b":2}\n'

    def test_jsonl_skips_blank_lines(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"a":1}\n\n{"a":2}\n')
        assert list(read_jsonl(path)) == [{"a": 1}, {"a": 2}]

    def test_jsonl_reports_bad_line_number(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"a":1}\nnot json\n')
        with pytest.raises(ParseError, match=":2"):
            list(read_jsonl(path))

    def test_empty_jsonl(self, tmp_path):
        path = tmp_path / "data.jsonl"
        write_jsonl(path, [])
        assert path.read_text() == ""
        assert list(read_jsonl(path)) == []


def make_records(count, corpus_seed=21):
    records = []
    for index in range(count):
        seed = derive_sheet_seed(corpus_seed, index)
        records.append(SheetRecord(sheet_id=make_sheet_id(index, seed),
                                   doc=generate_sheet(seed)))
    return records


class TestSheetRecords:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "sheets.jsonl"
        records = make_records(5)
        write_sheet_records(path, records)
        assert read_sheet_records(path) == records

    def test_ir_is_inline_object(self, tmp_path):
        path = tmp_path / "sheets.jsonl"
        write_sheet_records(path, make_records(1))
        obj = json.loads(path.read_text().splitlines()[0])
        assert set(obj) == {"sheet_id", "ir"}
        assert isinstance(obj["ir"], dict)
        assert "meta" in obj["ir"] and "bars" in obj["ir"]

    def test_corrupted_ir_rejected(self, tmp_path):
        path = tmp_path / "sheets.jsonl"
        write_sheet_records(path, make_records(1))
        obj = json.loads(path.read_text().splitlines()[0])
        obj["ir"]["meta"]["tempo_bpm"] = "fast"
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(ParseError):
            read_sheet_records(path)

    def test_missing_fields_rejected(self, tmp_path):
        path = tmp_path / "sheets.jsonl"
        path.write_text('{"sheet_id":"s00000-ab"}\n')
        with pytest.raises(ParseError, match="sheet record"):
            read_sheet_records(path)


class TestBuildCorpus:
    def test_fresh_build_writes_config_and_sheets(self, tmp_path):
        paths = CorpusPaths(tmp_path)
        config = GenConfig(seed=5, sheet_count=6)
        records, reused = build_corpus(config, paths)
        assert not reused
        assert len(records) == 6
        assert paths.corpus_file.exists()
        stored = json.loads(paths.corpus_file.read_text())
        assert stored == {"version": 1, "seed": 5, "sheet_count": 6, "overrides": {}}
        assert len(read_sheet_records(paths.sheets_file)) == 6

    def test_rebuild_reuses_matching_corpus(self, tmp_path):
        paths = CorpusPaths(tmp_path)
        config = GenConfig(seed=5, sheet_count=4)
        first, _ = build_corpus(config, paths)
        mtime = paths.sheets_file.stat().st_mtime_ns
        second, reused = build_corpus(config, paths)
        assert reused
        assert second == first
        assert paths.sheets_file.stat().st_mtime_ns == mtime

    @pytest.mark.parametrize("change", [
        {"seed": 6}, {"sheet_count": 3},
        {"overrides": Overrides.from_mapping({"time_signature": "3/4"})},
    ])
    def test_config_change_triggers_rebuild(self, tmp_path, change):
        paths = CorpusPaths(tmp_path)
        build_corpus(GenConfig(seed=5, sheet_count=4), paths)
        changed = GenConfig(**{"seed": 5, "sheet_count": 4, **change})
        records, reused = build_corpus(changed, paths)
        assert not reused
        assert len(records) == changed.sheet_count

    def test_force_rebuilds(self, tmp_path):
        paths = CorpusPaths(tmp_path)
        config = GenConfig(seed=5, sheet_count=2)
        build_corpus(config, paths)
        _, reused = build_corpus(config, paths, force=True)
        assert not reused

    def test_truncated_sheets_file_triggers_rebuild(self, tmp_path):
        paths = CorpusPaths(tmp_path)
        config = GenConfig(seed=5, sheet_count=4)
        build_corpus(config, paths)
        lines = paths.sheets_file.read_text().splitlines()
        paths.sheets_file.write_text("\n".join(lines[:2]) + "\n")
        records, reused = build_corpus(config, paths)
        assert not reused
        assert len(records) == 4

    def test_builds_are_byte_identical(self, tmp_path):
        config = GenConfig(seed=17, sheet_count=8)
        a, b = CorpusPaths(tmp_path / "a"), CorpusPaths(tmp_path / "b")
        build_corpus(config, a)
        build_corpus(config, b)
        assert a.sheets_file.read_bytes() == b.sheets_file.read_bytes()
        assert a.corpus_file.read_bytes() == b.corpus_file.read_bytes()

    def test_config_round_trip_with_overrides(self, tmp_path):
        paths = CorpusPaths(tmp_path)
        config = GenConfig(seed=9, sheet_count=2,
                           overrides=Overrides.from_mapping(
                               {"scale": "D major", "bar_count": 12}))
        build_corpus(config, paths)
        assert config_from_corpus(paths) == config

    def test_sheet_ids_embed_position_and_seed(self, tmp_path):
        paths = CorpusPaths(tmp_path)
        records, _ = build_corpus(GenConfig(seed=7, sheet_count=3), paths)
        for index, record in enumerate(records):
            seed = derive_sheet_seed(7, index)
            assert record.sheet_id == make_sheet_id(index, seed)
            assert record.doc.meta.seed == seed


def fake_renderer(calls, shrink_ids=()):
    """Stand-in for the TeX pipeline: writes a tiny PNG and optionally
    pretends the fit loop dropped the last bar."""

    def render(doc, png_path, dpi=150, toolchain=None):
        calls.append(doc.meta.seed)
        png_path.parent.mkdir(parents=True, exist_ok=True)
        png_path.write_bytes(b"\x89PNG fake")
        out = doc
        if doc.meta.seed in shrink_ids:
            meta = dataclasses.replace(
                doc.meta, bar_count=doc.meta.bar_count - 1,
                repeat_span=None)
            out = dataclasses.replace(doc, meta=meta, bars=doc.bars[:-1])
        return FitResult(doc=out, source="%", pdf=b"%PDF", iterations=2, pages=1)

    return render


class TestRenderCorpus:
    def build(self, tmp_path, count=4):
        paths = CorpusPaths(tmp_path)
        records, _ = build_corpus(GenConfig(seed=21, sheet_count=count), paths)
        return paths, records

    def test_renders_every_sheet_once(self, tmp_path, monkeypatch):
        paths, records = self.build(tmp_path)
        calls = []
        monkeypatch.setattr(corpus_module, "render_sheet", fake_renderer(calls))
        out, summary = render_corpus(records, paths, toolchain=FAKE_TOOLCHAIN)
        assert summary == RenderSummary(rendered=4, skipped=0, shrunk=0,
                                        total_iterations=8)
        assert len(calls) == 4
        assert out == records
        for record in records:
            assert paths.image_file(record.sheet_id).exists()

    def test_resume_skips_existing_images(self, tmp_path, monkeypatch):
        paths, records = self.build(tmp_path)
        calls = []
        monkeypatch.setattr(corpus_module, "render_sheet", fake_renderer(calls))
        render_corpus(records, paths, toolchain=FAKE_TOOLCHAIN)
        paths.image_file(records[1].sheet_id).unlink()
        calls.clear()
        _, summary = render_corpus(records, paths, toolchain=FAKE_TOOLCHAIN)
        assert summary.rendered == 1
        assert summary.skipped == 3
        assert calls == [records[1].doc.meta.seed]

    def test_force_rerenders_all(self, tmp_path, monkeypatch):
        paths, records = self.build(tmp_path)
        calls = []
        monkeypatch.setattr(corpus_module, "render_sheet", fake_renderer(calls))
        render_corpus(records, paths, toolchain=FAKE_TOOLCHAIN)
        calls.clear()
        _, summary = render_corpus(records, paths, toolchain=FAKE_TOOLCHAIN, force=True)
        assert summary.rendered == 4
        assert len(calls) == 4

    def test_shrunk_sheets_rewrite_the_stored_ir(self, tmp_path, monkeypatch):
        paths, records = self.build(tmp_path)
        victim = records[2]
        calls = []
        monkeypatch.setattr(corpus_module, "render_sheet",
                            fake_renderer(calls, shrink_ids={victim.doc.meta.seed}))
        out, summary = render_corpus(records, paths, toolchain=FAKE_TOOLCHAIN)
        assert summary.shrunk == 1
        assert out[2].sheet_id == victim.sheet_id
        assert out[2].doc.meta.bar_count == victim.doc.meta.bar_count - 1
        stored = read_sheet_records(paths.sheets_file)
        assert stored == out
        assert stored[2].doc.meta.bar_count == victim.doc.meta.bar_count - 1

    def test_unshrunk_records_left_untouched(self, tmp_path, monkeypatch):
        paths, records = self.build(tmp_path)
        monkeypatch.setattr(corpus_module, "render_sheet",
                            fake_renderer([], shrink_ids={records[0].doc.meta.seed}))
        out, _ = render_corpus(records, paths, toolchain=FAKE_TOOLCHAIN)
        assert out[1:] == records[1:]
