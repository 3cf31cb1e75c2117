"""Command line front end tying the pipeline stages together.

Subcommands: ``generate`` (sample the IR corpus), ``render`` (engrave PNGs
through the TeX toolchain), ``qa`` (emit the question manifest with its
train/test split), ``stats`` (corpus report), ``eval`` (score a prediction
file), and ``pipeline`` (all of the above in order). Every stage is
idempotent: unchanged inputs reuse what is already on disk, and interrupted
renders resume at the first missing image.

Exit codes sort failures by what the user must fix: 2 for configuration
(bad flags, missing corpus), 3 for environment (missing external programs,
unconfigured judge), 4 for processing (compile or fit failures), 5 for
malformed data files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .corpus import (
    CorpusPaths,
    build_corpus,
    config_from_corpus,
    read_sheet_records,
    render_corpus,
)
from .engrave import discover_toolchain
from .errors import (
    CompileError,
    FitError,
    JudgeError,
    OverrideError,
    ParseError,
    PredictionError,
    RasterizeError,
    SheetgenError,
    ToolchainError,
)
from .evaluate import (
    HttpJudge,
    StubJudge,
    evaluate_predictions,
    judge_predictions,
    read_predictions,
)
from .qa import Manifest, compute_stats, generate_qa, read_manifest, split_manifest, write_manifest
from .sampler import GenConfig, Overrides

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENVIRONMENT = 3
EXIT_PROCESSING = 4
EXIT_PARSE = 5


class _CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _corpus_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", type=Path, default=Path("corpus"),
                        help="corpus directory (default: ./corpus)")


def _generation_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0,
                        help="corpus seed (default: 0)")
    parser.add_argument("--sheets", type=int, default=100,
                        help="number of sheets (default: 100)")
    parser.add_argument("--overrides", type=Path, default=None,
                        help="key = value file pinning sampled fields")


def _render_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dpi", type=int, default=150,
                        help="PNG resolution (default: 150)")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel renders (default: 1)")
    parser.add_argument("--force", action="store_true",
                        help="re-render sheets whose image already exists")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sheetgen",
        description="Synthesize music sheets with exact ground truth, emit "
                    "visual QA pairs, and score predictions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample the sheet corpus")
    _corpus_arg(p)
    _generation_args(p)

    p = sub.add_parser("render", help="engrave every sheet to a PNG")
    _corpus_arg(p)
    _render_args(p)

    p = sub.add_parser("qa", help="emit the question manifest and split")
    _corpus_arg(p)
    p.add_argument("--split-ratio", type=float, default=0.9,
                   help="train share of sheets (default: 0.9)")

    p = sub.add_parser("stats", help="summarize the corpus and manifest")
    _corpus_arg(p)
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("eval", help="score a prediction file against the manifest")
    _corpus_arg(p)
    p.add_argument("--predictions", type=Path, required=True,
                   help="JSONL with one {qa_id, answer} object per line")
    p.add_argument("--judge", choices=("stub", "http"), default=None,
                   help="also grade with a binary judge")
    p.add_argument("--format", choices=("json", "kern+"), default=None,
                   help="score only answers in this encoding")
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("pipeline", help="generate, render, qa, and stats in order")
    _corpus_arg(p)
    _generation_args(p)
    _render_args(p)
    p.add_argument("--split-ratio", type=float, default=0.9,
                   help="train share of sheets (default: 0.9)")
    p.add_argument("--skip-render", action="store_true",
                   help="stop after IR and QA; no TeX toolchain needed")
    return parser


# ---------------------------------------------------------------------------
# Subcommand bodies


def _load_config(args: argparse.Namespace) -> GenConfig:
    overrides = None
    if args.overrides is not None:
        if not args.overrides.exists():
            raise _CliError(EXIT_CONFIG, f"override file not found: {args.overrides}")
        overrides = Overrides.from_file(args.overrides)
    if args.sheets < 1:
        raise _CliError(EXIT_CONFIG, f"--sheets must be positive, got {args.sheets}")
    return GenConfig(seed=args.seed, sheet_count=args.sheets, overrides=overrides)


def _require_records(paths: CorpusPaths):
    if not paths.sheets_file.exists():
        raise _CliError(
            EXIT_CONFIG,
            f"no sheet corpus at {paths.sheets_file}; run 'sheetgen generate' first")
    return read_sheet_records(paths.sheets_file)


def _require_manifest(paths: CorpusPaths) -> Manifest:
    if not paths.qa_file.exists():
        raise _CliError(
            EXIT_CONFIG,
            f"no question manifest at {paths.qa_file}; run 'sheetgen qa' first")
    return read_manifest(paths.qa_file)


def cmd_generate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    records, reused = build_corpus(config, CorpusPaths(args.corpus))
    verb = "reused" if reused else "generated"
    print(f"{verb} {len(records)} sheets in {args.corpus} (seed {config.seed})")
    return EXIT_OK


def _render(args: argparse.Namespace, paths: CorpusPaths, records) -> list:
    toolchain = discover_toolchain()
    if args.workers < 1:
        raise _CliError(EXIT_CONFIG, f"--workers must be positive, got {args.workers}")

    def log(record, result, seconds):
        print(json.dumps({
            "event": "render", "sheet_id": record.sheet_id,
            "seed": record.doc.meta.seed, "fit_iterations": result.iterations,
            "bar_count": record.doc.meta.bar_count,
            "seconds": round(seconds, 3),
        }, sort_keys=True))

    records, summary = render_corpus(
        records, paths, dpi=args.dpi, toolchain=toolchain,
        force=args.force, workers=args.workers, on_sheet=log)
    print(f"rendered {summary.rendered}, skipped {summary.skipped}, "
          f"shrunk {summary.shrunk}")
    return records


def cmd_render(args: argparse.Namespace) -> int:
    paths = CorpusPaths(args.corpus)
    _render(args, paths, _require_records(paths))
    return EXIT_OK


def _emit_qa(paths: CorpusPaths, records, ratio: float) -> Manifest:
    if not 0.0 < ratio <= 1.0:
        raise _CliError(EXIT_CONFIG, f"--split-ratio {ratio} outside (0, 1]")
    pairs = []
    for record in records:
        pairs.extend(generate_qa(record.doc, record.sheet_id,
                                 paths.image_ref(record.sheet_id)))
    seed = config_from_corpus(paths).seed
    manifest = split_manifest(pairs, ratio=ratio, seed=seed)
    write_manifest(paths.qa_file, manifest)
    return manifest


def cmd_qa(args: argparse.Namespace) -> int:
    paths = CorpusPaths(args.corpus)
    records = _require_records(paths)
    manifest = _emit_qa(paths, records, args.split_ratio)
    trains = sum(1 for e in manifest.entries if e.split == "train")
    print(f"wrote {len(manifest.entries)} question pairs for {len(records)} "
          f"sheets ({trains} train / {len(manifest.entries) - trains} test)")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    paths = CorpusPaths(args.corpus)
    records = _require_records(paths)
    manifest = _require_manifest(paths)
    stats = compute_stats([r.doc for r in records], manifest)
    if args.json:
        print(json.dumps(stats.as_dict(), sort_keys=True))
    else:
        print(stats.as_text())
    return EXIT_OK


def _filter_by_format(manifest: Manifest, fmt: str) -> Manifest:
    entries = tuple(e for e in manifest.entries if e.pair.answer_format == fmt)
    return Manifest(version=manifest.version, entries=entries)


def cmd_eval(args: argparse.Namespace) -> int:
    paths = CorpusPaths(args.corpus)
    manifest = _require_manifest(paths)
    if not args.predictions.exists():
        raise _CliError(EXIT_CONFIG, f"prediction file not found: {args.predictions}")
    predictions = read_predictions(args.predictions)
    all_ids = {e.pair.qa_id for e in manifest.entries}
    unknown = sorted({p.qa_id for p in predictions} - all_ids)
    if unknown:
        raise PredictionError(
            f"predictions for unknown question ids: {', '.join(unknown[:5])}")
    if args.format is not None:
        manifest = _filter_by_format(manifest, args.format)
        kept = {e.pair.qa_id for e in manifest.entries}
        predictions = tuple(p for p in predictions if p.qa_id in kept)
    report = evaluate_predictions(manifest, predictions)
    judge_report = None
    if args.judge is not None:
        judge = StubJudge() if args.judge == "stub" else HttpJudge()
        judge_report = judge_predictions(manifest, predictions, judge)
    if args.json:
        payload = {"pnls": report.as_dict()}
        if judge_report is not None:
            payload["judge"] = judge_report.as_dict()
        print(json.dumps(payload, sort_keys=True))
    else:
        print(report.as_text())
        if judge_report is not None:
            print()
            print(judge_report.as_text())
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = _load_config(args)
    paths = CorpusPaths(args.corpus)
    began = time.monotonic()
    records, reused = build_corpus(config, paths)
    print(f"{'reused' if reused else 'generated'} {len(records)} sheets")
    if not args.skip_render:
        records = _render(args, paths, records)
    manifest = _emit_qa(paths, records, args.split_ratio)
    print(f"wrote {len(manifest.entries)} question pairs")
    stats = compute_stats([r.doc for r in records], manifest)
    print(stats.as_text())
    print(f"pipeline finished in {time.monotonic() - began:.1f}s")
    return EXIT_OK


_HANDLERS = {
    "generate": cmd_generate,
    "render": cmd_render,
    "qa": cmd_qa,
    "stats": cmd_stats,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ToolchainError as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except JudgeError as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except (ParseError, PredictionError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (CompileError, FitError, RasterizeError) as exc:
        print(f"processing error: {exc}", file=sys.stderr)
        return EXIT_PROCESSING
    except OverrideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SheetgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROCESSING


if __name__ == "__main__":
    sys.exit(main())
