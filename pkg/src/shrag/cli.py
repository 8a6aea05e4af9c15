"""Command-line entry point: ``shrag {index,ask,sweep,eval}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config
from .documents import ingest
from .engine import build_index
from .evaluation import load_evalset, run_and_sweep, run_eval
from .io import atomic_write_text
from .pipeline import PipelineError, QueryRecord, answer_template, build_components, detect_lang, run

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2

log = logging.getLogger("shrag")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_FAILURE


def _config(args) -> PipelineConfig:
    if not getattr(args, "config", None):
        raise UsageError("--config is required for this command")
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return replace(cfg, **overrides) if overrides else cfg


def cmd_index(args) -> int:
    corpus_path = Path(args.corpus)
    if not corpus_path.is_file():
        return _fail(f"corpus file not found: {corpus_path}")
    try:
        corpus, report = ingest(corpus_path)
        index = build_index(corpus)
        index.save(args.index)
    except (OSError, ValueError) as exc:
        return _fail(f"{corpus_path}: {exc}")
    print(report.to_json())
    for err in report.errors:
        print(f"{corpus_path}:{err['line']}: {err['error']}", file=sys.stderr)
    return EXIT_OK


def cmd_ask(args) -> int:
    text = args.query.strip()
    if not text:
        raise UsageError("empty query")
    cfg = _config(args)
    lang = args.lang or detect_lang(text)
    qid = args.id or "ask-" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
    query = QueryRecord(qid, text, lang)
    out_dir = Path(args.out or "runs")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        answer, trace = run(query, cfg)
    except PipelineError as exc:
        if exc.trace is not None and out_dir.is_dir():
            atomic_write_text(out_dir / f"{qid}.trace.json", exc.trace.to_json())
        return _fail(f"pipeline failed at stage '{exc.stage}': {exc}")
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    atomic_write_text(out_dir / f"{qid}.trace.json", trace.to_json())
    markers = answer_template(cfg, lang).markers
    sys.stdout.write(answer.render(markers))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if not args.out:
        raise UsageError("--out is required for sweep")
    try:
        evals = load_evalset(args.evalset)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = run_and_sweep(evals, cfg, repetitions=args.repetitions, seed=cfg.seed)
        if all(r.errors == len(evals) * report.repetitions_run for r in report.rows):
            return _fail("every query failed in every condition")
        paths = report.write(out_dir)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    try:
        evals = load_evalset(args.evalset)
        report = run_eval(evals, cfg)
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    if report.errors == len(evals):
        return _fail("every query failed")
    print(f"QSR\tall\t{report.qsr:.2f}\t(n={len(evals)})")
    for lang, value in report.per_lang.items():
        n = sum(1 for ev in evals if ev.query.lang == lang)
        print(f"QSR\t{lang}\t{value:.2f}\t(n={n})")
    if args.out:
        try:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            atomic_write_text(Path(args.out) / "eval.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            return _fail(str(exc))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="pipeline config (TOML)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override config seed")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker pool size")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="shrag", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index", parents=[common], help="build and save an inverted index from a corpus")
    p.add_argument("corpus")
    p.add_argument("index")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("ask", parents=[common], help="answer one query and write its trace")
    p.add_argument("query")
    p.add_argument("--lang", default=None, help="query language tag (default: detected)")
    p.add_argument("--id", default=None, help="query id used for the trace filename")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("sweep", parents=[common], help="AND-count sweep over an eval set")
    p.add_argument("evalset")
    p.add_argument("--repetitions", type=int, default=10)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", parents=[common], help="query success rate over an eval set")
    p.add_argument("evalset")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("workers", None), ("out", None), ("verbose", False)):
        if not hasattr(args, name):  # SUPPRESS keeps a later position from clobbering an earlier one
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        return _fail(f"file not found: {exc.filename or exc}")


if __name__ == "__main__":
    sys.exit(main())
