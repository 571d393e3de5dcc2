"""
Command-line surface: migrate, eval, compare, export-finetune, lint,
normalize, ingest.

Exit codes: 0 ok, 1 domain error, 2 parse error, 3 LLM/transport error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from .config_model import CiDialect, ensure_dialect, read_config
from .corpus import (
    DEFAULT_SPLIT_SEED,
    DEFAULT_TEST_FRACTION,
    FIXTURE_CORPUS_DIR,
    REPORTS_DIR,
    ingest,
    load_corpus,
    read_report,
    write_report,
    write_workbook,
)
from .errors import CigrateError, ParseError, TransportError
from .evaluation import (
    DEFAULT_IN_FLIGHT,
    LLM_ENGINE,
    RULES_ENGINE,
    EvalSettings,
    compare_reports,
    parse_direction,
    plot_comparison,
    run_eval,
)
from .llm_backend import DEFAULT_MAX_OUTPUT_TOKENS, EndpointConfig, FewShotPolicy, export_finetune_dataset, migrate_llm
from .log_setup import configure_logging
from .metrics import DEFAULT_N_MAX, DEFAULT_TRIVIAL_K, SCORE_METRICS
from .normalizer import normalize
from .translator import migrate_rules
from .validators import lint

logger = logging.getLogger("cigrate.cli")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_PARSE = 2
EXIT_TRANSPORT = 3


def _err(text: str) -> None:
    print(text, file=sys.stderr)


def _read_input(path: str, dialect: Optional[str]):
    if not Path(path).is_file():
        raise CigrateError("E_IO", f"input file not found: {path}")
    return read_config(path, ensure_dialect(dialect) if dialect else None)


def _few_shot(args) -> Optional[FewShotPolicy]:
    if not args.few_shot:
        return None
    return FewShotPolicy.parse(args.few_shot, args.selection)


def _endpoint(args) -> EndpointConfig:
    endpoint = EndpointConfig.from_env(args.endpoint or "")
    if not args.model:
        raise CigrateError("E_BAD_PARAMETER", "--model is required with --engine llm")
    return endpoint


# -----------------------------
# Commands
# -----------------------------
def cmd_migrate(args) -> int:
    config = _read_input(args.input, getattr(args, "from"))
    target = ensure_dialect(args.to)
    if config.dialect is target:
        raise CigrateError("E_SAME_DIALECT", f"source and target are both {target.label}")

    if args.engine == LLM_ENGINE:
        endpoint = _endpoint(args)
        few_shot = _few_shot(args)
        corpus = load_corpus(args.corpus) if few_shot else None
        result = migrate_llm(
            config, target, endpoint, args.model, few_shot=few_shot, corpus=corpus,
            max_output_tokens=args.max_tokens,
        )
    else:
        result = migrate_rules(config, target)

    text = result.output.serialize()
    if args.output:
        try:
            Path(args.output).write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise CigrateError("E_IO", f"cannot write {args.output}: {exc}") from exc
        logger.info(f"Migrated config written to {args.output}")
    else:
        sys.stdout.write(text)

    for warning in result.warnings:
        _err(str(warning))
    return EXIT_OK


def cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus)
    settings = EvalSettings(
        direction=parse_direction(args.direction),
        engine=args.engine,
        model=args.model,
        endpoint=_endpoint(args) if args.engine == LLM_ENGINE else None,
        few_shot=_few_shot(args),
        n_max=args.n_max,
        trivial_k=args.trivial_k,
        smoothing=args.smoothing,
        in_flight=args.in_flight,
        max_output_tokens=args.max_tokens,
    )
    report = run_eval(corpus, settings)

    out = Path(args.report) if args.report else REPORTS_DIR / f"eval_{report.run_id}.json"
    write_report(report, out)
    if args.workbook:
        write_workbook(report, args.workbook)

    per_metric = report.aggregates["per_metric"]
    table = pd.DataFrame(per_metric).T[["mean", "median", "stddev"]]
    print(f"engine: {report.engine}  run: {report.run_id}  pairs: {len(report.records)}")
    print(table.to_string(float_format=lambda value: f"{value:.4f}"))
    print(f"lint pass rate: {report.aggregates['lint_pass_rate']:.4f}")
    print(f"exact match rate: {report.aggregates['exact_match_rate']:.4f}")
    print(f"report: {out}")

    failed = [record for record in report.records if record.failure]
    if failed:
        codes = sorted({record.failure for record in failed})
        _err(f"{len(failed)} of {len(report.records)} pair(s) failed to migrate ({', '.join(codes)}); scored 0.")
    return EXIT_OK


def cmd_compare(args) -> int:
    report_a, report_b = read_report(args.report_a), read_report(args.report_b)
    comparison = compare_reports(report_a, report_b, args.metric, args.method)

    print(f"metric: {comparison.metric}")
    print(f"pairs: {len(comparison.pair_ids)}")
    print(f"mean A ({report_a.engine}): {comparison.mean_a:.4f}")
    print(f"mean B ({report_b.engine}): {comparison.mean_b:.4f}")
    if comparison.no_difference:
        print("no detectable difference (all paired differences are zero)")
    else:
        test = comparison.test
        print(f"statistic: {test.statistic:g}")
        print(f"p-value: {test.p_value:.4g}")
        print(f"n_effective: {test.n_effective}")
        print(f"method: {test.method}")

    if args.plot:
        plot_comparison(comparison, f"A ({report_a.engine})", f"B ({report_b.engine})", args.plot)
    return EXIT_OK


def cmd_export_finetune(args) -> int:
    corpus = load_corpus(args.corpus)
    direction = parse_direction(args.direction)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", encoding="utf-8", newline="\n") as handle:
            count = export_finetune_dataset(corpus, direction, handle)
    except OSError as exc:
        raise CigrateError("E_IO", f"cannot write {out}: {exc}") from exc
    print(f"{count} records written to {out}")
    return EXIT_OK


def cmd_lint(args) -> int:
    report = lint(_read_input(args.file, args.dialect))
    for diagnostic in report.diagnostics:
        print(str(diagnostic))
    return EXIT_OK if report.passed else EXIT_DOMAIN


def cmd_normalize(args) -> int:
    sys.stdout.write(normalize(_read_input(args.file, args.dialect)).serialize())
    return EXIT_OK


def cmd_ingest(args) -> int:
    manifest = ingest(args.source, args.out, seed=args.seed, test_fraction=args.test_fraction, split_file=args.split_file)
    counts = manifest.counts
    n_test = sum(1 for split in manifest.split_assignment.values() if split.value == "test")
    print(f"travis_only: {counts['travis_only']}  gha_only: {counts['gha_only']}  dual: {counts['dual']}")
    print(f"train: {counts['dual'] - n_test}  test: {n_test}")
    return EXIT_OK


# -----------------------------
# Parser
# -----------------------------
def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--engine", choices=[RULES_ENGINE, LLM_ENGINE], default=RULES_ENGINE)
    parser.add_argument("--model", help="model name sent to the completion endpoint")
    parser.add_argument("--endpoint", help="base URL of the chat-completion endpoint")
    parser.add_argument("--few-shot", type=int, default=0, metavar="K", help="number of in-context examples")
    parser.add_argument("--selection", default="first", help="few-shot selection: first, overlap, random[:seed]")
    parser.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_OUTPUT_TOKENS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cigrate", description="Migrate CI configs between Travis CI and GitHub Actions")
    parser.add_argument("--verbose", action="store_true", help="log progress to the console")
    parser.add_argument("--log-dir", type=Path, default=None, help="directory for cigrate_log.txt")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("migrate", help="migrate one config file")
    p.add_argument("--from", choices=[d.value for d in CiDialect], help="source dialect (detected when omitted)")
    p.add_argument("--to", required=True, choices=[d.value for d in CiDialect])
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--corpus", default=str(FIXTURE_CORPUS_DIR), help="few-shot example pool")
    _add_engine_flags(p)
    p.set_defaults(handler=cmd_migrate)

    p = sub.add_parser("eval", help="evaluate an engine on a corpus test split")
    p.add_argument("--corpus", default=str(FIXTURE_CORPUS_DIR))
    p.add_argument("--direction", default="travis->gha")
    p.add_argument("--trivial-k", type=int, default=DEFAULT_TRIVIAL_K)
    p.add_argument("--n-max", type=int, default=DEFAULT_N_MAX)
    p.add_argument("--smoothing", action="store_true", help="add-one smoothing for CrystalBLEU orders >= 2")
    p.add_argument("--in-flight", type=int, default=DEFAULT_IN_FLIGHT)
    p.add_argument("--report", help="report JSON path (a .csv is written next to it)")
    p.add_argument("--workbook", help="also write an .xlsx workbook")
    _add_engine_flags(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("compare", help="Wilcoxon signed-rank test between two reports")
    p.add_argument("--report-a", required=True)
    p.add_argument("--report-b", required=True)
    p.add_argument("--metric", choices=list(SCORE_METRICS), default="cosine")
    p.add_argument("--method", choices=["auto", "exact", "approx"], default="auto")
    p.add_argument("--plot", help="write a per-pair HTML chart")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("export-finetune", help="write train pairs as chat JSONL")
    p.add_argument("--corpus", default=str(FIXTURE_CORPUS_DIR))
    p.add_argument("--direction", default="travis->gha")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_export_finetune)

    for name, handler, help_text in (
        ("lint", cmd_lint, "structural lint of one config"),
        ("normalize", cmd_normalize, "print the canonical form of one config"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--dialect", choices=[d.value for d in CiDialect])
        p.add_argument("file")
        p.set_defaults(handler=handler)

    p = sub.add_parser("ingest", help="build a corpus (manifest + pairs) from project directories")
    p.add_argument("source")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=DEFAULT_SPLIT_SEED)
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--split-file")
    p.set_defaults(handler=cmd_ingest)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(verbose=args.verbose, log_dir=args.log_dir)
    logger.debug(f"cigrate {args.command}: {vars(args)}")

    try:
        return args.handler(args)
    except TransportError as exc:
        _err(str(exc))
        return EXIT_TRANSPORT
    except ParseError as exc:
        _err(str(exc))
        return EXIT_PARSE
    except CigrateError as exc:
        _err(str(exc))
        return EXIT_DOMAIN
