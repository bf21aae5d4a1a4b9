"""mqmjudge command-line interface.

Subcommands wire the library into file-based pipelines; every stage reads
and writes plain files (JSON Lines, TSV, canonical JSON) so any stage can
be re-run in isolation. Exit status: 0 success, 1 usage/config error,
2 data error, 3 endpoint failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import dataio
from .analytics import (
    DEFAULT_DIFFICULTY_BINS,
    DifficultyBin,
    budget_by_difficulty,
    discrepancy_typology,
    distribution_report,
)
from .attribution import AttributionInput, AttributionResult, shapley_mt
from .client import DecodeParams, EndpointConfig, run_batch, sorted_records
from .errors import ConfigError, DataError, EndpointError, MqmJudgeError, ParseError
from .metaeval import MetaReport, TestConfig, meta_report, metric_significance, report_table
from .parsing import Strictness, parse_record_blocks
from .prompts import PromptTemplate, default_demos, build_judge_prompt
from .scoring import WeightScheme, rescore_matrix, resolve_weights, score_annotation
from .trajectories import (
    balance_dataset,
    dataset_sizes,
    read_dataset,
    synthesize_trajectory,
    validation_report,
    write_dataset,
)
from .types import MaterialsMode, ScoreMatrix, annotations_by_key

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENDPOINT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to status 2; we use 1
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_weights(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--weights",
        default="default",
        help="weight scheme: 'default' (-25/-5/-1/-0.1), 'alt321' (-3/-2/-1/-0.1), or a JSON path",
    )


def _add_test_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--resamples", type=int, default=1000, help="permutation resamples (default 1000)")
    p.add_argument("--seed", type=int, default=0, help="global random seed")


def _add_figures(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-figures", dest="figures", action="store_false",
                   help="skip rendering figure files next to the reports")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mqmjudge", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="load a human MQM TSV into annotation/segment files")
    p.add_argument("--mqm-tsv", required=True)
    p.add_argument("--lang-pair", default=None, help="language pair tag when the file has no column for it")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("prompt", help="render judge prompts for segments")
    p.add_argument("--segments", required=True, help="segments JSONL (see ingest)")
    p.add_argument("--mode", default="src", choices=["src", "ref", "joint"])
    p.add_argument("--template", default=None, help="template name or path (default: gemba-mqm-<mode>)")
    p.add_argument("--demos", default="default", help="'default', 'none', or a demo JSON path")
    _add_weights(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("judge", help="dispatch prompts to a judge endpoint")
    p.add_argument("--prompts", required=True)
    p.add_argument("--endpoint", required=True, help="base URL of a chat-completions API")
    p.add_argument("--model", required=True)
    p.add_argument("--auth-env", default=None, help="environment variable holding the bearer token")
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--temperature", type=float, default=0.6)
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--max-tokens", type=int, default=4096)
    p.add_argument("--no-top-k", dest="send_top_k", action="store_false",
                   help="endpoint schema rejects top_k")
    p.add_argument("--retry-failures", action="store_true",
                   help="re-dispatch fingerprints whose resume records are failures")
    p.add_argument("--out", required=True, help="output/resume JSONL (appended)")

    p = sub.add_parser("parse", help="parse judge completions into annotations")
    p.add_argument("--records", required=True, help="judge records JSONL")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strictness", action="store_const", const="strict")
    mode.add_argument("--lenient", dest="strictness", action="store_const", const="lenient")
    p.set_defaults(strictness="lenient")
    p.add_argument("--out", required=True, help="annotations JSONL")
    p.add_argument("--report", default=None, help="parse report JSON path")

    p = sub.add_parser("score", help="score annotations into a matrix")
    p.add_argument("--annotations", required=True)
    _add_weights(p)
    p.add_argument("--out", required=True, help="score matrix TSV")

    p = sub.add_parser("metaeval", help="meta-evaluate a metric against human scores")
    p.add_argument("--human", required=True, help="MQM TSV, matrix TSV, annotations JSONL, or judge JSONL")
    p.add_argument("--metric", required=True, help="same formats as --human")
    p.add_argument("--negate-human", action="store_true",
                   help="human table stores positive penalty sums; negate at ingestion")
    p.add_argument("--lang-pair", default=None)
    _add_weights(p)
    _add_test_config(p)
    _add_figures(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("significance", help="permutation test between two metrics")
    p.add_argument("--human", required=True)
    p.add_argument("--metric-a", required=True)
    p.add_argument("--metric-b", required=True)
    p.add_argument("--meta", default="acc_eq", choices=["spa", "acc_eq", "pearson", "kendall"])
    p.add_argument("--sidedness", default="two_sided", choices=["two_sided", "greater"])
    p.add_argument("--lang-pair", default=None)
    _add_weights(p)
    _add_test_config(p)
    p.add_argument("--out", default=None, help="optional JSON output path")

    p = sub.add_parser("shapley", help="attribute source/reference contributions")
    p.add_argument("--src", type=str, default=None, help="meta-metric value under source-only judging")
    p.add_argument("--ref", type=str, default=None, help="meta-metric value under reference-based judging")
    p.add_argument("--joint", type=str, default=None, help="meta-metric value under joint judging")
    p.add_argument("--reports", nargs=3, metavar=("SRC", "REF", "JOINT"), default=None,
                   help="three metaeval report JSONs (src, ref, joint)")
    p.add_argument("--empty-set-rule", default="symmetric", choices=["symmetric", "reference"])
    _add_figures(p)
    p.add_argument("--out-dir", default=None)

    p = sub.add_parser("analyze", help="reasoning-cost and score diagnostics")
    kind = p.add_subparsers(dest="kind", metavar="KIND")

    pb = kind.add_parser("budget", help="thinking budget by difficulty")
    pb.add_argument("--records", required=True, help="judge records JSONL")
    pb.add_argument("--human", required=True, help="human scores (any metaeval format)")
    pb.add_argument("--lang-pair", default=None)
    _add_weights(pb)
    pb.add_argument("--tau", type=float, default=1.0, help="alignment tolerance on |model - human|")
    pb.add_argument("--bins", default=None,
                    help="difficulty breakpoints, e.g. '0,-1,-5,-25' (default rubric bins)")
    _add_figures(pb)
    pb.add_argument("--out-dir", required=True)

    pd = kind.add_parser("distribution", help="score distributions and overestimation")
    pd.add_argument("--human", required=True)
    pd.add_argument("--metric", required=True)
    pd.add_argument("--negate-human", action="store_true")
    pd.add_argument("--lang-pair", default=None)
    _add_weights(pd)
    pd.add_argument("--bins", default=None, help="histogram edges, comma-separated scores")
    _add_figures(pd)
    pd.add_argument("--out-dir", required=True)

    pt = kind.add_parser("typology", help="judge-vs-human error-type discrepancies")
    pt.add_argument("--judge", required=True, help="judge annotations JSONL (or records JSONL)")
    pt.add_argument("--human", required=True, help="human annotations JSONL or MQM TSV")
    pt.add_argument("--lang-pair", default=None)
    _add_figures(pt)
    pt.add_argument("--out-dir", required=True)

    p = sub.add_parser("synth", help="synthesize thinking-trajectory training data")
    p.add_argument("--mqm-tsv", required=True, help="human MQM TSV (the annotation source)")
    p.add_argument("--lang-pair", default=None)
    p.add_argument("--mode", default="ref", choices=["src", "ref"])
    p.add_argument("--ref-system", default=None,
                   help="system id whose targets serve as references (e.g. refA); "
                        "required for ref mode when segments carry no references")
    _add_weights(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-n", type=int, default=None,
                   help="per-language-pair size (default: smallest group)")
    p.add_argument("--no-balance", dest="balance", action="store_false")
    p.add_argument("--drop-empty-source", action="store_true")
    p.add_argument("--max-source-chars", type=int, default=None)
    p.add_argument("--out", required=True, help="training dataset JSONL")
    p.add_argument("--report", default=None)

    p = sub.add_parser("validate", help="validate a synthesized dataset")
    p.add_argument("--dataset", required=True)
    _add_weights(p)
    p.add_argument("--report", default=None)
    p.add_argument("--fail-on-violations", action="store_true")

    return parser


# ---------------------------------------------------------------------------
# Input sniffing: every score-bearing flag accepts an MQM TSV, a matrix TSV,
# an annotations JSONL, or a judge-records JSONL.


def _first_json_line(path: Path) -> dict:
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                return json.loads(line)
    raise DataError(f"{path}: empty JSONL file")


def _records_to_annotations(records, strictness: Strictness):
    annotations = []
    failures = []
    warnings = 0
    skipped = 0
    for record in records:
        if record.error is not None or (not record.answer and not record.raw_completion):
            skipped += 1
            continue
        answer = record.answer if record.think is not None else record.raw_completion
        try:
            judgment = parse_record_blocks(record.think, answer, strictness)
        except ParseError as exc:
            failures.append({"key": list(record.key), "run_index": record.run_index, "error": str(exc)})
            continue
        warnings += len(judgment.warnings)
        rater = f"run{record.run_index}" if record.run_index else None
        annotations.append(judgment.annotation_for(record.key, rater=rater))
    stats = {
        "records": len(records),
        "parsed": len(annotations),
        "skipped": skipped,
        "warnings": warnings,
        "failures": failures,
    }
    return annotations, stats


def _load_annotations_any(path_str: str, lang_pair: str | None) -> list:
    path = Path(path_str)
    if path.suffix.lower() in (".tsv", ".tab"):
        result = dataio.load_mqm_tsv(path, lang_pair=lang_pair)
        return result.annotations
    obj = _first_json_line(path)
    if "spans" in obj:
        return dataio.load_annotations_jsonl(path)
    records = dataio.load_judge_jsonl(path)
    annotations, _ = _records_to_annotations(records, Strictness.LENIENT)
    return annotations


def _load_matrix_any(
    path_str: str,
    weights: WeightScheme,
    lang_pair: str | None = None,
    negate: bool = False,
) -> ScoreMatrix:
    path = Path(path_str)
    if path.suffix.lower() in (".tsv", ".tab"):
        with open(path, encoding="utf-8") as f:
            header = f.readline().strip().lower().split("\t")
        if "severity" in header and "category" in header:
            result = dataio.load_mqm_tsv(path, lang_pair=lang_pair)
            matrix = rescore_matrix(result.annotations, weights)
        else:
            matrix = dataio.load_score_matrix(path, negate=negate)
            negate = False
        if negate:
            matrix = ScoreMatrix(matrix.systems, matrix.segments, -matrix.values)
        return matrix
    annotations = _load_annotations_any(path_str, lang_pair)
    return rescore_matrix(annotations, weights)


def _write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dataio.canonical_json(obj))


def emit_report(report: MetaReport, fmt: str, path) -> None:
    """Write a MetaReport as canonical json, aligned table, or csv."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        _write_json(report.to_dict(), path)
    elif fmt == "table":
        with open(path, "w", encoding="utf-8") as f:
            f.write(report_table(report))
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["language", "spa", "acc_eq_star", "epsilon_star", "pearson", "kendall"])
            for lang, lm in sorted(report.per_language.items()):
                writer.writerow([lang, lm.spa, lm.acc_eq_star, lm.epsilon_star, lm.pearson, lm.kendall])
            writer.writerow(["avg", report.spa, report.acc_eq_star, report.epsilon_star,
                             report.pearson, report.kendall])
    else:
        raise ConfigError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# Command implementations


def _cmd_ingest(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = dataio.load_mqm_tsv(args.mqm_tsv, lang_pair=args.lang_pair)
    n_ann = dataio.write_annotations_jsonl(result.annotations, out_dir / "annotations.jsonl")
    n_seg = dataio.write_segments_jsonl(result.segments, out_dir / "segments.jsonl")
    _write_json(
        {
            "annotations": n_ann,
            "segments": n_seg,
            "row_errors": [str(e) for e in result.errors],
        },
        out_dir / "ingest_report.json",
    )
    print(f"ingested {n_ann} annotations, {n_seg} segments, {len(result.errors)} row errors")
    return EXIT_OK


def _cmd_prompt(args) -> int:
    segments = dataio.load_segments_jsonl(args.segments)
    mode = MaterialsMode.parse(args.mode)
    weights = resolve_weights(args.weights)
    if args.demos == "default":
        demos = default_demos()
    elif args.demos == "none":
        demos = ()
    else:
        from .prompts import DemoExample

        with open(args.demos, encoding="utf-8") as f:
            demos = tuple(DemoExample.from_dict(d) for d in json.load(f))
    template = PromptTemplate(mode=mode, name=args.template or "", demos=demos)
    prompts = [build_judge_prompt(seg, template, weights=weights) for seg in segments]
    n = dataio.write_prompts_jsonl(prompts, args.out)
    print(f"rendered {n} prompts with template {template.template_id}")
    return EXIT_OK


def _cmd_judge(args) -> int:
    prompts = dataio.load_prompts_jsonl(args.prompts)
    ep = EndpointConfig(
        base_url=args.endpoint,
        model=args.model,
        auth_env=args.auth_env,
        timeout=args.timeout,
        max_retries=args.max_retries,
        parallelism=args.parallelism,
        supports_top_k=args.send_top_k,
    )
    dp = DecodeParams(
        temperature=args.temperature,
        top_p=args.top_p,
        top_k=args.top_k,
        max_tokens=args.max_tokens,
    )
    new_records = run_batch(prompts, ep, dp, resume_path=args.out, retry_failures=args.retry_failures)
    failures = sum(1 for r in new_records if r.error is not None)
    print(f"dispatched {len(new_records)} requests ({failures} failures); output: {args.out}")
    return EXIT_OK if failures == 0 else EXIT_ENDPOINT


def _cmd_parse(args) -> int:
    records = sorted_records(dataio.load_judge_jsonl(args.records))
    strictness = Strictness(args.strictness)
    annotations, stats = _records_to_annotations(records, strictness)
    dataio.write_annotations_jsonl(annotations, args.out)
    if args.report:
        _write_json(stats, args.report)
    print(
        f"parsed {stats['parsed']}/{stats['records']} records "
        f"({stats['skipped']} skipped, {len(stats['failures'])} failed, {stats['warnings']} warnings)"
    )
    if stats["failures"] and strictness is Strictness.STRICT:
        return EXIT_DATA
    return EXIT_OK


def _cmd_score(args) -> int:
    weights = resolve_weights(args.weights)
    annotations = dataio.load_annotations_jsonl(args.annotations)
    matrix = rescore_matrix(annotations, weights)
    dataio.write_score_matrix(matrix, args.out)
    print(f"scored {matrix.n_systems} systems x {matrix.n_segments} segments -> {args.out}")
    return EXIT_OK


def _cmd_metaeval(args) -> int:
    weights = resolve_weights(args.weights)
    human = _load_matrix_any(args.human, weights, args.lang_pair, negate=args.negate_human)
    metric = _load_matrix_any(args.metric, weights, args.lang_pair)
    cfg = TestConfig(resamples=args.resamples, seed=args.seed)
    report = meta_report(human, metric, cfg)
    out_dir = Path(args.out_dir)
    emit_report(report, "json", out_dir / "metareport.json")
    emit_report(report, "table", out_dir / "metareport.txt")
    emit_report(report, "csv", out_dir / "metareport.csv")
    if args.figures:
        from .figures import render_meta_report

        render_meta_report(report, out_dir / "metareport.png")
    sys.stdout.write(report_table(report))
    return EXIT_OK


def _cmd_significance(args) -> int:
    weights = resolve_weights(args.weights)
    human = _load_matrix_any(args.human, weights, args.lang_pair)
    metric_a = _load_matrix_any(args.metric_a, weights, args.lang_pair)
    metric_b = _load_matrix_any(args.metric_b, weights, args.lang_pair)
    cfg = TestConfig(resamples=args.resamples, seed=args.seed)
    p = metric_significance(metric_a, metric_b, human, args.meta, cfg, sidedness=args.sidedness)
    result = {
        "meta": args.meta,
        "sidedness": args.sidedness,
        "p_value": p,
        "resamples": args.resamples,
        "seed": args.seed,
    }
    if args.out:
        _write_json(result, args.out)
    print(f"p = {p:.6f} ({args.meta}, {args.sidedness})")
    return EXIT_OK


def _report_values(path: str) -> dict[str, float]:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    avg = obj["avg"]
    return {"system_spa": avg["spa"] * 100, "segment_acc": avg["acc_eq_star"] * 100}


def _cmd_shapley(args) -> int:
    results: dict[str, AttributionResult] = {}
    if args.reports:
        src, ref, joint = (_report_values(p) for p in args.reports)
        for granularity, field in (("system", "system_spa"), ("segment", "segment_acc")):
            inp = AttributionInput(src[field], ref[field], joint[field])
            results[granularity] = shapley_mt(inp, empty_set_rule=args.empty_set_rule)
    else:
        if args.src is None or args.ref is None or args.joint is None:
            raise ConfigError("provide either --reports or all of --src/--ref/--joint")
        inp = AttributionInput(args.src, args.ref, args.joint)
        results["overall"] = shapley_mt(inp, empty_set_rule=args.empty_set_rule)

    for granularity, res in results.items():
        print(
            f"{granularity}: phi_source = {float(res.phi_source)}, "
            f"phi_reference = {float(res.phi_reference)}"
        )
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json({g: r.to_dict() for g, r in results.items()}, out_dir / "attribution.json")
        with open(out_dir / "attribution.csv", "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["granularity", "material", "contribution"])
            for g, r in results.items():
                writer.writerow([g, "source", float(r.phi_source)])
                writer.writerow([g, "reference", float(r.phi_reference)])
        if args.figures:
            from .figures import render_attribution

            render_attribution(results, out_dir / "attribution.png")
    return EXIT_OK


def _parse_breakpoints(spec: str) -> tuple[DifficultyBin, ...]:
    try:
        points = sorted({float(x) for x in spec.split(",")}, reverse=True)
    except ValueError as exc:
        raise ConfigError(f"bad --bins value {spec!r}: {exc}") from exc
    if not points or points[0] != 0.0:
        raise ConfigError("difficulty breakpoints must start at 0")
    bins = [DifficultyBin("0", 0.0, 0.0, closed_lower=True, closed_upper=True)]
    uppers = points  # descending: 0, -1, -5, ...
    for i in range(len(uppers) - 1):
        bins.append(DifficultyBin(f"[{uppers[i + 1]:g},{uppers[i]:g})", uppers[i + 1], uppers[i]))
    bins.append(DifficultyBin(f"(-inf,{uppers[-1]:g})", float("-inf"), uppers[-1], closed_lower=False))
    return tuple(bins)


def _cmd_analyze_budget(args) -> int:
    weights = resolve_weights(args.weights)
    human = _load_matrix_any(args.human, weights, args.lang_pair)
    records = sorted_records(dataio.load_judge_jsonl(args.records))
    bins = _parse_breakpoints(args.bins) if args.bins else DEFAULT_DIFFICULTY_BINS
    items = []
    unmatched = 0
    for record in records:
        if record.error is not None:
            continue
        answer = record.answer if record.think is not None else record.raw_completion
        try:
            judgment = parse_record_blocks(record.think, answer, Strictness.LENIENT)
        except ParseError:
            unmatched += 1
            continue
        model_score = score_annotation(judgment.annotation_for(record.key), weights).value
        try:
            human_score = human.cell(record.key.system_id, record.key.item)
        except DataError:
            human_score = None
        if human_score is None:
            unmatched += 1
            continue
        items.append((record, model_score, human_score))
    if not items:
        raise DataError("no records could be matched to human scores")
    profile = budget_by_difficulty(items, bins=bins, tau=args.tau)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells_json = {
        f"{label}|{tag}": vars(cell) for (label, tag), cell in sorted(profile.cells.items())
    }
    _write_json({"tau": args.tau, "cells": cells_json, "unmatched": unmatched},
                out_dir / "budget_profile.json")
    with open(out_dir / "budget_profile.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin", "alignment", "count", "min", "q1", "median", "q3", "max"])
        for (label, tag), cell in sorted(profile.cells.items()):
            writer.writerow([label, tag, cell.count, cell.minimum, cell.q1, cell.median,
                             cell.q3, cell.maximum])
    if args.figures:
        from .figures import render_budget_profile

        render_budget_profile(profile, out_dir / "budget_profile.png")
    print(f"profiled {len(items)} records across {len(bins)} difficulty bins -> {out_dir}")
    return EXIT_OK


def _cmd_analyze_distribution(args) -> int:
    weights = resolve_weights(args.weights)
    human = _load_matrix_any(args.human, weights, args.lang_pair, negate=args.negate_human)
    metric = _load_matrix_any(args.metric, weights, args.lang_pair)
    if args.bins:
        edges = [float(x) for x in args.bins.split(",")]
        report = distribution_report(metric, human, bin_edges=edges)
    else:
        report = distribution_report(metric, human)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(vars(report), out_dir / "distribution.json")
    with open(out_dir / "distribution.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_low", "bin_high", "human_density", "metric_density"])
        for i in range(len(report.human_density)):
            writer.writerow([report.bin_edges[i], report.bin_edges[i + 1],
                             report.human_density[i], report.metric_density[i]])
    if args.figures:
        from .figures import render_distribution

        render_distribution(report, out_dir / "distribution.png")
    print(
        f"zero rates: human {report.human_zero_rate:.3f}, metric {report.metric_zero_rate:.3f}, "
        f"overestimation index {report.overestimation_index:+.3f}"
    )
    return EXIT_OK


def _cmd_analyze_typology(args) -> int:
    judge_groups = annotations_by_key(_load_annotations_any(args.judge, args.lang_pair))
    human_groups = annotations_by_key(_load_annotations_any(args.human, args.lang_pair))

    def merge(groups):
        from .types import ErrorAnnotation

        merged = {}
        for key, anns in groups.items():
            spans = tuple(s for ann in anns for s in ann.spans)
            merged[key] = ErrorAnnotation(key=key, spans=spans)
        return merged

    counts = discrepancy_typology(merge(judge_groups), merge(human_groups))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        {f"{sev}|{cat}": n for (sev, cat), n in sorted(counts.items())},
        out_dir / "typology.json",
    )
    with open(out_dir / "typology.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["severity", "category", "count"])
        for (sev, cat), n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
            writer.writerow([sev, cat, n])
    if args.figures:
        from .figures import render_typology

        render_typology(counts, out_dir / "typology.png")
    print(f"{sum(counts.values())} discrepancies across {len(counts)} error types -> {out_dir}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    import dataclasses

    weights = resolve_weights(args.weights)
    mode = MaterialsMode.parse(args.mode)
    template = PromptTemplate(mode=mode, name=f"thinmqm-{mode.value}")
    result = dataio.load_mqm_tsv(args.mqm_tsv, lang_pair=args.lang_pair)
    segments = {seg.key: seg for seg in result.segments}
    if args.ref_system:
        segments = _attach_references(segments, args.ref_system)
    filters = {
        "drop_empty_source": bool(args.drop_empty_source),
        "max_source_chars": args.max_source_chars,
        "ref_system": args.ref_system,
    }
    groups: dict[str, list] = {}
    dropped = 0
    for ann in result.annotations:
        segment = segments.get(ann.key)
        if segment is None:
            dropped += 1
            continue
        if args.ref_system and segment.system_id == args.ref_system:
            dropped += 1  # the reference itself is not a training hypothesis
            continue
        if args.drop_empty_source and not segment.source.strip():
            dropped += 1
            continue
        if args.max_source_chars is not None and len(segment.source) > args.max_source_chars:
            dropped += 1
            continue
        if mode.needs_reference and not segment.reference:
            dropped += 1
            continue
        instance = synthesize_trajectory(segment, ann, weights, mode, template)
        instance = dataclasses.replace(instance, provenance={**instance.provenance, "filters": filters})
        groups.setdefault(segment.lang_pair, []).append(instance)
    if not groups:
        raise DataError("no training instances could be synthesized")
    pre_sizes = dataset_sizes(groups)
    if args.balance:
        groups = balance_dataset(groups, target_n=args.target_n, seed=args.seed)
    post_sizes = dataset_sizes(groups)
    instances = [inst for lang in sorted(groups) for inst in groups[lang]]
    write_dataset(instances, args.out)
    report = {
        "mode": mode.value,
        "seed": args.seed,
        "filters": filters,
        "dropped": dropped,
        "before_balance": pre_sizes,
        "after_balance": post_sizes,
    }
    if args.report:
        _write_json(report, args.report)
    print(f"synthesized {post_sizes['total']} instances -> {args.out}")
    return EXIT_OK


def _attach_references(segments: dict, ref_system: str) -> dict:
    """Use one system's targets as the reference for every other system."""
    import dataclasses

    refs = {
        key.item: seg.hypothesis for key, seg in segments.items() if key.system_id == ref_system
    }
    if not refs:
        raise DataError(f"reference system {ref_system!r} not found in the table")
    updated = {}
    for key, seg in segments.items():
        ref = refs.get(key.item)
        updated[key] = seg if ref is None else dataclasses.replace(seg, reference=ref)
    return updated


def _cmd_validate(args) -> int:
    instances = read_dataset(args.dataset)
    weights = resolve_weights(args.weights)
    report = validation_report(instances, weights)
    if args.report:
        _write_json(report, args.report)
    bad = report["instances"] - report["clean"]
    print(
        f"validated {report['instances']} instances: {report['clean']} clean, "
        f"{bad} with violations {report['violations_by_kind']}"
    )
    if bad and args.fail_on_violations:
        return EXIT_DATA
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "prompt": _cmd_prompt,
    "judge": _cmd_judge,
    "parse": _cmd_parse,
    "score": _cmd_score,
    "metaeval": _cmd_metaeval,
    "significance": _cmd_significance,
    "shapley": _cmd_shapley,
    "synth": _cmd_synth,
    "validate": _cmd_validate,
}


def dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command == "analyze":
        if getattr(args, "kind", None) is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        handler = {
            "budget": _cmd_analyze_budget,
            "distribution": _cmd_analyze_distribution,
            "typology": _cmd_analyze_typology,
        }[args.kind]
    else:
        handler = _COMMANDS[args.command]
    return handler(args)


def main(argv=None) -> int:
    try:
        return dispatch(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EndpointError as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MqmJudgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
