"""Command-line entry point. Every subcommand reads and writes JSONL.

Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.
Errors are reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import collections
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from . import f1, infer, ingest, metaeval, prompts, scores, spans, synth
from .core import ErrorSpan, Orientation, QualityScore, Record, ScoreType, dumps, iter_jsonl, read_records, write_jsonl
from .errors import DataError, MtevalError, UsageError

logger = logging.getLogger("mteval")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _io(p: argparse.ArgumentParser):
    p.add_argument("-i", "--input", default="-", help="input file (default: stdin)")
    p.add_argument("-o", "--output", default="-", help="output file (default: stdout)")


def _emit_json(obj: Any, dst: str):
    text = json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    if dst == "-":
        sys.stdout.write(text)
    else:
        Path(dst).write_text(text, encoding="utf-8")


def _read_lines(src: str) -> list[str]:
    if src == "-":
        return sys.stdin.read().splitlines()
    return Path(src).read_text(encoding="utf-8").splitlines()


# --- subcommands ------------------------------------------------------------


def cmd_ingest(args) -> int:
    filt = ingest.FILTER_PRESETS[args.filter_preset]
    if args.format == "mqm-tsv":
        if not args.lp:
            raise UsageError("--lp is required for --format mqm-tsv")
        stats: collections.Counter = collections.Counter()
        anns = ingest.parse_mqm_tsv(_read_lines(args.input), args.lp, stats=stats)
        records = ingest.mqm_records(anns, year=args.year, lp=args.lp)
        records, removed = ingest.apply_filters(records, filt)
        logger.info("mqm ingest: %s, %d record(s) filtered out", dict(sorted(stats.items())), removed)
        write_jsonl((r.to_dict() for r in records), args.output)
    else:
        delimiter = args.delimiter or ("," if args.input.endswith(".csv") else "\t")
        ratings = ingest.parse_da_tsv(_read_lines(args.input), delimiter, lp=args.lp, year=args.year)
        ratings, removed = ingest.apply_filters(ratings, filt)
        ratings = ingest.zscore_per_rater(ratings, on_degenerate=args.on_degenerate, recompute=not args.keep_z)
        logger.info("da ingest: %d rating(s) kept, %d filtered out", len(ratings), removed)
        write_jsonl((r.to_dict() for r in ratings), args.output)
    return 0


def cmd_prompts(args) -> int:
    table = prompts.DialectTable.from_file(args.dialects) if args.dialects else prompts.DEFAULT_TABLE
    score_type = None if args.score_type == "none" else ScoreType(args.score_type)
    mode = prompts.PromptMode(args.mode)
    out = []
    for rec in read_records(args.input):
        seg = rec.segment
        if args.task == "score":
            text = prompts.render_metricx_prompt(seg, mode, score_type, table)
            pr = prompts.PromptRecord(seg.key, mode.value, score_type, text, "score")
        else:
            text = prompts.render_gemspaneval_prompt(seg, args.with_reference, table)
            pr = prompts.PromptRecord(seg.key, "src_and_ref" if args.with_reference else "src_only", None, text, "spans")
        out.append(pr.to_dict())
    write_jsonl(out, args.output)
    return 0


def cmd_synth(args) -> int:
    names = [c.strip() for c in args.categories.split(",") if c.strip()]
    try:
        cats = [synth.CLI_NAMES[n] for n in names]
    except KeyError as e:
        raise UsageError(f"unknown synthetic category {e.args[0]!r}; choose from {sorted(synth.CLI_NAMES)}") from None
    ws = [float(w) for w in args.weights.split(",")] if args.weights else [1.0] * len(cats)
    if len(ws) != len(cats):
        raise UsageError("--weights needs one value per category")
    segs = [r.segment for r in read_records(args.input)]
    examples = synth.generate_mixture(segs, dict(zip(cats, ws)), args.seed)
    tags = [ScoreType.MQM, ScoreType.ESA] if args.both_score_types else [ScoreType.MQM]
    write_jsonl((ex.to_record(t).to_dict() for ex in examples for t in tags), args.output)
    return 0


def _validator(task: str):
    if task == "score":
        return infer.validate_score
    return lambda text: spans.parse_span_response(text, spans.LENIENT)


def cmd_infer(args) -> int:
    chain = infer.FallbackChain.from_file(args.config)
    rows = list(iter_jsonl(args.input))
    recs = [prompts.PromptRecord.from_dict(r) for r in rows]
    failed = 0
    with infer.Client() as client:
        results = client.run_batch(recs, chain, _validator(args.task), resamples=args.resamples)
    out = []
    for row, res in zip(rows, results):
        item = {k: row.get(k) for k in ("system", "doc_id", "seg_id", "task", "mode", "score_type")}
        if isinstance(res, infer.AllEndpointsFailed):
            failed += 1
            item.update(response=None, model=None, error=str(res), attempts=[list(a) for a in res.attempts])
        else:
            item.update(response=res[0], model=res[1])
        out.append(item)
    write_jsonl(out, args.output)
    if failed:
        logger.error("%d prompt(s) failed on every endpoint", failed)
        return infer.TransportError.exit_code
    return 0


def cmd_parse_spans(args) -> int:
    strictness = spans.STRICT if args.strict else spans.LENIENT
    segments = {r.segment.key: r for r in read_records(args.segments)} if args.segments else None
    out = []
    for row in iter_jsonl(args.input):
        row = dict(row)
        response = row.pop("response", None)
        try:
            parsed = spans.parse_span_response(response or "", strictness)
            error = None
        except DataError as e:
            parsed, error = [], f"{type(e).__name__}: {e}"
        if segments is not None:
            key = (row.get("system") or "", str(row["doc_id"]), str(row["seg_id"]))
            if key not in segments:
                raise DataError(f"no segment record for {'/'.join(key)}")
            extra = {"model": row.get("model")}
            if error:
                extra["parse_error"] = error
            out.append(Record(segments[key].segment, tuple(parsed), None, extra).to_dict())
        else:
            row["spans"] = [s.to_dict() for s in parsed]
            if error:
                row["parse_error"] = error
            out.append(row)
    write_jsonl(out, args.output)
    return 0


def _locate_all(rec: Record, fallback: bool, strict: bool, stats: collections.Counter) -> Record:
    seg = rec.segment
    located = []
    for sp in rec.spans:
        text = (seg.source if sp.is_source_error else seg.hypothesis) or ""
        if sp.offsets is not None and text[sp.offsets[0] : sp.offsets[1]] == sp.span:
            located.append(sp)
            stats["kept"] += 1
            continue
        try:
            start, end = spans.locate_span(text, sp, fallback_to_span=fallback)
        except DataError:
            if strict:
                raise
            stats["unlocated"] += 1
            logger.warning("%s: could not locate span %r", "/".join(seg.key), sp.span)
            continue
        located.append(ErrorSpan(sp.span, sp.severity, sp.category, sp.is_source_error, sp.span_with_context, (start, end)))
        stats["located"] += 1
    return rec.with_spans(located)


def cmd_locate(args) -> int:
    stats: collections.Counter = collections.Counter()
    out = [_locate_all(r, args.fallback_to_span, args.strict, stats).to_dict() for r in read_records(args.input)]
    logger.info("locate: %s", dict(stats))
    write_jsonl(out, args.output)
    return 0


def _policy(args) -> spans.ContextExpansionPolicy:
    langs = frozenset(x.strip().lower() for x in args.char_languages.split(",") if x.strip())
    return spans.ContextExpansionPolicy(args.unit, langs)


def cmd_annotate_context(args) -> int:
    policy = _policy(args)
    out = []
    for rec in read_records(args.input):
        out.append(rec.with_spans(spans.annotate_training_spans(rec.segment, rec.spans, policy)).to_dict())
    write_jsonl(out, args.output)
    return 0


def _span_texts(records: Sequence[Record]):
    for rec in records:
        seg = rec.segment
        tgt = [s for s in rec.spans if not s.is_source_error]
        src = [s for s in rec.spans if s.is_source_error]
        if tgt:
            yield seg.hypothesis or "", tgt
        if src:
            yield seg.source or "", src


def cmd_span_stats(args) -> int:
    records = read_records(args.input)
    frac_spans, frac_chars = spans.span_uniqueness_stats(_span_texts(records))
    n = sum(len(r.spans) for r in records)
    _emit_json({"n_spans": n, "non_unique_span_fraction": frac_spans, "non_unique_char_fraction": frac_chars}, args.output)
    return 0


def _labels(rec: Record, stats: collections.Counter) -> f1.CharLabeling:
    rec = _locate_all(rec, fallback=False, strict=False, stats=stats)
    return f1.label_characters(rec.segment.hypothesis or "", rec.spans)


def cmd_score_spans(args) -> int:
    gold = {r.segment.key: r for r in read_records(args.gold)}
    pred = {r.segment.key: r for r in read_records(args.pred)}
    for key in pred.keys() - gold.keys():
        logger.warning("prediction for %s has no gold record; ignored", "/".join(key))
    stats: collections.Counter = collections.Counter()
    pairs, per_seg = [], []
    for key, g in gold.items():
        gl = _labels(g, stats)
        p = pred.get(key)
        if p is not None and (p.segment.hypothesis or "") != (g.segment.hypothesis or ""):
            raise DataError(f"{'/'.join(key)}: predicted and gold hypotheses differ")
        pl = _labels(p, stats) if p is not None else (None,) * len(gl)
        prf = f1.segment_char_f1(pl, gl, args.partial_credit)
        pairs.append((pl, gl))
        per_seg.append({"system": key[0], "doc_id": key[1], "seg_id": key[2], **prf._asdict()})
    corpus = f1.corpus_char_f1(pairs, args.partial_credit, macro=args.macro)
    _emit_json({"corpus": corpus._asdict(), "averaging": "macro" if args.macro else "micro", "segments": per_seg, "counts": dict(stats)}, args.output)
    return 0


def cmd_mqm_score(args) -> int:
    w = scores.SeverityWeights(args.w_minor, args.w_major, args.w_critical)
    out = []
    for rec in read_records(args.input):
        value = scores.mqm_score_from_spans(rec.spans, w)
        rec = Record(rec.segment, rec.spans, QualityScore(value, ScoreType.MQM, Orientation.LOWER_BETTER), rec.extra)
        out.append(rec.to_dict())
    write_jsonl(out, args.output)
    return 0


def cmd_rescale(args) -> int:
    rows = list(iter_jsonl(args.input))
    if args.op == "output":
        st = ScoreType(args.score_type)
        out = []
        for row in rows:
            if "prediction" not in row:
                raise DataError("rows need a 'prediction' field for --op output")
            row = dict(row)
            row["score"] = scores.rescale_output(float(row["prediction"]), st).to_dict()
            out.append(row)
        write_jsonl(out, args.output)
        return 0

    by_seg: dict[tuple, list[ingest.RatingRecord]] = collections.defaultdict(list)
    for row in rows:
        r = ingest.RatingRecord.from_dict(row)
        by_seg[(r.lp, r.year, r.system, r.doc_id, r.seg_id)].append(r)
    out = []
    for (lp, year, system, doc_id, seg_id), rs in by_seg.items():
        item: dict[str, Any] = {"lp": lp, "year": year, "system": system, "doc_id": doc_id, "seg_id": seg_id, "n_ratings": len(rs)}
        if args.op == "stage1":
            zs = [r.z_score for r in rs if r.z_score is not None]
            item["label"] = scores.aggregate_stage1_label(zs)
        else:
            raw = math.fsum(r.raw_score for r in rs) / len(rs)
            item["score"] = {"value": scores.da_to_mqm_scale(raw), "score_type": "MQM", "orientation": "lower_better"}
        out.append(item)
    write_jsonl(out, args.output)
    return 0


def cmd_metaeval(args) -> int:
    human = metaeval.matrices_from_rows(iter_jsonl(args.human))
    metric = metaeval.matrices_from_rows(iter_jsonl(args.metric))
    levels = ("segment", "system") if args.level == "both" else (args.level,)
    report = metaeval.meta_evaluate(human, metric, levels, args.resamples, args.seed, args.workers)
    if not report:
        raise DataError("human and metric files share no language pair")
    out = {"levels": list(levels), "resamples": args.resamples, "seed": args.seed, "lps": report}
    if len(levels) == 2:
        out["w_sys"] = args.w_sys
        out["selection_score"] = metaeval.checkpoint_selection_score(
            [r["segment_accuracy"] for r in report.values()], [r["spa"] for r in report.values()], args.w_sys
        )
    _emit_json(out, args.output)
    return 0


def cmd_select_checkpoint(args) -> int:
    lps = [x for x in args.lps.split(",") if x] if args.lps else None
    results = {}
    for path in sorted(Path(args.reports).glob("*.json")):
        rep = json.loads(path.read_text(encoding="utf-8"))
        per_lp = rep.get("lps", rep)
        use = lps or sorted(per_lp)
        missing = [lp for lp in use if lp not in per_lp]
        if missing:
            raise DataError(f"{path.name}: no results for {missing}")
        seg = [per_lp[lp]["segment_accuracy"] for lp in use]
        sys_ = [per_lp[lp]["spa"] for lp in use]
        results[path.stem] = metaeval.checkpoint_selection_score(seg, sys_, args.w_sys)
    if not results:
        raise DataError(f"no *.json reports in {args.reports}")
    best = max(sorted(results), key=lambda k: results[k])
    _emit_json({"w_sys": args.w_sys, "scores": results, "best": best}, args.output)
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mteval", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="parse WMT MQM/DA exports into JSONL")
    _io(p)
    p.add_argument("--format", choices=["mqm-tsv", "da-tsv"], required=True)
    p.add_argument("--lp", help="language pair, e.g. en-de (required for mqm-tsv)")
    p.add_argument("--year", type=int)
    p.add_argument("--filter-preset", choices=sorted(ingest.FILTER_PRESETS), default="none")
    p.add_argument("--delimiter", help="DA file delimiter (default: tab, comma for .csv)")
    p.add_argument("--keep-z", action="store_true", help="pass through existing z_score values")
    p.add_argument("--on-degenerate", choices=["drop", "raise"], default="drop")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("prompts", help="render model inputs")
    _io(p)
    p.add_argument("--task", choices=["score", "spans"], default="score")
    p.add_argument("--mode", choices=[m.value for m in prompts.PromptMode], default="src_and_ref")
    p.add_argument("--score-type", choices=["MQM", "ESA", "none"], default="MQM")
    p.add_argument("--with-reference", action="store_true")
    p.add_argument("--dialects", help="TOML/JSON dialect table")
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("synth", help="generate synthetic bad translations")
    _io(p)
    p.add_argument("--categories", default="under,over,unrelated,punct")
    p.add_argument("--weights", help="comma-separated weights, one per category")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--both-score-types", action="store_true", help="emit MQM- and ESA-tagged copies")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("infer", help="query completion endpoints with fallback")
    _io(p)
    p.add_argument("--task", choices=["score", "spans"], required=True)
    p.add_argument("--config", required=True, help="TOML/JSON endpoint chain")
    p.add_argument("--resamples", type=int, default=0, help="extra tries per model before falling back")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("parse-spans", help="parse model responses into error spans")
    _io(p)
    p.add_argument("--segments", help="canonical JSONL to join on (system, doc_id, seg_id)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strict", action="store_true")
    g.add_argument("--lenient", action="store_true", help="(default)")
    p.set_defaults(func=cmd_parse_spans)

    p = sub.add_parser("locate", help="resolve span offsets")
    _io(p)
    p.add_argument("--fallback-to-span", action="store_true", help="search the bare span if its context is absent")
    p.add_argument("--strict", action="store_true", help="fail instead of dropping unlocatable spans")
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("annotate-context", help="add span_with_context to non-unique gold spans")
    _io(p)
    p.add_argument("--unit", choices=[spans.WORD, spans.CHARACTER], default=spans.WORD)
    p.add_argument("--char-languages", default="zh,ja", help="languages expanded by character")
    p.set_defaults(func=cmd_annotate_context)

    p = sub.add_parser("span-stats", help="share of non-unique spans")
    _io(p)
    p.set_defaults(func=cmd_span_stats)

    p = sub.add_parser("score-spans", help="character-level F1 of predicted spans")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--partial-credit", type=float, default=0.5)
    p.add_argument("--macro", action="store_true")
    p.set_defaults(func=cmd_score_spans)

    p = sub.add_parser("mqm-score", help="MQM score from error spans")
    _io(p)
    p.add_argument("--w-minor", type=float, default=1.0)
    p.add_argument("--w-major", type=float, default=5.0)
    p.add_argument("--w-critical", type=float, default=5.0)
    p.set_defaults(func=cmd_mqm_score)

    p = sub.add_parser("rescale", help="score transformations")
    _io(p)
    p.add_argument("--op", choices=["stage1", "da-to-mqm", "output"], required=True)
    p.add_argument("--score-type", choices=["MQM", "ESA"], default="MQM", help="for --op output")
    p.set_defaults(func=cmd_rescale)

    p = sub.add_parser("metaeval", help="meta-evaluate metric scores against human scores")
    p.add_argument("--human", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--level", choices=["segment", "system", "both"], default="both")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="overrides the global --seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--w-sys", type=float, default=0.2, help="system-level weight in selection_score")
    p.set_defaults(func=cmd_metaeval)

    p = sub.add_parser("select-checkpoint", help="rank checkpoints from metaeval reports")
    p.add_argument("--reports", required=True, help="directory of per-checkpoint report JSON files")
    p.add_argument("--lps", help="comma-separated language pairs to average (default: all)")
    p.add_argument("--w-sys", type=float, default=0.2)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_select_checkpoint)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
        logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
        config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
        logger.info("config %s", dumps(config))
        return args.func(args)
    except MtevalError as e:
        sys.stderr.write(dumps({"error": type(e).__name__, "message": str(e), "exit_code": e.exit_code}) + "\n")
        return e.exit_code
    except (OSError, ValueError) as e:
        sys.stderr.write(dumps({"error": type(e).__name__, "message": str(e), "exit_code": 2}) + "\n")
        return 2


def main():
    sys.exit(run())
