"""Command-line entry point: ``outline-usage <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 I/O or parse error, 3 endpoint
failure, 4 metric preconditions failed for some document under ``--strict``.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpus import (
    CorpusFormatError,
    Skip,
    load_corpus,
    load_patterns,
    preprocess,
    read_documents,
)
from .metrics import EvalSettings, MetricReport, dv, evaluate_corpus, parse_metric_names, pd
from .pipeline import (
    API_KEY_ENV,
    ChatClient,
    Checkpoint,
    EndpointError,
    GenerationAborted,
    GenerationConfig,
    HttpTransport,
    RecordingTransport,
    ReplayTransport,
    run_generation,
)
from .report import HeatmapSpec, render_heatmap, render_table
from .similarity import BACKENDS, DEFAULT_EPSILON, EmbeddingTable, SimilarityBackend, alignment_matrix
from .synth import expand_seeds, load_profiles, sweep_rows, rows_to_csv, synthesize
from .text_core import load_abbreviations

log = logging.getLogger("outline_usage")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ENDPOINT, EXIT_STRICT = 0, 1, 2, 3, 4

REQUIRED = {
    "preprocess": ("input", "out"),
    "generate": ("input", "out"),
    "align": ("input", "out_dir"),
    "eval": ("input",),
    "synth": ("profile", "out"),
    "report": ("tables", "out"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=BACKENDS, default="unigram-f1")
    p.add_argument("--embeddings", metavar="FILE", help="JSONL embedding table for embedding-cosine")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="outline-usage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    subs: dict[str, _Parser] = {}

    p = subs["preprocess"] = sub.add_parser("preprocess", help="raw article/highlights JSONL -> documents JSONL")
    p.add_argument("--in", dest="input", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--min-words", type=int, default=64)
    p.add_argument("--max-sentences", type=int, default=40)
    p.add_argument("--patterns", metavar="FILE", help="boilerplate pattern file")
    p.add_argument("--abbreviations", metavar="FILE")
    p.add_argument("--continue-on-error", action="store_true", help="skip malformed input lines")

    p = subs["generate"] = sub.add_parser(
        "generate",
        help="two-stage outline -> text generation",
        epilog=f"The API key, if any, is read from ${API_KEY_ENV}.",
    )
    p.add_argument("--in", dest="input", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--endpoint", default="http://localhost:8000/v1")
    p.add_argument("--model", default="gpt-3.5-turbo")
    p.add_argument("--mode", choices=("all-in", "separate"), default="all-in")
    p.add_argument("--bullets", type=int, default=3)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--backoff", default="1,2,4", help="comma-separated retry delays in seconds")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outline-template", metavar="FILE")
    p.add_argument("--allin-template", metavar="FILE")
    p.add_argument("--segment-template", metavar="FILE")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--replay", metavar="FILE", help="serve responses from a replay file")
    g.add_argument("--record", metavar="FILE", help="append live exchanges to a replay file")
    p.add_argument("--checkpoint", metavar="FILE", help="completed-id file (default: OUT.done)")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint")
    p.add_argument("--trace", metavar="FILE", help="request trace JSONL (default: OUT.trace.jsonl)")

    p = subs["align"] = sub.add_parser("align", help="per-document alignment heatmaps and matrices")
    p.add_argument("--in", dest="input", metavar="FILE")
    p.add_argument("--out-dir", metavar="DIR")
    _add_backend_flags(p)
    p.add_argument("--normalize", choices=("row", "global"), default="row")

    p = subs["eval"] = sub.add_parser("eval", help="ROUGE/BLEU/DV/PD over a documents JSONL")
    p.add_argument("--in", dest="input", metavar="FILE")
    _add_backend_flags(p)
    p.add_argument("--metrics", default="r1,r2,rl,bleu1,bleu2,bleu4,dv,pd")
    p.add_argument("--out", metavar="FILE", default="report.json")
    p.add_argument("--csv", metavar="FILE")
    p.add_argument("--label", help="row label written to the CSV")
    p.add_argument("--rouge-measure", choices=("f1", "recall", "precision"), default="f1")
    p.add_argument("--stem", action="store_true", help="Porter-stem tokens for ROUGE/BLEU (needs nltk)")
    p.add_argument("--bleu-smoothing", action="store_true", help="add-one smoothing for BLEU orders > 1")
    p.add_argument("--strict", action="store_true", help="exit 4 if any document is skipped")
    p.add_argument("--workers", type=int, default=1)

    p = subs["synth"] = sub.add_parser("synth", help="synthetic corpora with controlled outline usage")
    p.add_argument("--profile", metavar="FILE", help="JSON profile or list of profiles")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", metavar="DIR")
    _add_backend_flags(p)

    p = subs["report"] = sub.add_parser("report", help="Markdown/CSV table from eval reports")
    p.add_argument("--tables", nargs="+", metavar="REPORT_JSON")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--out", metavar="DIR")

    for p in subs.values():
        p.add_argument("--config", metavar="FILE", help="JSON file of flag defaults; flags win")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return parser, subs


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(cfg, dict):
            raise UsageError(f"config {args.config} must be a JSON object")
        sp = subs[args.command]
        dests = {a.dest for a in sp._actions}
        defaults = {}
        for key, value in cfg.items():
            dest = "input" if key in ("in", "input") else key.replace("-", "_")
            if dest not in dests or dest in ("config", "help"):
                raise UsageError(f"unknown key {key!r} in config {args.config}")
            defaults[dest] = value
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.command == "generate" and args.replay and args.record:
        raise UsageError("outline-usage generate: --replay and --record are mutually exclusive")
    missing = [d for d in REQUIRED[args.command] if getattr(args, d, None) in (None, [])]
    if missing:
        flags = ", ".join("--" + ("in" if d == "input" else d.replace("_", "-")) for d in missing)
        raise UsageError(f"outline-usage {args.command}: missing required {flags}\n"
                         + subs[args.command].format_usage())
    return args


def _dump_config(args: argparse.Namespace, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}
    path.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _backend(args) -> SimilarityBackend:
    table = EmbeddingTable.load(args.embeddings) if args.embeddings else None
    return SimilarityBackend(args.backend, table)


def _safe_name(doc_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", doc_id) or "_"


# --- subcommands -----------------------------------------------------------

def cmd_preprocess(args) -> int:
    out = Path(args.out)
    patterns = load_patterns(args.patterns)
    abbrevs = load_abbreviations(args.abbreviations)
    _dump_config(args, out.with_name(out.name + ".config.json"))
    errors = []
    counts = {"retained": 0}
    with open(out, "w", encoding="utf-8") as fh:
        for rec in load_corpus(args.input, "raw", strict=not args.continue_on_error, on_error=errors.append):
            res = preprocess(rec, args.min_words, args.max_sentences, patterns, abbrevs)
            if isinstance(res, Skip):
                counts[res.reason] = counts.get(res.reason, 0) + 1
                continue
            fh.write(res.to_json() + "\n")
            counts["retained"] += 1
    if errors:
        counts["malformed"] = len(errors)
        for e in errors:
            log.warning("%s", e)
    print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


def cmd_generate(args) -> int:
    out = Path(args.out)
    backoff = tuple(float(x) for x in str(args.backoff).split(",") if x.strip())
    templates = {}
    for name in ("outline_template", "allin_template", "segment_template"):
        path = getattr(args, name)
        if path:
            templates[name] = Path(path).read_text(encoding="utf-8")
    try:
        config = GenerationConfig(
            endpoint=args.endpoint,
            model=args.model,
            mode=args.mode,
            outline_bullets=args.bullets,
            temperature=args.temperature,
            max_tokens=args.max_tokens,
            concurrency=args.concurrency,
            retries=args.retries,
            backoff=backoff,
            timeout=args.timeout,
            seed=args.seed,
            **templates,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e

    ckpt_path = Path(args.checkpoint) if args.checkpoint else out.with_name(out.name + ".done")
    trace_path = Path(args.trace) if args.trace else out.with_name(out.name + ".trace.jsonl")
    _dump_config(args, out.with_name(out.name + ".config.json"))
    if not args.resume:
        for p in (ckpt_path, trace_path):
            p.unlink(missing_ok=True)
        out.write_text("", encoding="utf-8")
    checkpoint = Checkpoint(ckpt_path)
    if args.resume and out.exists():
        # ids already written but not yet checkpointed when the previous run died
        for doc in read_documents(out, strict=False):
            checkpoint.done.add(doc.id)

    if args.replay:
        transport = ReplayTransport(args.replay)
    else:
        transport = HttpTransport(args.endpoint, timeout=args.timeout)
        if args.record:
            transport = RecordingTransport(transport, args.record)
    client = ChatClient(transport, config)

    n_ok = n_failed = 0
    with open(out, "a", encoding="utf-8") as fh, open(trace_path, "a", encoding="utf-8") as th:
        try:
            for res in run_generation(read_documents(args.input), config, client, checkpoint):
                th.write(json.dumps(res.trace.to_dict(), ensure_ascii=False) + "\n")
                if res.ok:
                    fh.write(res.document.to_json() + "\n")
                    fh.flush()
                    n_ok += 1
                else:
                    n_failed += 1
                    log.warning("document %s failed: %s", res.source.id, res.error)
        except GenerationAborted as e:
            print(json.dumps({"generated": n_ok, "failed": n_failed, "aborted": str(e)}), file=sys.stderr)
            return EXIT_ENDPOINT
    print(json.dumps({"generated": n_ok, "failed": n_failed}))
    return EXIT_OK


def cmd_align(args) -> int:
    out_dir = Path(args.out_dir)
    _dump_config(args, out_dir / "config.json")
    backend = _backend(args)
    n = 0
    for doc in read_documents(args.input):
        if not doc.outline or not doc.text:
            log.warning("document %s has an empty outline or text; skipped", doc.id)
            continue
        mat = alignment_matrix(backend, doc.outline, doc.text, args.epsilon)
        obj = {"id": doc.id, **mat.to_dict()}
        if len(doc.outline) >= 2:
            obj["dv"], obj["pd"] = dv(mat), pd(mat)
        name = _safe_name(doc.id)
        (out_dir / f"{name}.json").write_text(json.dumps(obj) + "\n", encoding="utf-8")
        svg = render_heatmap(HeatmapSpec(mat.distributions, normalize=args.normalize, title=doc.id))
        (out_dir / f"{name}.svg").write_text(svg, encoding="utf-8")
        n += 1
    print(json.dumps({"aligned": n}))
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        metrics = parse_metric_names(args.metrics)
    except ValueError as e:
        raise UsageError(str(e)) from e
    settings = EvalSettings(
        backend=_backend(args),
        epsilon=args.epsilon,
        metrics=metrics,
        rouge_measure=args.rouge_measure,
        stem=args.stem,
        bleu_smoothing=args.bleu_smoothing,
    )
    out = Path(args.out)
    _dump_config(args, out.with_name(out.name + ".config.json"))
    report = evaluate_corpus(read_documents(args.input), settings, workers=args.workers)
    out.write_text(report.to_json(), encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(args.label), encoding="utf-8", newline="")
    print(json.dumps({"documents": report.n_documents, "skipped": report.skip_counts()}, sort_keys=True))
    if args.strict and report.skipped:
        return EXIT_STRICT
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = Path(args.out)
    profiles = expand_seeds(load_profiles(args.profile), args.seeds)
    _dump_config(args, out_dir / "config.json")
    with open(out_dir / "documents.jsonl", "w", encoding="utf-8") as fh:
        for p in profiles:
            fh.write(synthesize(p).to_json() + "\n")
    rows = sweep_rows(profiles, _backend(args), args.epsilon)
    (out_dir / "sweep.csv").write_text(rows_to_csv(rows), encoding="utf-8", newline="")
    print(json.dumps({"documents": len(profiles)}))
    return EXIT_OK


def cmd_report(args) -> int:
    labels = args.labels or [Path(t).stem for t in args.tables]
    if len(labels) != len(args.tables):
        raise UsageError(f"{len(args.tables)} tables but {len(labels)} labels")
    out_dir = Path(args.out)
    _dump_config(args, out_dir / "config.json")
    reports = [MetricReport.from_dict(json.loads(Path(t).read_text(encoding="utf-8"))) for t in args.tables]
    md, csv_text = render_table(reports, labels)
    (out_dir / "table.md").write_text(md, encoding="utf-8")
    (out_dir / "table.csv").write_text(csv_text, encoding="utf-8", newline="")
    sys.stdout.write(md)
    return EXIT_OK


COMMANDS = {
    "preprocess": cmd_preprocess,
    "generate": cmd_generate,
    "align": cmd_align,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except (EndpointError, GenerationAborted) as e:
        print(f"endpoint failure: {e}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (OSError, CorpusFormatError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
