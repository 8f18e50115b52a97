"""Command-line entry point: fit, decide, eval, sweep (plus manifest check).

Exit codes: 0 success, 1 validation error (flags, schemas, id mismatches),
2 runtime error (backend failures, fit errors).  Diagnostics go to stderr;
stdout carries only the summary lines.  TOT_LOG=error|warn|info|debug
controls verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import backends as be
from .backends.base import DecisionSource, LiveSource, PooledSource
from .decision import HIGH, decide_records, read_decisions, write_decisions
from .domain import ToTConfig, load_taxonomy
from .errors import ParseError, SchemaError, ToTError, ValidationError, VersionMismatch
from .harness import (
    answered_counts,
    evaluate_adversarial,
    evaluate_clean,
    sweep,
    write_report,
)
from .model_io import load_model, save_model
from .symbolizer import fit

log = logging.getLogger("tot.cli")


class CliValidation(Exception):
    """Flag or input validation failure (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliValidation(message)


def _setup_logging() -> None:
    level = {
        "error": logging.ERROR,
        "warn": logging.WARNING,
        "info": logging.INFO,
        "debug": logging.DEBUG,
    }.get(os.environ.get("TOT_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(name)s: %(message)s")


def _build_parser() -> _Parser:
    parser = _Parser(prog="tot", description="Two-out-of-Three selective prediction engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a symbol model from training features")
    p_fit.add_argument("--train", required=True, help="training manifest (JSONL)")
    p_fit.add_argument("--taxonomy", required=True, help="taxonomy file")
    p_fit.add_argument("--out", required=True, help="output model path (TOTM)")
    p_fit.add_argument("--seed", required=True, type=int, help="RNG seed (mandatory)")
    p_fit.add_argument("--k", type=int, default=1000, help="cluster count")
    p_fit.add_argument("--dim", type=int, default=32, help="reducer output dimension")
    p_fit.add_argument("--per-class", type=int, default=200, help="training examples per class")
    p_fit.add_argument("--per-column-std", action="store_true",
                       help="standardize per column instead of globally")

    p_dec = sub.add_parser("decide", help="run the decision rule over a manifest")
    p_dec.add_argument("--model", required=True)
    p_dec.add_argument("--manifest", required=True)
    p_dec.add_argument("--out", required=True, help="output decisions path (JSONL)")
    p_dec.add_argument("--backend", default="file",
                       help="file | mock:<scenario.json> | exec:<command line>")
    p_dec.add_argument("--sigma", type=float, default=None, help="blur sigma (default: model config)")
    p_dec.add_argument("--topn", type=int, default=None, help="third-prediction depth")
    p_dec.add_argument("--jobs", type=int, default=1)
    p_dec.add_argument("--timeout", type=float, default=120.0, help="exec backend reply timeout (s)")

    p_eval = sub.add_parser("eval", help="evaluate a decisions file against labels")
    p_eval.add_argument("--decisions", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--mode", required=True, choices=["clean", "adversarial"])
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--format", default="json", choices=["json", "csv"])
    p_eval.add_argument("--low-only", action="store_true",
                        help="final accuracy over stage-2 answers only")

    p_sweep = sub.add_parser("sweep", help="sweep sigma or top-n and evaluate each point")
    p_sweep.add_argument("--model", required=True)
    p_sweep.add_argument("--manifest", required=True)
    p_sweep.add_argument("--axis", required=True, choices=["sigma", "topn"])
    p_sweep.add_argument("--values", required=True, help="comma-separated, strictly increasing")
    p_sweep.add_argument("--backend", default="file")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--format", default="json", choices=["json", "csv"])
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--timeout", type=float, default=120.0)

    p_check = sub.add_parser("check", help="schema-check a manifest and its files")
    p_check.add_argument("--manifest", required=True)
    p_check.add_argument("--no-files", action="store_true", help="skip file existence checks")

    return parser


def _load(fn, *args, **kwargs):
    """Run an input loader; schema/parse failures are validation errors."""
    try:
        return fn(*args, **kwargs)
    except (ParseError, SchemaError, ValidationError, VersionMismatch) as e:
        raise CliValidation(str(e)) from e


def _make_source(spec: str, records, model, config, timeout: float, jobs: int = 1) -> DecisionSource:
    if spec == "file":
        return be.FileSource(records, taxonomy=model.taxonomy)
    if spec.startswith("mock:"):
        scenario = _load(be.load_scenario, spec[len("mock:"):])
        return be.MockSource(scenario)
    if spec.startswith("exec:"):
        command = spec[len("exec:"):]

        def factory() -> DecisionSource:
            backend = be.external_backend(command, timeout=timeout)
            return LiveSource(backend, backend, config)

        return PooledSource(factory) if jobs > 1 else factory()
    raise CliValidation(f"unknown backend spec {spec!r}")


def _cmd_fit(args) -> int:
    taxonomy = _load(load_taxonomy, args.taxonomy)
    records = _load(be.load_manifest, args.train)
    try:
        config = ToTConfig(
            k=args.k,
            reducer_dim=args.dim,
            seed=args.seed,
            train_per_class=args.per_class,
            per_column_standardize=args.per_column_std,
        )
    except ValidationError as e:
        raise CliValidation(f"--k/--dim/--per-class: {e}") from e

    train = [r for r in records if r.split == "train"]
    if not train:
        raise CliValidation(f"{args.train}: no records with split=train")
    by_class: dict[int, list] = {}
    for rec in train:
        by_class.setdefault(rec.label_fine, []).append(rec)

    rng = np.random.default_rng(args.seed)
    sampled = []
    for label in sorted(by_class):
        pool = by_class[label]
        if len(pool) <= args.per_class:
            if len(pool) < args.per_class:
                log.warning("class %d has %d < %d examples; using all",
                            label, len(pool), args.per_class)
            chosen = pool
        else:
            idx = np.sort(rng.choice(len(pool), size=args.per_class, replace=False))
            chosen = [pool[i] for i in idx]
        sampled.extend(chosen)

    training = []
    for rec in sampled:
        if rec.feature_path is None:
            raise CliValidation(f"record {rec.id}: training requires feature_path")
        training.append(
            (_load(be.read_feature_tensor, rec.resolve(rec.feature_path)), rec.label_fine)
        )

    result = fit(training, taxonomy, config)
    save_model(result.model, args.out)
    print(
        f"fit: rows_kept={result.rows_kept} rows_removed={result.rows_removed} "
        f"k={config.k} objective={result.objective:.6f}"
    )
    return 0


def _cmd_decide(args) -> int:
    model = _load(load_model, args.model)
    records = _load(be.load_manifest, args.manifest)
    config = model.config
    if args.sigma is not None:
        config = replace(config, blur_sigma=args.sigma)
    if args.topn is not None:
        if args.topn < 1:
            raise CliValidation("--topn must be >= 1")
        config = replace(config, top_n=args.topn)
    if args.jobs < 1:
        raise CliValidation("--jobs must be >= 1")

    source = _make_source(args.backend, records, model, config, args.timeout, jobs=args.jobs)
    try:
        outcomes = decide_records(records, model, source, config, jobs=args.jobs)
    finally:
        source.close()
    write_decisions(outcomes, config, args.out)
    high = sum(1 for o in outcomes if o.confidence == HIGH)
    nulls = sum(1 for o in outcomes if o.final is None)
    print(
        f"decide: records={len(outcomes)} high={high} low={len(outcomes) - high} "
        f"null={nulls} sigma={config.blur_sigma} top_n={config.top_n}"
    )
    return 0


def _default_out(stem: str, fmt: str) -> str:
    return f"{stem}_{time.strftime('%Y%m%dT%H%M%S')}.{fmt}"


def _cmd_eval(args) -> int:
    outcomes = _load(read_decisions, args.decisions)
    records = _load(be.load_manifest, args.manifest)
    by_id = {rec.id: rec for rec in records}
    missing = [o.record_id for o in outcomes if o.record_id not in by_id]
    if missing:
        raise CliValidation(f"decision ids not in manifest: {missing[:5]}")
    if len(outcomes) != len(records):
        raise CliValidation(
            f"{len(outcomes)} decisions vs {len(records)} manifest records"
        )
    flagged = [by_id[o.record_id].adversarial for o in outcomes]
    if args.mode == "clean" and any(flagged):
        raise CliValidation("mode=clean but manifest contains adversarial records")
    if args.mode == "adversarial" and not all(flagged):
        raise CliValidation("mode=adversarial but manifest contains clean records")

    pairs = [(o, by_id[o.record_id].label_fine) for o in outcomes]
    breakdown = evaluate_adversarial(pairs) if args.mode == "adversarial" else evaluate_clean(pairs)
    correct, answered = answered_counts(pairs, low_only=args.low_only)
    accuracy = correct / answered if answered else None

    out = args.out or _default_out(f"eval_{args.mode}", args.format)
    counts, ratios = breakdown.counts(), breakdown.ratios()
    if args.format == "json":
        doc = {
            "mode": args.mode,
            "counts": counts,
            "ratios": ratios,
            "correct": correct,
            "answered": answered,
            "final_accuracy": accuracy,
            "low_only": args.low_only,
        }
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        header, row = [], []
        for f in counts:
            header += [f"{f}_count", f"{f}_ratio"]
            row += [counts[f], f"{ratios[f]:.6f}"]
        header += ["correct_count", "answered_count", "final_accuracy"]
        row += [correct, answered, "" if accuracy is None else f"{accuracy:.6f}"]
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerow(row)
    parts = " ".join(f"{f}={counts[f]}" for f in counts)
    acc_text = "n/a" if accuracy is None else f"{accuracy:.6f}"
    print(f"eval: mode={args.mode} total={breakdown.total} {parts} accuracy={acc_text} out={out}")
    return 0


def _cmd_sweep(args) -> int:
    model = _load(load_model, args.model)
    records = _load(be.load_manifest, args.manifest)
    axis = "top_n" if args.axis == "topn" else "sigma"
    try:
        if axis == "sigma":
            values = [float(v) for v in args.values.split(",") if v.strip() != ""]
        else:
            values = [int(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError as e:
        raise CliValidation(f"--values: {e}") from e
    if not values:
        raise CliValidation("--values is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise CliValidation("--values must be strictly increasing")
    if args.jobs < 1:
        raise CliValidation("--jobs must be >= 1")

    source = _make_source(args.backend, records, model, model.config, args.timeout, jobs=args.jobs)
    try:
        report = sweep(records, model, source, axis, values, config=model.config, jobs=args.jobs)
    finally:
        source.close()
    out = args.out or _default_out(f"sweep_{axis}", args.format)
    write_report(report, out, format=args.format)
    print(f"sweep: axis={axis} mode={report.mode} points={len(report.points)} out={out}")
    return 0


def _cmd_check(args) -> int:
    problems = be.check_manifest(args.manifest, check_files=not args.no_files)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        raise CliValidation(f"{len(problems)} problem(s) in {args.manifest}")
    records = be.load_manifest(args.manifest)
    print(f"check: ok records={len(records)}")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "decide": _cmd_decide,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "check": _cmd_check,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except CliValidation as e:
        print(f"tot: {e}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except CliValidation as e:
        print(f"tot: {e}", file=sys.stderr)
        return 1
    except ToTError as e:
        print(f"tot: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"tot: {e}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
