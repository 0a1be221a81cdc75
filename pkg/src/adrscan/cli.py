"""Command line entry point: ``adr-scan generate | run | features``.

Exit status is 0 on success, 1 for bad input (arguments, files, specs) and
2 when a pipeline step fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .baselines import MutaraConfig
from .features import FeatureError, feature_table
from .ingestion import (
    MANIFEST_FILE,
    IngestError,
    SynthSpec,
    generate_synthetic,
    load_data_dir,
    load_prefixes,
    load_term_list,
    write_cohort,
    write_manifest,
)
from .learning import LearnConfig
from .model import preprocess

EXIT_OK, EXIT_INPUT, EXIT_PIPELINE = 0, 1, 2

log = logging.getLogger("adrscan")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adr-scan", description="Rare adverse drug reaction signal detection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded synthetic cohort")
    g.add_argument("--spec", required=True, type=Path, help="SynthSpec JSON file")
    g.add_argument("--out", required=True, type=Path)

    r = sub.add_parser("run", help="rank candidate codes for one drug")
    r.add_argument("--method", choices=pipeline.METHODS, default="dress")
    r.add_argument("--data", required=True, type=Path)
    r.add_argument("--drug", required=True)
    r.add_argument("--drug-name")
    r.add_argument("--indicators", type=Path)
    r.add_argument("--adrs", type=Path)
    r.add_argument("--noise-prefixes", type=Path)
    r.add_argument("--irrelevant-prefixes", type=Path)
    r.add_argument("--t1", type=int, default=MutaraConfig.t1)
    r.add_argument("--t2", type=int, default=MutaraConfig.t2)
    r.add_argument("--t3", type=int, default=MutaraConfig.t3)
    r.add_argument("--mu", type=float, default=LearnConfig.mu)
    r.add_argument("--tol", type=float, default=LearnConfig.tol)
    r.add_argument("--max-iter", type=int, default=LearnConfig.max_iter)
    r.add_argument("--transform", choices=["sqrt", "literal"], default="sqrt")
    r.add_argument("--k", type=int, default=pipeline.DEFAULT_K)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--holdout", default="", help="comma-separated codes whose labels are removed")
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--json", type=Path)
    r.add_argument("--diagnostics", type=Path, help="directory for objective/metric/cluster dumps (dress only)")

    f = sub.add_parser("features", help="dump the attribute matrix for one drug")
    f.add_argument("--data", required=True, type=Path)
    f.add_argument("--drug", required=True)
    f.add_argument("--out", required=True, type=Path)
    return p


def _generate(args) -> None:
    try:
        spec = SynthSpec.from_json(json.loads(args.spec.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError, KeyError) as e:
        raise InputError(f"{args.spec}: bad spec ({e})") from e
    cohort, manifest = generate_synthetic(spec)
    write_cohort(cohort, args.out)
    write_manifest(manifest, args.out / MANIFEST_FILE)
    log.info("wrote %d patients to %s", len(cohort), args.out)


def _load(data_dir: Path):
    if not data_dir.is_dir():
        raise InputError(f"{data_dir}: not a directory")
    return preprocess(load_data_dir(data_dir))


def _run(args) -> None:
    if args.k < 1:
        raise InputError("--k must be >= 1")
    holdout = [c.strip() for c in args.holdout.split(",") if c.strip()]
    irrelevant = load_prefixes(args.irrelevant_prefixes) if args.irrelevant_prefixes else []
    mutara = MutaraConfig(t1=args.t1, t2=args.t2, t3=args.t3, rng_seed=args.seed)
    if args.method == "dress":
        missing = [n for n in ("indicators", "adrs", "noise_prefixes") if getattr(args, n) is None]
        if missing:
            raise InputError("dress needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
        indicators = load_term_list(args.indicators, "indicator")
        adrs = load_term_list(args.adrs, "adr")
        noise = load_prefixes(args.noise_prefixes)
        config = pipeline.DressConfig(
            learn=LearnConfig(mu=args.mu, tol=args.tol, max_iter=args.max_iter, seed=args.seed),
            transform_mode=args.transform,
            k=args.k,
        )
        cohort = _load(args.data)
        report = pipeline.run_dress(cohort, args.drug, args.drug_name, indicators, adrs, noise, irrelevant, config, holdout)
    else:
        noise = load_prefixes(args.noise_prefixes) if args.noise_prefixes else []
        cohort = _load(args.data)
        prefixes = noise + [p for p in irrelevant if p not in noise]
        report = pipeline.run_baseline(cohort, args.drug, args.method, mutara, prefixes, args.k)
    pipeline.write_report_csv(report, args.out)
    if args.json:
        pipeline.write_report_json(report, args.json)
    if args.diagnostics and args.method == "dress":
        pipeline.write_diagnostics(report, args.diagnostics)
    log.info("%s: %d ranked of %d candidates", args.method, len(report.ranked()), len(report.entries))


def _features(args) -> None:
    cohort = _load(args.data)
    try:
        table = feature_table(cohort, args.drug)
    except FeatureError as e:
        raise pipeline.PipelineError("step1-features", str(e)) from e
    pipeline.write_features_csv(table, args.out)


COMMANDS = {"generate": _generate, "run": _run, "features": _features}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # --help exits 0, usage errors exit EXIT_INPUT
        return e.code if isinstance(e.code, int) else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except pipeline.PipelineError as e:
        print(f"adr-scan: pipeline error {e}", file=sys.stderr)
        return EXIT_PIPELINE
    except (InputError, IngestError, ValueError, OSError) as e:
        print(f"adr-scan: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
