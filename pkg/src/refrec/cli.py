"""Command-line entry point: ``refrec <subcommand> [flags]``.

Exit codes: 0 success, 2 invalid input, 3 stale artifact.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from .core import InvalidInput, ReferenceRecord, derive_seed, read_json, read_jsonl, write_json, write_jsonl
from .parsers import load_registry
from .pipeline import (
    SYSTEMS, ExperimentConfig, StaleArtifact, load_bundle, recommend_records, render_table, run_experiment,
    stage_evaluate, stage_run_parsers, stage_split, stage_synth, stage_train,
)

log = logging.getLogger("refrec")

EXIT_OK, EXIT_INVALID, EXIT_STALE = 0, 2, 3


def _fractions(text: str):
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected exactly three fractions (train,meta,test)")
    return parts


def _systems(text: str) -> List[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SYSTEMS and not s.startswith("parser:")]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown systems {bad}; choose from {', '.join(SYSTEMS)}")
    return names


def _existing(path: Optional[str], what: str) -> Optional[str]:
    if path is not None and not Path(path).exists():
        raise InvalidInput(f"{what} {path} does not exist")
    return path


def load_config(args) -> ExperimentConfig:
    """Config file first, then any flag the user actually passed."""
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(read_json(_existing(args.config, "config file")))
    overrides = {}
    for flag, key in (("seed", "seed"), ("fractions", "fractions"), ("vocab_size", "vocab_size"),
                      ("voting_threshold", "voting_threshold"), ("n_docs", "n_docs"),
                      ("refs_per_doc", "refs_per_doc"), ("jitter", "jitter"), ("dropout", "dropout"),
                      ("mixing", "mixing")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "styles", None):
        overrides["styles"] = tuple(args.styles.split(","))
    if getattr(args, "fallback_on_failure", False):
        overrides["fallback_on_failure"] = True
    return replace(cfg, **overrides)


# --- subcommands ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = load_config(args)
    corpus = stage_synth(cfg, args.out)
    log.info("wrote %d references in %d documents to %s", len(corpus), len(corpus.doc_ids()), args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = load_config(args)
    split = stage_split(_existing(args.corpus, "corpus"), cfg.fractions, derive_seed(cfg.seed, "split"), args.out)
    log.info("split documents: %s", split.counts())
    return EXIT_OK


def cmd_run_parsers(args) -> int:
    cfg = load_config(args)
    registry = load_registry(_existing(args.registry, "registry"), cfg.types)
    with registry:
        table = stage_run_parsers(_existing(args.corpus, "corpus"), _existing(args.split, "split file"),
                                  args.subset, registry, args.out, args.cache_dir)
    log.info("extracted %d cells for the %s split", len(table), args.subset)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args)
    stage_train(args.variant, _existing(args.corpus, "corpus"), _existing(args.split, "split file"),
                _existing(args.table, "extraction table"), cfg, args.out)
    log.info("wrote %s bundle to %s", args.variant, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args)
    report = stage_evaluate(
        _existing(args.corpus, "corpus"), _existing(args.split, "split file"),
        _existing(args.table, "extraction table"), args.out, args.systems,
        ref_model=_existing(args.ref_model, "model"), field_model=_existing(args.field_model, "model"),
        baselines_path=_existing(args.baselines, "baselines"), types=cfg.types,
        fallback=cfg.fallback_on_failure,
    )
    sys.stdout.write(render_table(report))
    return EXIT_OK


def cmd_recommend(args) -> int:
    cfg = load_config(args)
    rec, manifest = load_bundle(_existing(args.model, "model"))
    registry = load_registry(_existing(args.registry, "registry"), rec.types)
    records = []
    for i, obj in enumerate(read_jsonl(_existing(args.input, "input"))):
        if "ref" not in obj:
            raise InvalidInput(f"{args.input} line {i + 1}: missing 'ref'")
        records.append(ReferenceRecord(str(obj.get("ref_id", i)), str(obj.get("doc_id", "")), obj["ref"], None))
    with registry:
        rows = recommend_records(records, rec, registry, cfg.fallback_on_failure)
    if args.out:
        write_jsonl(args.out, rows)
    else:
        for row in rows:
            sys.stdout.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    report = read_json(_existing(args.input, "report"))
    if "systems" not in report:
        raise InvalidInput(f"{args.input} is not an evaluation report")
    text = render_table(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text, encoding="utf-8")
        write_json(out / "report.json", report)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args)
    registry = load_registry(_existing(args.registry, "registry"), cfg.types)
    with registry:
        report = run_experiment(cfg, args.out, registry, args.systems or SYSTEMS, args.cache_dir)
    sys.stdout.write(render_table(report))
    return EXIT_OK


# --- argument parsing -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refrec", description="Recommend a reference parser per string or per field.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, seed=False, fallback=False):
        p.add_argument("--config", help="JSON experiment config; flags override it")
        if seed:
            p.add_argument("--seed", type=int, help="root seed (stage seeds are derived from it)")
        if fallback:
            p.add_argument("--fallback-on-failure", action="store_true",
                           help="move down the ranking when the chosen parser fails")

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    common(p, seed=True)
    p.add_argument("--n-docs", type=int)
    p.add_argument("--refs-per-doc", type=int)
    p.add_argument("--styles", help="comma-separated style names")
    p.add_argument("--jitter", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--mixing", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="assign documents to train/meta/test")
    common(p, seed=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--fractions", type=_fractions, help="train,meta,test (default 0.4,0.3,0.3)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("run-parsers", help="run every registered parser over one split")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True, help="split file written by 'split'")
    p.add_argument("--subset", choices=("train", "meta", "test"), required=True)
    p.add_argument("--registry", help="registry JSON (default: builtin parsers)")
    p.add_argument("--cache-dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run_parsers)

    p = sub.add_parser("train", help="fit a recommender or the baselines on the meta split")
    common(p, seed=True)
    p.add_argument("--variant", choices=("ref", "field", "baselines"), required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--table", required=True, help="extraction table of the meta split")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--voting-threshold", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score systems on the test split")
    common(p, fallback=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--table", required=True, help="extraction table of the test split")
    p.add_argument("--systems", type=_systems, default=list(SYSTEMS),
                   help="comma-separated subset of " + ",".join(SYSTEMS))
    p.add_argument("--baselines")
    p.add_argument("--ref-model")
    p.add_argument("--field-model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("recommend", help="parse unlabeled references with a trained recommender")
    common(p, fallback=True)
    p.add_argument("--input", required=True, help="JSONL with a 'ref' key per line")
    p.add_argument("--model", required=True)
    p.add_argument("--registry")
    p.add_argument("--out", help="output JSONL (default: stdout)")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("report", help="render a saved evaluation report")
    p.add_argument("--input", required=True, help="report.json written by 'evaluate'")
    p.add_argument("--out", help="directory for report.txt and report.json")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("experiment", help="run every stage end to end")
    common(p, seed=True, fallback=True)
    p.add_argument("--n-docs", type=int)
    p.add_argument("--refs-per-doc", type=int)
    p.add_argument("--styles")
    p.add_argument("--jitter", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--mixing", type=float)
    p.add_argument("--fractions", type=_fractions)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--voting-threshold", type=int)
    p.add_argument("--systems", type=_systems)
    p.add_argument("--registry")
    p.add_argument("--cache-dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StaleArtifact as exc:
        print(f"refrec: stale artifact: {exc}", file=sys.stderr)
        return EXIT_STALE
    except (InvalidInput, FileNotFoundError) as exc:
        print(f"refrec: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
