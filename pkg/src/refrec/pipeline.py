"""Experiment stages and their on-disk artifacts.

Every artifact records the hashes of the inputs it was built from, so a
later stage can refuse to run on inputs that changed underneath it.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .core import (
    DEFAULT_TYPES, Corpus, InvalidInput, ParsedReference, ReferenceRecord, SplitAssignment,
    check_types, derive_seed, duplicate_strings_across_splits, file_hash, load_corpus, read_json,
    read_jsonl, save_corpus, split_corpus, validate_corpus, write_json, write_jsonl,
)
from .evaluation.metrics import CorpusReport, choice_distribution, evaluate_system
from .evaluation.stats import paired_ttest
from .featurizer import NgramVocabulary, build_vocabulary, featurize_many
from .learners.forest import ForestParams
from .learners.logistic import TrainConfig
from .parsers import ExtractionTable, Registry, builtin_registry, load_registry, run_all_parsers
from .recommenders import (
    Baselines, FieldRecommender, OutputCache, RefRecommender, apply_field_choice, apply_ref_choice,
    f1_matrix, fit_baselines, load_recommender, oracle_field_choice, parse_with_hybrid, rank,
    save_recommender, train_field_recommender, train_ref_recommender, vote,
)
from .synth import SynthStyleSpec, synth

log = logging.getLogger(__name__)

SYSTEMS = ("single_best", "hybrid", "voting", "per_ref", "per_field", "oracle")
SYSTEM_LABELS = {
    "single_best": "Best single parser",
    "hybrid": "Per-type hybrid",
    "voting": "Voting ensemble",
    "per_ref": "Per-reference recommender",
    "per_field": "Per-field recommender",
    "oracle": "Oracle (upper bound)",
}


class StaleArtifact(RuntimeError):
    """An input artifact no longer matches what a dependent artifact was built from."""


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_docs: int = 1000
    refs_per_doc: int = 15
    styles: Tuple[str, ...] = ("bracket", "apa", "semicolon", "dotenum", "nature")
    jitter: float = 0.15
    dropout: float = 0.1
    mixing: float = 0.1
    fractions: Tuple[float, float, float] = (0.4, 0.3, 0.3)
    vocab_size: int = 150
    forest: Dict = field(default_factory=lambda: ForestParams().to_json())
    linear_l2: float = 1e-3
    logistic_l2: float = 1.0
    logistic_max_iter: int = 100
    logistic_tol: float = 1e-8
    voting_threshold: int = 3
    fallback_on_failure: bool = False
    types: Tuple[str, ...] = DEFAULT_TYPES

    def style_specs(self) -> List[SynthStyleSpec]:
        return [SynthStyleSpec(s, self.jitter, self.dropout, self.mixing) for s in self.styles]

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.logistic_l2, self.logistic_max_iter, self.logistic_tol)

    def forest_params(self) -> ForestParams:
        return ForestParams(**self.forest)

    def to_json(self) -> dict:
        out = asdict(self)
        for k in ("styles", "fractions", "types"):
            out[k] = list(out[k])
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        kw = dict(obj)
        for k in ("styles", "fractions", "types"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise StaleArtifact(message)


# --- stages -----------------------------------------------------------------------

def stage_synth(cfg: ExperimentConfig, out) -> Corpus:
    corpus = synth(cfg.style_specs(), cfg.n_docs, cfg.refs_per_doc, derive_seed(cfg.seed, "synth"), cfg.types)
    save_corpus(corpus, out)
    return corpus


def stage_split(corpus_path, fractions: Sequence[float], seed: int, out) -> SplitAssignment:
    corpus = load_corpus(corpus_path)
    problems = validate_corpus(corpus)
    if problems:
        raise InvalidInput(f"{corpus_path}: {len(problems)} invalid records, first: {problems[0]}")
    split = split_corpus(corpus, fractions, seed)
    doc = split.to_json()
    doc["corpus_hash"] = file_hash(corpus_path)
    doc["counts"] = split.counts()
    doc["duplicate_strings_across_splits"] = duplicate_strings_across_splits(corpus, split)
    write_json(out, doc)
    return split


def load_split(split_path, corpus_path) -> Tuple[SplitAssignment, dict]:
    doc = read_json(split_path)
    _require(doc.get("corpus_hash") == file_hash(corpus_path),
             f"split file {split_path} was made from a different corpus than {corpus_path}")
    return SplitAssignment.from_json(doc), doc


def split_records(corpus: Corpus, split: SplitAssignment, name: str) -> List[ReferenceRecord]:
    docs = set(split.docs(name))
    return [r for r in corpus if r.doc_id in docs]


def _meta_path(table_path) -> Path:
    p = Path(table_path)
    return p.with_name(p.name + ".meta.json")


def stage_run_parsers(corpus_path, split_path, split_name: str, registry: Registry, out,
                      cache_dir: Optional[str] = None) -> ExtractionTable:
    corpus = load_corpus(corpus_path, registry.types)
    split, _ = load_split(split_path, corpus_path)
    refs = split_records(corpus, split, split_name)
    table = run_all_parsers(registry, refs, cache_dir)
    table.save(out)
    write_json(_meta_path(out), {
        "split": split_name,
        "corpus_hash": file_hash(corpus_path),
        "split_hash": file_hash(split_path),
        "registry": registry.to_json(),
        "table_hash": file_hash(out),
        "n_refs": len(refs),
        "failed_cells": sum(1 for v in table.cells.values() if v.failed),
    })
    return table


def load_table(table_path, corpus_path, split_path, expected_split: str) -> Tuple[ExtractionTable, dict]:
    meta_file = _meta_path(table_path)
    if not meta_file.exists():
        raise InvalidInput(f"missing provenance file {meta_file}")
    meta = read_json(meta_file)
    _require(meta.get("table_hash") == file_hash(table_path), f"{table_path} changed after it was written")
    _require(meta.get("corpus_hash") == file_hash(corpus_path), f"{table_path} was built from a different corpus")
    _require(meta.get("split_hash") == file_hash(split_path), f"{table_path} was built from a different split")
    if meta.get("split") != expected_split:
        raise InvalidInput(f"{table_path} holds the {meta.get('split')!r} split, expected {expected_split!r}")
    return ExtractionTable.load(table_path), meta


def _labeled(refs: Sequence[ReferenceRecord], what: str) -> None:
    missing = [r.ref_id for r in refs if r.truth is None]
    if missing:
        raise InvalidInput(f"{what} needs ground truth; {len(missing)} references lack it (e.g. {missing[0]})")


def stage_vocabulary(table: ExtractionTable, refs: Sequence[ReferenceRecord], cfg: ExperimentConfig) -> NgramVocabulary:
    F = f1_matrix(table, refs)
    return build_vocabulary([r.raw for r in refs], F, cfg.vocab_size, cfg.forest,
                            seed=derive_seed(cfg.seed, "vocabulary"))


def stage_train(variant: str, corpus_path, split_path, table_path, cfg: ExperimentConfig, out,
                vocab: Optional[NgramVocabulary] = None):
    corpus = load_corpus(corpus_path, cfg.types)
    split, _ = load_split(split_path, corpus_path)
    table, meta = load_table(table_path, corpus_path, split_path, "meta")
    refs = split_records(corpus, split, "meta")
    _labeled(refs, "training")
    registry_order = [d["parser_id"] for d in meta["registry"]]
    provenance = {
        "trained_on_split": "meta",
        "corpus_hash": meta["corpus_hash"],
        "split_hash": meta["split_hash"],
        "table_hash": meta["table_hash"],
        "registry": meta["registry"],
        "experiment": cfg.to_json(),
    }
    out = Path(out)
    if variant == "baselines":
        baselines = fit_baselines(table, refs, cfg.types, cfg.voting_threshold)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "baselines.json", {**baselines.to_json(), "registry_order": registry_order, **provenance})
        return baselines
    if vocab is None:
        vocab = stage_vocabulary(table, refs, cfg)
    X = featurize_many([r.raw for r in refs], vocab)
    if variant == "ref":
        rec = train_ref_recommender(table, refs, vocab, cfg.linear_l2, X=X)
    elif variant == "field":
        rec = train_field_recommender(table, refs, vocab, cfg.types, cfg.train_config(), X=X)
    else:
        raise InvalidInput(f"unknown variant {variant!r}")
    save_recommender(rec, out, provenance)
    return rec


def load_baselines(path, table_meta: dict) -> Baselines:
    doc = read_json(Path(path) / "baselines.json" if Path(path).is_dir() else path)
    _require(doc.get("corpus_hash") == table_meta["corpus_hash"], f"baselines in {path} were fit on a different corpus")
    _require(doc.get("split_hash") == table_meta["split_hash"], f"baselines in {path} were fit on a different split")
    return Baselines.from_json(doc)


def load_bundle(path, table_meta: Optional[dict] = None):
    rec, manifest = load_recommender(path)
    if table_meta is not None:
        _require(manifest.get("corpus_hash") == table_meta["corpus_hash"],
                 f"recommender in {path} was trained on a different corpus")
        _require(manifest.get("split_hash") == table_meta["split_hash"],
                 f"recommender in {path} was trained on a different split")
        _require(manifest.get("registry_order") == [d["parser_id"] for d in table_meta["registry"]],
                 f"recommender in {path} was trained with a different parser registry")
    if manifest.get("trained_on_split") != "meta":
        raise InvalidInput(f"recommender in {path} was not trained on the meta split")
    return rec, manifest


# --- running systems over a table ---------------------------------------------------

@dataclass
class SystemRun:
    outputs: Dict[str, ParsedReference]
    choices: List[str] = field(default_factory=list)


def run_systems(systems: Sequence[str], refs: Sequence[ReferenceRecord], table: ExtractionTable,
                types: Sequence[str], baselines: Optional[Baselines] = None,
                ref_rec: Optional[RefRecommender] = None, field_rec: Optional[FieldRecommender] = None,
                fallback: bool = False) -> Dict[str, SystemRun]:
    runs = {s: SystemRun({}) for s in systems}
    ids = table.parser_ids
    ref_scores = field_probs = None
    if "per_ref" in runs:
        ref_scores = ref_rec.scores(featurize_many([r.raw for r in refs], ref_rec.vocab))
    if "per_field" in runs:
        field_probs = field_rec.probabilities(featurize_many([r.raw for r in refs], field_rec.vocab))
    for i, r in enumerate(refs):
        outs = table.outputs_for(r.ref_id)
        get = outs.__getitem__
        for s in systems:
            run = runs[s]
            if s == "single_best":
                out = outs[baselines.single_best.parser_id]
            elif s == "hybrid":
                out = parse_with_hybrid(baselines.hybrid, types, get)
            elif s == "voting":
                out = vote([outs[p] for p in ids], baselines.voting.threshold, types)
            elif s == "per_ref":
                pid, out = apply_ref_choice(rank(ids, ref_scores[i]), get, fallback)
                run.choices.append(pid)
            elif s == "per_field":
                rankings = {t: rank(ids, field_probs[t][i]) for t in types}
                chosen, out = apply_field_choice(rankings, types, get, fallback)
                run.choices.extend(chosen[t] for t in types)
            elif s == "oracle":
                if r.truth is None:
                    raise InvalidInput("the oracle needs ground truth")
                chosen = oracle_field_choice(outs, r.truth, ids, types)
                out = apply_field_choice({t: [(chosen[t], 1.0)] for t in types}, types, get)[1]
            elif s.startswith("parser:"):
                out = outs[s.split(":", 1)[1]]
            else:
                raise InvalidInput(f"unknown system {s!r}")
            run.outputs[r.ref_id] = out
    return runs


def build_report(runs: Dict[str, SystemRun], refs: Sequence[ReferenceRecord], types: Sequence[str],
                 parser_ids: Sequence[str]) -> Tuple[dict, Dict[str, CorpusReport]]:
    reports = {s: evaluate_system(s, run.outputs, refs, types) for s, run in runs.items()}
    systems = list(runs)
    ttests = []
    for i, j in combinations(range(len(systems)), 2):
        a, b = systems[j], systems[i]
        docs = list(reports[a].doc_f1)
        res = paired_ttest([reports[a].doc_f1[d] for d in docs], [reports[b].doc_f1[d] for d in docs])
        ttests.append({"a": a, "b": b, **res.to_json()})
    distribution = {}
    for s, key in (("per_ref", "per_ref"), ("per_field", "per_field")):
        if s in runs and runs[s].choices:
            distribution[key] = choice_distribution(runs[s].choices, parser_ids)
    report = {
        "systems": {s: reports[s].summary() for s in systems},
        "system_order": systems,
        "ttests": ttests,
        "choice_distribution": distribution,
        "registry_order": list(parser_ids),
    }
    return report, reports


def render_table(report: dict) -> str:
    """Aligned plain-text comparison of all evaluated systems."""
    header = ("system", "precision", "recall", "F1", "macro F1", "FP rate", "FN rate")
    rows = []
    for s in report.get("system_order") or list(report["systems"]):
        summary = report["systems"][s]
        rows.append((SYSTEM_LABELS.get(s, s), *(f"{summary[k]:.4f}" for k in
                                                 ("precision", "recall", "f1", "macro_f1", "fp_rate", "fn_rate"))))
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]

    def line(cells):
        return "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(cells))

    out = [line(header), "  ".join("-" * w for w in widths)] + [line(r) for r in rows]
    if report.get("ttests"):
        out += ["", "paired t-tests over per-document mean F1 (a vs b):"]
        for t in report["ttests"]:
            if t["t"] is None:
                out.append(f"  {t['a']} vs {t['b']}: no difference")
            else:
                out.append(f"  {t['a']} vs {t['b']}: t = {t['t']:.4f}, df = {t['df']}, p = {t['p']:.4g}")
    dist = report.get("choice_distribution") or {}
    if dist:
        ids = report["registry_order"]
        out += ["", "parser choice shares:", "  " + "  ".join(
            ["variant".ljust(10)] + [p.rjust(max(len(p), 6)) for p in ids])]
        for variant, shares in dist.items():
            out.append("  " + "  ".join([variant.ljust(10)] + [f"{shares[p]:.3f}".rjust(max(len(p), 6)) for p in ids]))
    return "\n".join(out) + "\n"


def write_scores_csv(reports: Dict[str, CorpusReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ref_id", "system", "tp", "fp", "fn", "p", "r", "f1"])
        for s, rep in reports.items():
            for ref_id, sc in rep.ref_scores.items():
                c = sc.counts
                w.writerow([ref_id, s, c.tp, c.fp, c.fn, repr(sc.precision), repr(sc.recall), repr(sc.f1)])


def stage_evaluate(corpus_path, split_path, table_path, out_dir, systems: Sequence[str],
                   ref_model=None, field_model=None, baselines_path=None,
                   types: Sequence[str] = DEFAULT_TYPES, fallback: bool = False) -> dict:
    corpus = load_corpus(corpus_path, types)
    split, split_doc = load_split(split_path, corpus_path)
    table, meta = load_table(table_path, corpus_path, split_path, "test")
    refs = split_records(corpus, split, "test")
    _labeled(refs, "evaluation")
    baselines = ref_rec = field_rec = None
    consumed = {"extractions": meta["split"]}
    if {"single_best", "hybrid", "voting"} & set(systems):
        if baselines_path is None:
            raise InvalidInput("baseline systems need --baselines")
        baselines = load_baselines(baselines_path, meta)
        consumed["baselines"] = "meta"
    if "per_ref" in systems:
        if ref_model is None:
            raise InvalidInput("per_ref needs --ref-model")
        ref_rec, manifest = load_bundle(ref_model, meta)
        consumed["per_ref"] = manifest["trained_on_split"]
    if "per_field" in systems:
        if field_model is None:
            raise InvalidInput("per_field needs --field-model")
        field_rec, manifest = load_bundle(field_model, meta)
        consumed["per_field"] = manifest["trained_on_split"]
    runs = run_systems(systems, refs, table, types, baselines, ref_rec, field_rec, fallback)
    report, reports = build_report(runs, refs, types, table.parser_ids)
    report["consumed_splits"] = consumed
    report["n_test_docs"] = len({r.doc_id for r in refs})
    report["duplicate_strings_across_splits"] = split_doc.get("duplicate_strings_across_splits")
    report["inputs"] = {"corpus_hash": meta["corpus_hash"], "split_hash": meta["split_hash"],
                        "table_hash": meta["table_hash"]}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", report)
    (out / "report.txt").write_text(render_table(report), encoding="utf-8")
    write_scores_csv(reports, out / "scores.csv")
    return report


def recommend_records(records: Sequence[ReferenceRecord], rec, registry: Registry,
                      fallback: bool = False) -> List[dict]:
    """Parse references with a trained recommender; one output row per input."""
    if list(registry.ids) != list(rec.parser_ids):
        raise InvalidInput(f"registry {registry.ids} does not match the recommender's {rec.parser_ids}")
    X = featurize_many([r.raw for r in records], rec.vocab)
    rows = []
    if isinstance(rec, RefRecommender):
        scores = rec.scores(X)
    else:
        probs = rec.probabilities(X)
    for i, r in enumerate(records):
        get = OutputCache(registry, r.raw, r.ref_id)
        if isinstance(rec, RefRecommender):
            ranking = rank(rec.parser_ids, scores[i])
            pid, out = apply_ref_choice(ranking, get, fallback)
            chosen = {"*": pid}
        else:
            rankings = {t: rank(rec.parser_ids, probs[t][i]) for t in rec.types}
            chosen, out = apply_field_choice(rankings, rec.types, get, fallback)
        rows.append({"ref_id": r.ref_id, "doc_id": r.doc_id, "ref": r.raw, "chosen": chosen,
                     "fields": out.to_json()})
    return rows


# --- whole experiment ------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, workdir, registry: Optional[Registry] = None,
                   systems: Sequence[str] = SYSTEMS, cache_dir: Optional[str] = None) -> dict:
    """Run every stage into ``workdir`` and return the evaluation report."""
    check_types(cfg.types)
    registry = registry or builtin_registry(cfg.types)
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    timings = {}

    def timed(name, fn, *args, **kw):
        t0 = time.perf_counter()
        result = fn(*args, **kw)
        timings[name] = time.perf_counter() - t0
        log.info("%s finished in %.1fs", name, timings[name])
        return result

    corpus_path, split_path = work / "corpus.jsonl", work / "split.json"
    timed("synth", stage_synth, cfg, corpus_path)
    timed("split", stage_split, corpus_path, cfg.fractions, derive_seed(cfg.seed, "split"), split_path)
    for name in ("meta", "test"):
        timed(f"run-parsers:{name}", stage_run_parsers, corpus_path, split_path, name, registry,
              work / f"extractions_{name}.jsonl", cache_dir)
    meta_table = work / "extractions_meta.jsonl"
    models = work / "models"
    timed("train:baselines", stage_train, "baselines", corpus_path, split_path, meta_table, cfg, models / "baselines")
    ref_rec = timed("train:ref", stage_train, "ref", corpus_path, split_path, meta_table, cfg, models / "ref")
    timed("train:field", stage_train, "field", corpus_path, split_path, meta_table, cfg, models / "field",
          vocab=ref_rec.vocab)
    write_json(work / "manifest.json", {
        "tool_version": __version__,
        "experiment": cfg.to_json(),
        "registry": registry.to_json(),
        "corpus_hash": file_hash(corpus_path),
        "split_seed": derive_seed(cfg.seed, "split"),
        "vocabulary_seed": derive_seed(cfg.seed, "vocabulary"),
    })
    report = timed("evaluate", stage_evaluate, corpus_path, split_path, work / "extractions_test.jsonl",
                   work / "report", systems, models / "ref", models / "field", models / "baselines",
                   cfg.types, cfg.fallback_on_failure)
    report["timings"] = timings
    return report
