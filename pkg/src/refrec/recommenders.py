"""Parser recommenders (per reference and per metadata type) and the three baselines."""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import InvalidInput, MetadataField, ParsedReference, ReferenceRecord, read_json, write_json
from .evaluation.metrics import f1_of, field_counter, match_fields, normalize_value, score_counts, type_correct
from .featurizer import NgramVocabulary, featurize, featurize_many
from .learners.linear import DEFAULT_L2, LinearModel, fit_linear
from .learners.logistic import LogisticModel, TrainConfig, fit_logistic, predict_proba
from .parsers import ExtractionTable, Registry, parse

MODEL_FORMAT_VERSION = 1

Ranking = List[Tuple[str, float]]
Outputs = Mapping[str, ParsedReference]


def rank(parser_ids: Sequence[str], scores: Sequence[float]) -> Ranking:
    """Best first; equal scores keep registry order."""
    order = sorted(range(len(parser_ids)), key=lambda i: (-scores[i], i))
    return [(parser_ids[i], float(scores[i])) for i in order]


class OutputCache:
    """Lazily runs parsers on one string, or serves precomputed outputs."""

    def __init__(self, registry: Optional[Registry], raw: str, ref_id: str = "0",
                 outputs: Optional[Outputs] = None):
        self.registry = registry
        self.raw = raw
        self.ref_id = ref_id
        self._outputs: Dict[str, ParsedReference] = dict(outputs or {})

    def __call__(self, parser_id: str) -> ParsedReference:
        if parser_id not in self._outputs:
            if self.registry is None:
                raise KeyError(parser_id)
            self._outputs[parser_id] = parse(self.registry, parser_id, self.raw, self.ref_id)
        return self._outputs[parser_id]


def _training_rows(table: ExtractionTable, meta_refs: Sequence[ReferenceRecord]) -> None:
    if not meta_refs:
        raise InvalidInput("meta-learning set is empty")
    for r in meta_refs:
        if r.truth is None:
            raise InvalidInput(f"meta reference {r.ref_id} has no ground truth")
        for p in table.parser_ids:
            if (p, r.ref_id) not in table.cells:
                raise InvalidInput(f"extraction table lacks ({p}, {r.ref_id})")


def f1_matrix(table: ExtractionTable, refs: Sequence[ReferenceRecord]) -> np.ndarray:
    """(n_refs, n_parsers) per-reference F1 of each parser's output."""
    return np.array([[f1_of(table.get(p, r.ref_id), r.truth) for p in table.parser_ids] for r in refs])


def fingerprint(X: np.ndarray, *extra) -> str:
    h = hashlib.sha256(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    for e in extra:
        h.update(json.dumps(e, sort_keys=True).encode())
    return h.hexdigest()


# --- per-reference switching ----------------------------------------------------

@dataclass
class RefRecommender:
    parser_ids: List[str]
    vocab: NgramVocabulary
    models: Dict[str, LinearModel]
    config: dict = field(default_factory=dict)

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.column_stack([X @ self.models[p].weights + self.models[p].intercept for p in self.parser_ids])

    def recommend(self, raw: str) -> Ranking:
        return rank(self.parser_ids, self.scores(featurize(raw, self.vocab))[0])


def train_ref_recommender(table: ExtractionTable, meta_refs: Sequence[ReferenceRecord],
                          vocab: NgramVocabulary, l2: float = DEFAULT_L2,
                          X: Optional[np.ndarray] = None) -> RefRecommender:
    _training_rows(table, meta_refs)
    if X is None:
        X = featurize_many([r.raw for r in meta_refs], vocab)
    F = f1_matrix(table, meta_refs)
    fp = fingerprint(X, F.tolist())
    models = {}
    for j, p in enumerate(table.parser_ids):
        m = fit_linear(X, F[:, j], l2)
        m.meta["training_fingerprint"] = fp
        models[p] = m
    return RefRecommender(list(table.parser_ids), vocab, models, {"l2": l2})


def recommend_ref(rec: RefRecommender, raw: str) -> Ranking:
    return rec.recommend(raw)


def apply_ref_choice(ranking: Ranking, get: Callable[[str], ParsedReference],
                     fallback: bool = False) -> Tuple[str, ParsedReference]:
    chosen = ranking[0][0]
    out = get(chosen)
    if fallback and out.failed:
        for pid, _ in ranking[1:]:
            alt = get(pid)
            if not alt.failed:
                return pid, alt
    return chosen, out


def parse_with_ref(rec: RefRecommender, raw: str, registry: Registry, fallback: bool = False,
                   ref_id: str = "0", outputs: Optional[Outputs] = None) -> ParsedReference:
    ranking = rec.recommend(raw)
    return apply_ref_choice(ranking, OutputCache(registry, raw, ref_id, outputs), fallback)[1]


# --- per-field switching --------------------------------------------------------

@dataclass
class FieldRecommender:
    parser_ids: List[str]
    types: List[str]
    vocab: NgramVocabulary
    models: Dict[Tuple[str, str], LogisticModel]
    config: dict = field(default_factory=dict)

    def probabilities(self, X: np.ndarray) -> Dict[str, np.ndarray]:
        """type -> (n, n_parsers) correctness probabilities."""
        X = np.atleast_2d(X)
        return {t: np.column_stack([np.atleast_1d(predict_proba(self.models[(p, t)], X))
                                    for p in self.parser_ids])
                for t in self.types}

    def recommend(self, raw: str) -> Dict[str, Ranking]:
        probs = self.probabilities(featurize(raw, self.vocab))
        return {t: rank(self.parser_ids, probs[t][0]) for t in self.types}


def field_labels(table: ExtractionTable, refs: Sequence[ReferenceRecord], parser_id: str,
                 type_: str) -> np.ndarray:
    return np.array([1.0 if type_correct(table.get(parser_id, r.ref_id), r.truth, type_) else 0.0
                     for r in refs])


def train_field_recommender(table: ExtractionTable, meta_refs: Sequence[ReferenceRecord],
                            vocab: NgramVocabulary, types: Sequence[str],
                            config: TrainConfig = TrainConfig(),
                            X: Optional[np.ndarray] = None) -> FieldRecommender:
    _training_rows(table, meta_refs)
    if X is None:
        X = featurize_many([r.raw for r in meta_refs], vocab)
    models = {}
    for p in table.parser_ids:
        for t in types:
            models[(p, t)] = fit_logistic(X, field_labels(table, meta_refs, p, t), config)
    return FieldRecommender(list(table.parser_ids), list(types), vocab, models, config.to_json())


def recommend_field(rec: FieldRecommender, raw: str) -> Dict[str, Ranking]:
    return rec.recommend(raw)


def apply_field_choice(rankings: Mapping[str, Ranking], types: Sequence[str],
                       get: Callable[[str], ParsedReference],
                       fallback: bool = False) -> Tuple[Dict[str, str], ParsedReference]:
    chosen: Dict[str, str] = {}
    fields: List[MetadataField] = []
    for t in types:
        ranking = rankings[t]
        pid = ranking[0][0]
        if fallback and get(pid).failed:
            for alt, _ in ranking[1:]:
                if not get(alt).failed:
                    pid = alt
                    break
        chosen[t] = pid
        fields.extend(get(pid).of_type(t).fields)
    return chosen, ParsedReference(tuple(fields))


def parse_with_field(rec: FieldRecommender, raw: str, registry: Registry, fallback: bool = False,
                     ref_id: str = "0", outputs: Optional[Outputs] = None) -> ParsedReference:
    rankings = rec.recommend(raw)
    return apply_field_choice(rankings, rec.types, OutputCache(registry, raw, ref_id, outputs), fallback)[1]


# --- baselines ------------------------------------------------------------------

@dataclass(frozen=True)
class SingleBest:
    parser_id: str


@dataclass(frozen=True)
class Hybrid:
    assignment: Dict[str, str]


@dataclass(frozen=True)
class Voting:
    threshold: int = 3

    def __post_init__(self):
        if self.threshold < 1:
            raise InvalidInput("voting threshold must be >= 1")


@dataclass(frozen=True)
class Baselines:
    single_best: SingleBest
    hybrid: Hybrid
    voting: Voting

    def to_json(self) -> dict:
        return {
            "single_best": self.single_best.parser_id,
            "hybrid": dict(self.hybrid.assignment),
            "voting_threshold": self.voting.threshold,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Baselines":
        return cls(SingleBest(obj["single_best"]), Hybrid(dict(obj["hybrid"])), Voting(int(obj["voting_threshold"])))


def micro_f1(outputs: Sequence[ParsedReference], truths: Sequence[ParsedReference]) -> float:
    tp = fp = fn = 0
    for out, truth in zip(outputs, truths):
        c = match_fields(out, truth)
        tp, fp, fn = tp + c.tp, fp + c.fp, fn + c.fn
    return score_counts(tp, fp, fn)[2]


def _argmax_first(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def fit_baselines(table: ExtractionTable, meta_refs: Sequence[ReferenceRecord], types: Sequence[str],
                  voting_threshold: int = 3) -> Baselines:
    _training_rows(table, meta_refs)
    truths = [r.truth for r in meta_refs]
    overall = [micro_f1([table.get(p, r.ref_id) for r in meta_refs], truths) for p in table.parser_ids]
    single = table.parser_ids[_argmax_first(overall)]
    assignment = {}
    for t in types:
        typed_truth = [tr.of_type(t) for tr in truths]
        per_type = [micro_f1([table.get(p, r.ref_id).of_type(t) for r in meta_refs], typed_truth)
                    for p in table.parser_ids]
        assignment[t] = table.parser_ids[_argmax_first(per_type)]
    return Baselines(SingleBest(single), Hybrid(assignment), Voting(voting_threshold))


def parse_with_hybrid(policy: Hybrid, types: Sequence[str], get: Callable[[str], ParsedReference]) -> ParsedReference:
    fields: List[MetadataField] = []
    for t in types:
        fields.extend(get(policy.assignment[t]).of_type(t).fields)
    return ParsedReference(tuple(fields))


def vote(outputs: Sequence[ParsedReference], m: int, types: Optional[Sequence[str]] = None) -> ParsedReference:
    """Keep a (type, normalized value) iff at least ``m`` parsers emit it; multiplicity = max among them.

    A threshold above the number of voters is lowered to that number, so a
    registry smaller than ``m`` keeps the fields all of its parsers agree on.
    Kept fields use the spelling of the first parser that emitted them.
    """
    if m < 1:
        raise InvalidInput("voting threshold must be >= 1")
    m = min(m, max(len(outputs), 1))
    support: Counter = Counter()
    multiplicity: Dict[Tuple[str, str], int] = {}
    spelling: Dict[Tuple[str, str], str] = {}
    for out in outputs:
        counts = Counter()
        for f in out:
            key = (f.type, normalize_value(f.value))
            counts[key] += 1
            spelling.setdefault(key, f.value)
        for key, k in counts.items():
            support[key] += 1
            multiplicity[key] = max(multiplicity.get(key, 0), k)
    type_order = {t: i for i, t in enumerate(types or [])}
    first_seen = {key: i for i, key in enumerate(spelling)}
    kept = sorted((key for key, s in support.items() if s >= m),
                  key=lambda key: (type_order.get(key[0], len(type_order)), first_seen[key]))
    fields = [MetadataField(key[0], spelling[key]) for key in kept for _ in range(multiplicity[key])]
    return ParsedReference(tuple(fields))


def parse_with_voting(registry: Registry, raw: str, m: int = 3, ref_id: str = "0",
                      outputs: Optional[Outputs] = None) -> ParsedReference:
    get = OutputCache(registry, raw, ref_id, outputs)
    return vote([get(p) for p in registry.ids], m, registry.types)


# --- perfect-information upper bound ----------------------------------------------

def oracle_field_choice(outputs: Outputs, truth: ParsedReference, parser_ids: Sequence[str],
                        types: Sequence[str]) -> Dict[str, str]:
    """Per type, the parser that is right (or least wrong) on this very reference."""
    chosen = {}
    for t in types:
        want = truth.of_type(t)
        best_key, best_pid = None, None
        for p in parser_ids:
            got = outputs[p].of_type(t)
            c = match_fields(got, want)
            key = (type_correct(got, want, t), c.tp, -c.fp)
            if best_key is None or key > best_key:
                best_key, best_pid = key, p
        chosen[t] = best_pid
    return chosen


def oracle_ref_choice(outputs: Outputs, truth: ParsedReference, parser_ids: Sequence[str]) -> str:
    return parser_ids[_argmax_first([f1_of(outputs[p], truth) for p in parser_ids])]


# --- persistence ----------------------------------------------------------------

def _model_doc(model, dimension: int, extra: dict) -> dict:
    return {"version": MODEL_FORMAT_VERSION, "dimension": dimension, **model.to_json(), **extra}


def save_recommender(rec, directory, provenance: Optional[dict] = None) -> None:
    d = Path(directory)
    (d / "models").mkdir(parents=True, exist_ok=True)
    write_json(d / "vocab.json", rec.vocab.to_json())
    dim = rec.vocab.dimension
    if isinstance(rec, RefRecommender):
        variant = "ref"
        for p, m in rec.models.items():
            write_json(d / "models" / f"{p}.json", _model_doc(m, dim, {"parser_id": p, "config": rec.config}))
    else:
        variant = "field"
        for (p, t), m in rec.models.items():
            write_json(d / "models" / f"{p}__{t}.json",
                       _model_doc(m, dim, {"parser_id": p, "type": t, "config": rec.config}))
    manifest = {
        "version": MODEL_FORMAT_VERSION,
        "variant": variant,
        "registry_order": rec.parser_ids,
        "config": rec.config,
        **(provenance or {}),
    }
    if variant == "field":
        manifest["types"] = rec.types
    write_json(d / "manifest.json", manifest)


def _load_model(path, cls, dim: int):
    doc = read_json(path)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise InvalidInput(f"{path}: unsupported model version {doc.get('version')}")
    if doc.get("dimension") != dim:
        raise InvalidInput(f"{path}: model dimension {doc.get('dimension')} does not match vocabulary ({dim})")
    return cls.from_json(doc)


def load_recommender(directory):
    d = Path(directory)
    manifest = read_json(d / "manifest.json")
    vocab = NgramVocabulary.from_json(read_json(d / "vocab.json"))
    dim = vocab.dimension
    ids = manifest["registry_order"]
    if manifest["variant"] == "ref":
        models = {p: _load_model(d / "models" / f"{p}.json", LinearModel, dim) for p in ids}
        return RefRecommender(ids, vocab, models, manifest.get("config", {})), manifest
    types = manifest["types"]
    models = {(p, t): _load_model(d / "models" / f"{p}__{t}.json", LogisticModel, dim) for p in ids for t in types}
    return FieldRecommender(ids, types, vocab, models, manifest.get("config", {})), manifest
