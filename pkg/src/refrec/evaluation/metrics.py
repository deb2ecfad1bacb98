"""Field-level matching and precision/recall/F1 scoring."""
from __future__ import annotations

import re
import unicodedata
from collections import Counter, OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from ..core import InvalidInput, ParsedReference, ReferenceRecord

_WS = re.compile(r"\s+")

CASE_SENSITIVE = True


def normalize_value(v: str, case_sensitive: bool = CASE_SENSITIVE) -> str:
    v = _WS.sub(" ", unicodedata.normalize("NFC", v)).strip()
    return v if case_sensitive else v.casefold()


def field_counter(ref: ParsedReference, case_sensitive: bool = CASE_SENSITIVE) -> Counter:
    return Counter((f.type, normalize_value(f.value, case_sensitive)) for f in ref)


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def match_fields(extracted: ParsedReference, truth: ParsedReference,
                 case_sensitive: bool = CASE_SENSITIVE) -> MatchCounts:
    got = field_counter(extracted, case_sensitive)
    want = field_counter(truth, case_sensitive)
    tp = sum((got & want).values())
    return MatchCounts(tp, len(extracted) - tp, len(truth) - tp)


@dataclass(frozen=True)
class RefScore:
    precision: float
    recall: float
    f1: float
    counts: MatchCounts


def score_counts(tp: int, fp: int, fn: int) -> tuple:
    """(precision, recall, f1) with both-empty = perfect and one-empty = 0."""
    if tp + fp == 0 and tp + fn == 0:
        return 1.0, 1.0, 1.0
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def score_reference(counts: MatchCounts) -> RefScore:
    p, r, f1 = score_counts(counts.tp, counts.fp, counts.fn)
    return RefScore(p, r, f1, counts)


def f1_of(extracted: ParsedReference, truth: ParsedReference) -> float:
    return score_reference(match_fields(extracted, truth)).f1


def type_correct(extracted: ParsedReference, truth: ParsedReference, type_: str,
                 case_sensitive: bool = CASE_SENSITIVE) -> bool:
    """Multiset equality of one type's values; both empty counts as correct."""
    return (field_counter(extracted.of_type(type_), case_sensitive)
            == field_counter(truth.of_type(type_), case_sensitive))


def false_positive_rate(precision: float) -> float:
    return 1.0 - precision


def false_negative_rate(recall: float) -> float:
    return 1.0 - recall


@dataclass
class CorpusReport:
    system: str
    n_refs: int
    n_docs: int
    counts: MatchCounts
    precision: float
    recall: float
    f1: float
    macro_f1: float
    fp_rate: float
    fn_rate: float
    per_type: Dict[str, dict]
    doc_f1: "OrderedDict[str, float]" = field(default_factory=OrderedDict)
    ref_scores: Dict[str, RefScore] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "system": self.system,
            "n_refs": self.n_refs,
            "n_docs": self.n_docs,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_f1": self.macro_f1,
            "fp_rate": self.fp_rate,
            "fn_rate": self.fn_rate,
            "per_type": self.per_type,
        }


def evaluate_system(system: str, outputs: Mapping[str, ParsedReference],
                    records: Sequence[ReferenceRecord], types: Sequence[str],
                    case_sensitive: bool = CASE_SENSITIVE) -> CorpusReport:
    ref_ids = {r.ref_id for r in records}
    if set(outputs) != ref_ids:
        raise InvalidInput(f"{system}: outputs cover {len(outputs)} refs, truth covers {len(ref_ids)}")
    if any(r.truth is None for r in records):
        raise InvalidInput("evaluation needs ground truth for every reference")

    total = MatchCounts()
    per_type_counts = {t: MatchCounts() for t in types}
    doc_scores: "OrderedDict[str, List[float]]" = OrderedDict()
    ref_scores: Dict[str, RefScore] = {}
    for rec in records:
        out = outputs[rec.ref_id]
        counts = match_fields(out, rec.truth, case_sensitive)
        total = total + counts
        score = score_reference(counts)
        ref_scores[rec.ref_id] = score
        doc_scores.setdefault(rec.doc_id, []).append(score.f1)
        for t in types:
            per_type_counts[t] = per_type_counts[t] + match_fields(out.of_type(t), rec.truth.of_type(t),
                                                                   case_sensitive)

    p, r, f1 = score_counts(total.tp, total.fp, total.fn)
    doc_f1 = OrderedDict((d, sum(v) / len(v)) for d, v in doc_scores.items())
    macro = sum(doc_f1.values()) / len(doc_f1) if doc_f1 else 0.0
    per_type = {}
    for t, c in per_type_counts.items():
        tp_, tr_, tf_ = score_counts(c.tp, c.fp, c.fn)
        per_type[t] = {"precision": tp_, "recall": tr_, "f1": tf_, "tp": c.tp, "fp": c.fp, "fn": c.fn}
    return CorpusReport(
        system=system,
        n_refs=len(records),
        n_docs=len(doc_f1),
        counts=total,
        precision=p,
        recall=r,
        f1=f1,
        macro_f1=macro,
        fp_rate=false_positive_rate(p),
        fn_rate=false_negative_rate(r),
        per_type=per_type,
        doc_f1=doc_f1,
        ref_scores=ref_scores,
    )


def choice_distribution(choices: Iterable[str], parser_ids: Sequence[str]) -> Dict[str, float]:
    """Share of recommendations per parser, in registry order (zeros included)."""
    counts = Counter(choices)
    total = sum(counts.values())
    if total == 0:
        raise InvalidInput("choice distribution needs at least one recommendation")
    unknown = set(counts) - set(parser_ids)
    if unknown:
        raise InvalidInput(f"choices name unregistered parsers: {sorted(unknown)}")
    return {p: counts.get(p, 0) / total for p in parser_ids}
