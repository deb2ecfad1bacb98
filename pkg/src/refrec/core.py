"""Domain types for references, metadata fields, corpora and document splits."""
from __future__ import annotations

import hashlib
import json
import math
import random
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

DEFAULT_TYPES: Tuple[str, ...] = ("author", "source", "year", "volume", "issue", "page")
SPLIT_NAMES: Tuple[str, ...] = ("train", "meta", "test")


class InvalidInput(ValueError):
    """Raised when caller-supplied data violates an operation's precondition."""


def check_types(types: Sequence[str]) -> Tuple[str, ...]:
    labels = tuple(types)
    if not labels:
        raise InvalidInput("metadata type set is empty")
    if any(not t or t != t.strip() for t in labels):
        raise InvalidInput(f"metadata type labels must be non-empty: {labels!r}")
    if len(set(labels)) != len(labels):
        raise InvalidInput(f"metadata type labels must be unique: {labels!r}")
    return labels


@dataclass(frozen=True, order=True)
class MetadataField:
    type: str
    value: str

    def to_json(self) -> dict:
        return {"type": self.type, "value": self.value}


@dataclass(frozen=True)
class ParsedReference:
    """Multiset of metadata fields.

    Used both for parser output and for ground truth. ``failed`` marks parser
    output that came from a crash, timeout or malformed response; such a
    reference always has no fields.
    """

    fields: Tuple[MetadataField, ...] = ()
    failed: bool = False

    @classmethod
    def of(cls, pairs: Iterable[Tuple[str, str]], failed: bool = False) -> "ParsedReference":
        return cls(tuple(MetadataField(t, v) for t, v in pairs), failed)

    @classmethod
    def failure(cls) -> "ParsedReference":
        return cls((), True)

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self) -> Iterator[MetadataField]:
        return iter(self.fields)

    def of_type(self, type_: str) -> "ParsedReference":
        return ParsedReference(tuple(f for f in self.fields if f.type == type_), self.failed)

    def types(self) -> set:
        return {f.type for f in self.fields}

    def restrict(self, types: Iterable[str]) -> "ParsedReference":
        keep = set(types)
        return ParsedReference(tuple(f for f in self.fields if f.type in keep), self.failed)

    def counter(self) -> Counter:
        return Counter((f.type, f.value) for f in self.fields)

    def to_json(self) -> List[dict]:
        return [f.to_json() for f in self.fields]

    @classmethod
    def from_json(cls, items: Iterable[dict], failed: bool = False) -> "ParsedReference":
        return cls(tuple(MetadataField(d["type"], d["value"]) for d in items), failed)


@dataclass(frozen=True)
class ReferenceRecord:
    ref_id: str
    doc_id: str
    raw: str
    truth: Optional[ParsedReference] = None

    def to_json(self) -> dict:
        out = {"doc_id": self.doc_id, "ref_id": self.ref_id, "ref": self.raw}
        if self.truth is not None:
            out["truth"] = self.truth.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ReferenceRecord":
        truth = obj.get("truth")
        return cls(
            ref_id=str(obj["ref_id"]),
            doc_id=str(obj["doc_id"]),
            raw=obj["ref"],
            truth=None if truth is None else ParsedReference.from_json(truth),
        )

    def without_truth(self) -> "ReferenceRecord":
        return ReferenceRecord(self.ref_id, self.doc_id, self.raw, None)


@dataclass(frozen=True)
class Corpus:
    records: Tuple[ReferenceRecord, ...]
    types: Tuple[str, ...] = DEFAULT_TYPES

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ReferenceRecord]:
        return iter(self.records)

    def doc_ids(self) -> List[str]:
        """Document ids in order of first appearance."""
        return list(OrderedDict.fromkeys(r.doc_id for r in self.records))

    def by_doc(self) -> "OrderedDict[str, List[ReferenceRecord]]":
        groups: "OrderedDict[str, List[ReferenceRecord]]" = OrderedDict()
        for r in self.records:
            groups.setdefault(r.doc_id, []).append(r)
        return groups

    def subset(self, doc_ids: Iterable[str]) -> "Corpus":
        keep = set(doc_ids)
        return Corpus(tuple(r for r in self.records if r.doc_id in keep), self.types)

    def is_labeled(self) -> bool:
        return all(r.truth is not None for r in self.records)


@dataclass(frozen=True)
class Violation:
    ref_id: str
    rule: str


def validate_corpus(corpus: Corpus) -> List[Violation]:
    """Return every invariant violation in the corpus; empty means valid."""
    violations: List[Violation] = []
    allowed = set(corpus.types)
    seen = set()
    for r in corpus.records:
        if r.ref_id in seen:
            violations.append(Violation(r.ref_id, "duplicate ref_id"))
        seen.add(r.ref_id)
        if not r.raw or not r.raw.strip():
            violations.append(Violation(r.ref_id, "empty reference string"))
        if not r.doc_id:
            violations.append(Violation(r.ref_id, "empty doc_id"))
        if r.truth is not None:
            for f in r.truth:
                if f.type not in allowed:
                    violations.append(Violation(r.ref_id, f"unknown metadata type {f.type!r}"))
                if not f.value.strip():
                    violations.append(Violation(r.ref_id, f"empty value for {f.type!r}"))
    return violations


@dataclass(frozen=True)
class SplitAssignment:
    assignment: Dict[str, str]
    seed: int
    fractions: Tuple[float, float, float]

    def docs(self, name: str) -> List[str]:
        return [d for d, s in self.assignment.items() if s == name]

    def counts(self) -> Dict[str, int]:
        c = Counter(self.assignment.values())
        return {name: c.get(name, 0) for name in SPLIT_NAMES}

    def to_json(self) -> dict:
        return {"seed": self.seed, "fractions": list(self.fractions), "assignment": self.assignment}

    @classmethod
    def from_json(cls, obj: dict) -> "SplitAssignment":
        return cls(dict(obj["assignment"]), int(obj["seed"]), tuple(obj["fractions"]))


def largest_remainder(total: int, fractions: Sequence[float]) -> List[int]:
    quotas = [total * f for f in fractions]
    counts = [math.floor(q) for q in quotas]
    leftover = total - sum(counts)
    # ties on the remainder go to the earlier split
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split_corpus(corpus: Corpus, fractions: Sequence[float], seed: int) -> SplitAssignment:
    """Randomly assign whole documents to the train/meta/test splits."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise InvalidInput("fractions must have three entries (train, meta, test)")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInput(f"fractions must be non-negative and sum to 1, got {fractions}")
    docs = sorted(corpus.doc_ids())
    random.Random(seed).shuffle(docs)
    counts = largest_remainder(len(docs), fractions)
    assignment: Dict[str, str] = {}
    start = 0
    for name, n in zip(SPLIT_NAMES, counts):
        for d in docs[start:start + n]:
            assignment[d] = name
        start += n
    ordered = {d: assignment[d] for d in corpus.doc_ids()}
    return SplitAssignment(ordered, seed, fractions)


def duplicate_strings_across_splits(corpus: Corpus, split: SplitAssignment) -> int:
    """Number of distinct reference strings that occur in more than one split."""
    where: Dict[str, set] = {}
    for r in corpus:
        where.setdefault(r.raw, set()).add(split.assignment[r.doc_id])
    return sum(1 for s in where.values() if len(s) > 1)


# --- serialization -----------------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInput(f"{path}:{lineno}: {exc}") from None


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: {exc}") from None


def load_corpus(path, types: Sequence[str] = DEFAULT_TYPES) -> Corpus:
    try:
        records = tuple(ReferenceRecord.from_json(o) for o in read_jsonl(path))
    except KeyError as exc:
        raise InvalidInput(f"{path}: record missing key {exc}") from None
    return Corpus(records, check_types(types))


def save_corpus(corpus: Corpus, path) -> None:
    write_jsonl(path, (r.to_json() for r in corpus))


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def corpus_hash(corpus: Corpus) -> str:
    h = hashlib.sha256()
    for r in corpus:
        h.update((json.dumps(r.to_json(), ensure_ascii=False) + "\n").encode("utf-8"))
    return h.hexdigest()


def derive_seed(root: int, stage: str) -> int:
    """Fork a stage-specific seed from the root seed."""
    digest = hashlib.sha256(f"{root}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "big")
