"""Uniform access to reference parsers and the cached extraction table."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from ..core import DEFAULT_TYPES, InvalidInput, ParsedReference, ReferenceRecord, read_json
from .builtin import BUILTIN_TEMPLATES, StyleTemplate
from .external import DEFAULT_TIMEOUT, ExternalParser

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParserDescriptor:
    parser_id: str
    kind: str = "builtin"  # "builtin" or "external"
    template: Optional[str] = None
    command: Tuple[str, ...] = ()
    timeout: float = DEFAULT_TIMEOUT

    def to_json(self) -> dict:
        out = {"parser_id": self.parser_id, "kind": self.kind}
        if self.kind == "builtin":
            out["template"] = self.template or self.parser_id
        else:
            out["command"] = list(self.command)
            out["timeout"] = self.timeout
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ParserDescriptor":
        kind = obj.get("kind", "builtin")
        if kind not in ("builtin", "external"):
            raise InvalidInput(f"unknown parser kind {kind!r}")
        if kind == "external" and not obj.get("command"):
            raise InvalidInput(f"external parser {obj.get('parser_id')!r} needs a command")
        return cls(
            parser_id=obj["parser_id"],
            kind=kind,
            template=obj.get("template"),
            command=tuple(obj.get("command", ())),
            timeout=float(obj.get("timeout", DEFAULT_TIMEOUT)),
        )


class Registry:
    """Ordered parser collection; the order breaks every tie downstream."""

    def __init__(self, descriptors: Iterable[ParserDescriptor], types: Sequence[str] = DEFAULT_TYPES):
        self.descriptors: Tuple[ParserDescriptor, ...] = tuple(descriptors)
        self.types = tuple(types)
        ids = [d.parser_id for d in self.descriptors]
        if not ids:
            raise InvalidInput("registry is empty")
        if len(set(ids)) != len(ids):
            raise InvalidInput(f"duplicate parser ids in registry: {ids}")
        for d in self.descriptors:
            if d.kind == "builtin":
                name = d.template or d.parser_id
                if name not in BUILTIN_TEMPLATES:
                    raise InvalidInput(f"unknown builtin template {name!r}")
        self._external: Dict[str, ExternalParser] = {}

    @property
    def ids(self) -> List[str]:
        return [d.parser_id for d in self.descriptors]

    def __len__(self) -> int:
        return len(self.descriptors)

    def __iter__(self) -> Iterator[ParserDescriptor]:
        return iter(self.descriptors)

    def get(self, parser_id: str) -> ParserDescriptor:
        for d in self.descriptors:
            if d.parser_id == parser_id:
                return d
        raise KeyError(parser_id)

    def subset(self, ids: Sequence[str]) -> "Registry":
        return Registry([self.get(i) for i in ids], self.types)

    def external(self, d: ParserDescriptor) -> ExternalParser:
        proc = self._external.get(d.parser_id)
        if proc is None:
            proc = self._external[d.parser_id] = ExternalParser(d.command, d.timeout, self.types)
        return proc

    def close(self) -> None:
        for proc in self._external.values():
            proc.close()
        self._external.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def to_json(self) -> list:
        return [d.to_json() for d in self.descriptors]

    @classmethod
    def from_json(cls, items: list, types: Sequence[str] = DEFAULT_TYPES) -> "Registry":
        return cls([ParserDescriptor.from_json(o) for o in items], types)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


def builtin_registry(types: Sequence[str] = DEFAULT_TYPES) -> Registry:
    return Registry([ParserDescriptor(name, "builtin", name) for name in BUILTIN_TEMPLATES], types)


def load_registry(path: Optional[str], types: Sequence[str] = DEFAULT_TYPES) -> Registry:
    if path is None:
        return builtin_registry(types)
    return Registry.from_json(read_json(path), types)


def parse(registry: Registry, parser_id: str, raw: str, ref_id: str = "0") -> ParsedReference:
    d = registry.get(parser_id)
    if d.kind == "builtin":
        template: StyleTemplate = BUILTIN_TEMPLATES[d.template or d.parser_id]
        try:
            return template.apply(raw).restrict(registry.types)
        except Exception:  # noqa: BLE001
            log.exception("builtin parser %s failed on %s", parser_id, ref_id)
            return ParsedReference.failure()
    return registry.external(d).parse(raw, ref_id)


@dataclass
class ExtractionTable:
    """Every parser's output on every reference of one split."""

    parser_ids: List[str]
    ref_ids: List[str]
    cells: Dict[Tuple[str, str], ParsedReference] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cells)

    def get(self, parser_id: str, ref_id: str) -> ParsedReference:
        return self.cells[(parser_id, ref_id)]

    def outputs_for(self, ref_id: str) -> Dict[str, ParsedReference]:
        return {p: self.cells[(p, ref_id)] for p in self.parser_ids}

    def is_complete(self) -> bool:
        return all((p, r) in self.cells for p in self.parser_ids for r in self.ref_ids)

    def rows(self) -> Iterator[dict]:
        for p in self.parser_ids:
            for r in self.ref_ids:
                out = self.cells[(p, r)]
                yield {"parser_id": p, "ref_id": r, "failed": out.failed, "fields": out.to_json()}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in self.rows():
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path) -> "ExtractionTable":
        parser_ids: List[str] = []
        ref_ids: List[str] = []
        seen_p, seen_r = set(), set()
        cells = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                p, r = row["parser_id"], row["ref_id"]
                if p not in seen_p:
                    seen_p.add(p)
                    parser_ids.append(p)
                if r not in seen_r:
                    seen_r.add(r)
                    ref_ids.append(r)
                cells[(p, r)] = ParsedReference.from_json(row["fields"], bool(row.get("failed", False)))
        return cls(parser_ids, ref_ids, cells)


def refs_hash(refs: Sequence[ReferenceRecord]) -> str:
    h = hashlib.sha256()
    for r in refs:
        h.update(json.dumps([r.ref_id, r.raw], ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def run_all_parsers(registry: Registry, refs: Sequence[ReferenceRecord],
                    cache_dir: Optional[str] = None) -> ExtractionTable:
    """Apply every parser to every reference.

    With ``cache_dir`` each parser's column is stored under
    ``<parser_id>-<refs hash>.jsonl`` and reused on later runs.
    """
    if len(registry) == 0:
        raise InvalidInput("registry is empty")
    table = ExtractionTable(registry.ids, [r.ref_id for r in refs])
    key = refs_hash(refs)
    for d in registry:
        cache_file = None
        if cache_dir is not None:
            Path(cache_dir).mkdir(parents=True, exist_ok=True)
            cache_file = Path(cache_dir) / f"{d.parser_id}-{registry.fingerprint()[:12]}-{key[:16]}.jsonl"
            if cache_file.exists():
                cached = ExtractionTable.load(cache_file)
                if cached.ref_ids == table.ref_ids:
                    for r in table.ref_ids:
                        table.cells[(d.parser_id, r)] = cached.get(d.parser_id, r)
                    continue
        for r in refs:
            table.cells[(d.parser_id, r.ref_id)] = parse(registry, d.parser_id, r.raw, r.ref_id)
        if cache_file is not None:
            column = ExtractionTable([d.parser_id], table.ref_ids,
                                     {k: v for k, v in table.cells.items() if k[0] == d.parser_id})
            column.save(cache_file)
    return table


__all__ = [
    "BUILTIN_TEMPLATES", "ExternalParser", "ExtractionTable", "ParserDescriptor", "Registry",
    "builtin_registry", "load_registry", "parse", "refs_hash", "run_all_parsers",
]
