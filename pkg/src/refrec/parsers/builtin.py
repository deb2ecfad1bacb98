"""Deterministic template parsers, each tuned to one citation layout.

A template is an ordered list of rules. Full rules must match the whole
(stripped) string and the first one that does wins; partial rules are
searched afterwards and only fill metadata types still missing.
Capture groups are named after metadata types; an ``author`` capture holds
the whole author block and is split by the template's author splitter.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..core import DEFAULT_TYPES, ParsedReference

_INITIAL = r"[A-Z]\.?"
_DASH = r"[–-]"


def canonical_name(surname: str, initials: str) -> Optional[str]:
    surname = surname.strip(" ,.;&")
    letters = re.findall(r"[A-Z]", initials)
    if not surname or not letters:
        return None
    return f"{surname}, {''.join(c + '.' for c in letters)}"


def split_initials_first(block: str) -> List[str]:
    """'A.M. Acilar, A. Arslan' -> ['Acilar, A.M.', 'Arslan, A.']"""
    out = []
    for part in re.split(r",\s*|\s+and\s+", block):
        m = re.fullmatch(r"((?:[A-Z]\.\s?)+)\s*(.+)", part.strip())
        if m:
            name = canonical_name(m.group(2), m.group(1))
            if name:
                out.append(name)
    return out


def split_surname_comma_initials(block: str) -> List[str]:
    """'Hill, G. T., & da Silva, J.' -> ['Hill, G.T.', 'da Silva, J.']"""
    out = []
    for m in re.finditer(r"([^,;&]+?),\s*((?:[A-Z]\.?\s?){1,3})(?=,|;|\s&|\sand\s|$)", block.strip()):
        surname = re.sub(r"^(?:&|and)\s+", "", m.group(1).strip())
        name = canonical_name(surname, m.group(2))
        if name:
            out.append(name)
    return out


def split_semicolons(block: str) -> List[str]:
    """'von Berg, J.; da Silva, I.' -> ['von Berg, J.', 'da Silva, I.']"""
    out = []
    for part in block.split(";"):
        if "," not in part:
            continue
        surname, _, initials = part.rpartition(",")
        name = canonical_name(surname, initials)
        if name:
            out.append(name)
    return out


def split_surname_initials(block: str) -> List[str]:
    """'Park WG, Phillips OI' -> ['Park, W.G.', 'Phillips, O.I.']"""
    out = []
    for part in block.split(","):
        m = re.fullmatch(r"\s*(.+?)\s+([A-Z]{1,3})\s*", part)
        if m:
            name = canonical_name(m.group(1), m.group(2))
            if name:
                out.append(name)
    return out


def first_author_surname(block: str) -> List[str]:
    """Weak heuristic: first 'Surname, I.' found anywhere in the block."""
    m = re.search(r"([A-Z][\w'’-]+),\s*((?:[A-Z]\.\s?)+)", block)
    if not m:
        return []
    name = canonical_name(m.group(1), m.group(2))
    return [name] if name else []


def keep_abbreviation_dot(source: str) -> str:
    """Vancouver output swallows the period after abbreviated journal names."""
    source = source.strip()
    if re.search(r"\b[A-Z][a-z]*\. ", source) and not source.endswith("."):
        return source + "."
    return source


@dataclass(frozen=True)
class Rule:
    pattern: str
    full: bool = True

    def compiled(self) -> "re.Pattern[str]":
        return _compile(self.pattern)


_CACHE: Dict[str, "re.Pattern[str]"] = {}


def _compile(pattern: str) -> "re.Pattern[str]":
    rx = _CACHE.get(pattern)
    if rx is None:
        rx = _CACHE[pattern] = re.compile(pattern)
    return rx


@dataclass(frozen=True)
class StyleTemplate:
    name: str
    rules: Tuple[Rule, ...]
    author_splitter: Callable[[str], List[str]] = split_surname_comma_initials
    postprocess: Dict[str, Callable[[str], str]] = field(default_factory=dict)

    def capture_names(self) -> set:
        names = set()
        for rule in self.rules:
            names.update(rule.compiled().groupindex)
        return names

    def check(self, types: Sequence[str] = DEFAULT_TYPES) -> None:
        unknown = self.capture_names() - set(types)
        if unknown:
            raise ValueError(f"template {self.name!r} captures unknown types {sorted(unknown)}")

    def _fields_from(self, groups: Dict[str, Optional[str]]) -> Dict[str, List[str]]:
        found: Dict[str, List[str]] = {}
        for type_, value in groups.items():
            if value is None or not value.strip():
                continue
            if type_ == "author":
                names = self.author_splitter(value)
                if names:
                    found["author"] = names
                continue
            value = value.strip()
            if type_ in self.postprocess:
                value = self.postprocess[type_](value)
            found[type_] = [value]
        return found

    def apply(self, raw: str) -> ParsedReference:
        text = raw.strip()
        if not text:
            return ParsedReference()
        found: Dict[str, List[str]] = {}
        for rule in self.rules:
            if not rule.full:
                continue
            m = rule.compiled().fullmatch(text)
            if m:
                found = self._fields_from(m.groupdict())
                break
        for rule in self.rules:
            if rule.full:
                continue
            m = rule.compiled().search(text)
            if not m:
                continue
            for type_, values in self._fields_from(m.groupdict()).items():
                found.setdefault(type_, values)
        order = {t: i for i, t in enumerate(DEFAULT_TYPES)}
        pairs = [(t, v) for t in sorted(found, key=lambda t: (order.get(t, len(order)), t)) for v in found[t]]
        return ParsedReference.of(pairs)


_END = r"\.?(?:\s+doi:\S+)?"

# last-resort guesses shared by the style parsers; right most of the time, not always
LOOSE_YEAR = Rule(r"\b(?P<year>19\d\d|20\d\d)\b", full=False)
LOOSE_PAGE = Rule(r"(?P<page>\d+)\s*" + _DASH + r"\s*\d+", full=False)

BRACKET = StyleTemplate(
    "bracket_numeric",
    (
        Rule(r"\[\d+\]\s*(?P<author>(?:[A-Z]\.(?:[A-Z]\.)*\s?[^,]+,\s*)*[A-Z]\.(?:[A-Z]\.)*\s?[^,]+),\s*.+,"
             r"\s*(?P<source>[^,]+?)\s+(?P<volume>\d+)(?:\s+\((?P<issue>\d+)\))?\s+\((?P<year>\d{4})\)\s+"
             r"(?P<page>\d+)" + _DASH + r"\d+" + _END),
        Rule(r"\[\d+\]\s*(?P<author>(?:[A-Z]\.(?:[A-Z]\.)*\s?[^,]+,\s*)*[A-Z]\.(?:[A-Z]\.)*\s?[^,]+),\s*.+,"
             r"\s*(?P<source>[^,]+?)\s+\((?P<year>\d{4})\)\s+(?P<page>\d+)" + _DASH + r"\d+" + _END),
        Rule(r"\((?P<year>\d{4})\)", full=False),
        Rule(r"(?P<volume>\d+)\s+\((?P<issue>\d{1,2})\)\s+\(\d{4}\)", full=False),
        Rule(r"\)\s+(?P<page>\d+)\s*" + _DASH, full=False),
        Rule(r"^\[\d+\]\s*(?P<author>[A-Z]\.(?:[A-Z]\.)*\s?[^,]+)", full=False),
        LOOSE_YEAR,
        LOOSE_PAGE,
    ),
    author_splitter=split_initials_first,
)

APA = StyleTemplate(
    "author_year",
    (
        Rule(r"(?P<author>.+?)\s+\((?P<year>\d{4})\)\.\s+.+?\.\s+(?P<source>.+?),\s+"
             r"(?P<volume>\d+)(?:\((?P<issue>\d+)\))?,\s+(?P<page>\d+)" + _DASH + r"\d+" + _END),
        Rule(r"(?P<author>.+?)\s+\((?P<year>\d{4})\)\.\s+.+?\.\s+(?P<source>.+?),\s+"
             r"(?P<page>\d+)" + _DASH + r"\d+" + _END),
        Rule(r"\((?P<year>\d{4})\)", full=False),
        Rule(r"^(?P<author>[^()]+?)\s+\(", full=False),
        Rule(r",\s+(?P<volume>\d+)\((?P<issue>\d+)\),", full=False),
        Rule(r",\s+(?P<page>\d+)\s*" + _DASH + r"\s*\d+\.?$", full=False),
        LOOSE_YEAR,
        LOOSE_PAGE,
    ),
    author_splitter=split_surname_comma_initials,
)

SEMICOLON = StyleTemplate(
    "semicolon_delimited",
    (
        Rule(r"(?P<author>(?:[^;]+?,\s*(?:[A-Z]\.\s?)+;\s*)*[^;]+?,\s*(?:[A-Z]\.\s?)*[A-Z]\.)\s+[^;]+?\.\s+"
             r"(?P<source>[^;]+?)\s+(?P<year>\d{4}),\s+(?P<volume>\d+)(?:\s+\((?P<issue>\d+)\))?,\s+"
             r"(?P<page>\d+)" + _DASH + r"\d+" + _END),
        Rule(r"(?P<author>(?:[^;]+?,\s*(?:[A-Z]\.\s?)+;\s*)*[^;]+?,\s*(?:[A-Z]\.\s?)*[A-Z]\.)\s+[^;]+?\.\s+"
             r"(?P<source>[^;]+?)\s+(?P<year>\d{4}),\s+(?P<page>\d+)" + _DASH + r"\d+" + _END),
        Rule(r"\s(?P<year>\d{4}),\s", full=False),
        Rule(r"\d{4},\s+(?P<volume>\d+)(?:\s+\((?P<issue>\d+)\))?,", full=False),
        Rule(r",\s+(?P<page>\d+)\s*" + _DASH, full=False),
        Rule(r"^(?P<author>(?:[^;.]+?,\s*(?:[A-Z]\.\s?)+;\s*)+[^;.]+?,\s*(?:[A-Z]\.\s?)*[A-Z]\.)", full=False),
        LOOSE_YEAR,
        LOOSE_PAGE,
    ),
    author_splitter=split_semicolons,
)

DOTENUM = StyleTemplate(
    "dot_enumerated",
    (
        Rule(r"\d+\.\s+(?P<author>[^.]+?)\.\s+.+?\.\s+(?P<source>.+?)\.?\s+(?P<year>\d{4})"
             r"(?:;(?P<volume>\d+)(?:\((?P<issue>\d+)\))?)?:(?P<page>\d+)(?:-\d+)?" + _END),
        Rule(r"(?P<year>\d{4});(?P<volume>\d+)(?:\((?P<issue>\d+)\))?:(?P<page>\d+)", full=False),
        Rule(r"(?P<year>\d{4}):(?P<page>\d+)", full=False),
        Rule(r"^\d+\.\s+(?P<author>[^.]+?)\.\s", full=False),
        LOOSE_YEAR,
        LOOSE_PAGE,
    ),
    author_splitter=split_surname_initials,
    postprocess={"source": keep_abbreviation_dot},
)

GENERIC = StyleTemplate(
    "generic",
    (
        Rule(r"\b(?P<year>19[5-9]\d|20[0-2]\d)\b", full=False),
        Rule(r"(?P<page>\d+)\s*" + _DASH + r"\s*\d+", full=False),
        Rule(r"\b(?P<volume>\d{1,3})\s*[,(:]", full=False),
        Rule(r"(?P<author>[A-Z][\w'’-]+,\s*(?:[A-Z]\.\s?)+)", full=False),
    ),
    author_splitter=first_author_surname,
)

BUILTIN_TEMPLATES: Dict[str, StyleTemplate] = {
    t.name: t for t in (BRACKET, APA, SEMICOLON, DOTENUM, GENERIC)
}
