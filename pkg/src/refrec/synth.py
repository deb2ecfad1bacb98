"""Synthetic labeled reference corpora rendered in several citation styles."""
from __future__ import annotations

import random
import re
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .core import DEFAULT_TYPES, Corpus, InvalidInput, ParsedReference, ReferenceRecord

SURNAMES = [
    "Acilar", "Arslan", "Smith", "Johnson", "Brown", "Taylor", "Wilson", "Clark", "Lewis", "Walker",
    "Young", "King", "Wright", "Hill", "Green", "Baker", "Nelson", "Carter", "Mitchell", "Roberts",
    "Turner", "Phillips", "Campbell", "Parker", "Evans", "Edwards", "Collins", "Stewart", "Morris",
    "Murphy", "Cook", "Rogers", "Morgan", "Cooper", "Peterson", "Reed", "Bailey", "Kelly", "Howard",
    "Wang", "Li", "Zhang", "Liu", "Chen", "Yang", "Huang", "Zhao", "Wu", "Zhou", "Xu", "Sun", "Ma",
    "Tanaka", "Suzuki", "Sato", "Kim", "Park", "Lee", "Nguyen", "Tran", "Kowalski", "Nowak",
    "Müller", "Schmidt", "Schneider", "Fischer", "Weber", "Becker", "García", "Martínez", "López",
    "González", "Pérez", "Sánchez", "Rossi", "Russo", "Ferrari", "Dubois", "Lefèvre", "Søgaard",
    "Dvořák", "Novák", "Ivanov", "Petrov", "Smith-Jones", "Garcia-Lopez", "Lloyd-Evans",
    "O'Brien", "D'Angelo", "van Dijk", "de Souza", "da Silva", "von Berg",
]
INITIALS = "ABCDEFGHIJKLMNOPRSTVW"

SOURCES = [
    "Expert Systems with Applications", "Journal of Organic Chemistry", "Chemical Reviews",
    "Tetrahedron Letters", "Organic Letters", "Inorganic Chemistry", "Analytical Chemistry",
    "Journal of Physical Chemistry", "Chemical Communications", "Green Chemistry",
    "Dalton Transactions", "Catalysis Science and Technology", "Polymer Chemistry",
    "Journal of Catalysis", "Chemistry of Materials", "Langmuir", "Macromolecules",
    "Biochemistry", "Nature Chemistry", "Angewandte Chemie International Edition",
    "Journal of Medicinal Chemistry", "Physical Review Letters", "Journal of Chemical Physics",
    "Crystal Growth and Design", "European Journal of Inorganic Chemistry",
    "J. Am. Chem. Soc.", "J. Org. Chem.", "Chem. Eur. J.", "Phys. Chem. Chem. Phys.",
    "Org. Biomol. Chem.", "Tetrahedron", "Synthesis", "Chemical Science",
]

TITLE_WORDS = [
    "synthesis", "characterization", "catalytic", "activity", "novel", "ligands", "selective",
    "oxidation", "reduction", "of", "the", "and", "in", "for", "with", "a", "study", "kinetic",
    "analysis", "structure", "properties", "complexes", "thermal", "stability", "polymer", "films",
    "solvent", "effects", "on", "asymmetric", "hydrogenation", "mechanism", "reaction", "surface",
    "nanoparticles", "copper", "palladium", "electrochemical", "behavior", "molecular", "dynamics",
    "simulation", "efficient", "route", "to", "functionalized", "derivatives", "spectroscopic",
    "investigation", "supramolecular", "assembly", "photophysical", "crystal", "growth",
]
TITLE_EXTRAS = ["2,4-dinitrophenol", "(II)", "pH", "X-ray", "NMR", "DFT", "C–H", "3D", "in situ"]

EN_DASH = "–"


@dataclass(frozen=True)
class Work:
    """Ground-truth facts for one cited work before rendering."""

    authors: Tuple[Tuple[str, str], ...]  # (surname, initials as letters)
    title: str
    source: str
    year: str
    volume: Optional[str]
    issue: Optional[str]
    first_page: str
    last_page: str


def canonical_author(surname: str, initials: str) -> str:
    return f"{surname}, {''.join(c + '.' for c in initials)}"


def _dotted(initials: str, sep: str = "") -> str:
    return sep.join(c + "." for c in initials)


def _join_and(names: List[str], conj: str, serial_comma: bool) -> str:
    if len(names) == 1:
        return names[0]
    head = ", ".join(names[:-1])
    return f"{head}{',' if serial_comma else ''} {conj} {names[-1]}"


def _short_last_page(first: str, last: str) -> str:
    i = 0
    if len(first) == len(last):
        while i < len(first) - 1 and first[i] == last[i]:
            i += 1
    return last[i:]


def _vol_issue(w: Work, fmt_issue: str) -> str:
    out = w.volume or ""
    if w.issue:
        out += fmt_issue.format(w.issue)
    return out


def render_bracket(w: Work, n: int) -> str:
    authors = ", ".join(f"{_dotted(ini)} {sur}" for sur, ini in w.authors)
    parts = [w.source]
    if w.volume:
        parts.append(_vol_issue(w, " ({})"))
    return f"[{n}] {authors}, {w.title}, {' '.join(parts)} ({w.year}) {w.first_page}{EN_DASH}{w.last_page}."


def render_apa(w: Work, n: int) -> str:
    names = [f"{sur}, {_dotted(ini, ' ')}" for sur, ini in w.authors]
    authors = _join_and(names, "&", serial_comma=True)
    tail = f"{w.source}, "
    if w.volume:
        tail += _vol_issue(w, "({})") + ", "
    return f"{authors} ({w.year}). {w.title}. {tail}{w.first_page}{EN_DASH}{w.last_page}."


def render_semicolon(w: Work, n: int) -> str:
    authors = "; ".join(f"{sur}, {_dotted(ini, ' ')}" for sur, ini in w.authors)
    tail = f"{w.source} {w.year}, "
    if w.volume:
        tail += _vol_issue(w, " ({})") + ", "
    return f"{authors} {w.title}. {tail}{w.first_page}{EN_DASH}{w.last_page}."


def render_dotenum(w: Work, n: int) -> str:
    authors = ", ".join(f"{sur} {ini}" for sur, ini in w.authors)
    source = w.source if w.source.endswith(".") else w.source + "."
    tail = f"{w.year};{_vol_issue(w, '({})')}" if w.volume else w.year
    return f"{n}. {authors}. {w.title}. {source} {tail}:{w.first_page}-{_short_last_page(w.first_page, w.last_page)}."


def render_nature(w: Work, n: int) -> str:
    names = [f"{sur}, {_dotted(ini, ' ')}" for sur, ini in w.authors]
    authors = _join_and(names, "&", serial_comma=False)
    vol = f" {w.volume}," if w.volume else ""
    return f"{authors} {w.title}. {w.source}{vol} {w.first_page}{EN_DASH}{w.last_page} ({w.year})."


def truth_for(w: Work, style: str) -> ParsedReference:
    fields = [("author", canonical_author(s, i)) for s, i in w.authors]
    fields += [("source", w.source), ("year", w.year)]
    if w.volume:
        fields.append(("volume", w.volume))
        # the nature layout never prints an issue
        if w.issue and style != "nature":
            fields.append(("issue", w.issue))
    fields.append(("page", w.first_page))
    return ParsedReference.of(fields)


RENDERERS: Dict[str, Callable[[Work, int], str]] = {
    "bracket": render_bracket,
    "apa": render_apa,
    "semicolon": render_semicolon,
    "dotenum": render_dotenum,
    "nature": render_nature,
}


@dataclass(frozen=True)
class SynthStyleSpec:
    name: str
    jitter: float = 0.15
    dropout: float = 0.1
    mixing: float = 0.1

    def __post_init__(self):
        if self.name not in RENDERERS:
            raise InvalidInput(f"unknown style {self.name!r}; known: {sorted(RENDERERS)}")
        for knob in ("jitter", "dropout", "mixing"):
            v = getattr(self, knob)
            if not 0.0 <= v <= 1.0:
                raise InvalidInput(f"{knob} must be a probability, got {v}")

    def render(self, w: Work, n: int) -> str:
        return RENDERERS[self.name](w, n)

    def to_json(self) -> dict:
        return asdict(self)


def default_styles(jitter: float = 0.15, dropout: float = 0.1, mixing: float = 0.1) -> List[SynthStyleSpec]:
    return [SynthStyleSpec(name, jitter, dropout, mixing) for name in RENDERERS]


# --- noise --------------------------------------------------------------------

def _swap_dash(s: str, rng: random.Random) -> str:
    return s.replace(EN_DASH, "-") if EN_DASH in s else s.replace("-", EN_DASH)


def _drop_final_period(s: str, rng: random.Random) -> str:
    return s[:-1] if s.endswith(".") else s


def _squeeze_comma(s: str, rng: random.Random) -> str:
    spots = [m.start() for m in re.finditer(", ", s)]
    if not spots:
        return s
    i = rng.choice(spots)
    return s[:i + 1] + s[i + 2:]


def _undot_initial(s: str, rng: random.Random) -> str:
    spots = [m.start() for m in re.finditer(r"\b[A-Z]\.", s)]
    if not spots:
        return s
    i = rng.choice(spots)
    return s[:i + 1] + s[i + 2:]


def _ampersand_to_and(s: str, rng: random.Random) -> str:
    return s.replace(" & ", " and ") if " & " in s else s.replace(", ", " , ", 1)


def _double_space(s: str, rng: random.Random) -> str:
    spots = [m.start() for m in re.finditer(" ", s)]
    if not spots:
        return s
    i = rng.choice(spots)
    return s[:i] + " " + s[i:]


def _unparen_year(s: str, rng: random.Random) -> str:
    return re.sub(r"\((\d{4})\)", r"\1", s, count=1)


def _pages_prefix(s: str, rng: random.Random) -> str:
    return re.sub(r"(\d+)([–-]\d+)(?=\D*$)", r"pp. \1\2", s, count=1)


def _append_doi(s: str, rng: random.Random) -> str:
    return f"{s} doi:10.{rng.randint(1000, 9999)}/{rng.choice('abcdefgh')}{rng.randint(100, 99999)}"


NOISE_OPS = [_swap_dash, _drop_final_period, _squeeze_comma, _undot_initial, _ampersand_to_and,
             _double_space, _unparen_year, _pages_prefix, _append_doi]


# --- sampling -----------------------------------------------------------------

def _sample_title(rng: random.Random) -> str:
    words = rng.choices(TITLE_WORDS, k=rng.randint(4, 11))
    if rng.random() < 0.2:
        words.insert(rng.randrange(len(words) + 1), rng.choice(TITLE_EXTRAS))
    title = " ".join(words)
    if rng.random() < 0.1:
        cut = rng.randrange(1, len(words))
        title = " ".join(words[:cut]) + ": " + " ".join(words[cut:])
    return title[0].upper() + title[1:]


def sample_work(rng: random.Random, dropout: float) -> Work:
    n_auth = rng.choices([1, 2, 3, 4], weights=[3, 4, 3, 2])[0]
    surnames = rng.sample(SURNAMES, n_auth)
    authors = tuple((s, "".join(rng.sample(INITIALS, rng.choice([1, 1, 2])))) for s in surnames)
    first = rng.randint(1, 9999)
    volume: Optional[str] = str(rng.randint(1, 150))
    issue: Optional[str] = str(rng.randint(1, 12)) if rng.random() < 0.75 else None
    if rng.random() < dropout:
        if rng.random() < 0.7:
            issue = None
        else:
            volume, issue = None, None
    return Work(
        authors=authors,
        title=_sample_title(rng),
        source=rng.choice(SOURCES),
        year=str(rng.randint(1950, 2024)),
        volume=volume,
        issue=issue,
        first_page=str(first),
        last_page=str(first + rng.randint(1, 30)),
    )


def synth(styles: Sequence[SynthStyleSpec], n_docs: int, refs_per_doc: int, seed: int,
          types: Sequence[str] = DEFAULT_TYPES) -> Corpus:
    """Generate a labeled corpus; document ``i`` has dominant style ``styles[i % len(styles)]``."""
    if len(styles) < 2:
        raise InvalidInput("need at least two styles")
    if n_docs < 1 or refs_per_doc < 1:
        raise InvalidInput("n_docs and refs_per_doc must be >= 1")
    rng = random.Random(seed)
    width = len(str(n_docs - 1))
    records = []
    for d in range(n_docs):
        dominant = styles[d % len(styles)]
        doc_id = f"doc{d:0{width}d}"
        for k in range(refs_per_doc):
            style = dominant
            if rng.random() < dominant.mixing:
                style = rng.choice([s for s in styles if s.name != dominant.name])
            work = sample_work(rng, style.dropout)
            raw = style.render(work, k + 1)
            if rng.random() < style.jitter:
                raw = rng.choice(NOISE_OPS)(raw, rng)
            truth = truth_for(work, style.name).restrict(types)
            records.append(ReferenceRecord(f"{doc_id}-{k + 1}", doc_id, raw, truth))
    return Corpus(tuple(records), tuple(types))


def clean_styles(styles: Sequence[SynthStyleSpec]) -> List[SynthStyleSpec]:
    return [replace(s, jitter=0.0, dropout=0.0, mixing=0.0) for s in styles]
