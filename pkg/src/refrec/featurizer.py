"""Reference string -> feature vector: punctuation heuristics plus token-class n-grams."""
from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


class TokenClass(str, Enum):
    NUMBER = "NUMBER"
    CAPITALIZED_WORD = "CAPITALIZED_WORD"
    LOWERCASE_WORD = "LOWERCASE_WORD"
    UPPERCASE_WORD = "UPPERCASE_WORD"
    UPPERCASE_LETTER = "UPPERCASE_LETTER"
    COMMA = "COMMA"
    DOT = "DOT"
    SEMICOLON = "SEMICOLON"
    COLON = "COLON"
    HYPHEN = "HYPHEN"
    LPAREN = "LPAREN"
    RPAREN = "RPAREN"
    LBRACKET = "LBRACKET"
    RBRACKET = "RBRACKET"
    QUOTE = "QUOTE"
    OTHER = "OTHER"


PUNCTUATION: Dict[str, TokenClass] = {
    ",": TokenClass.COMMA,
    ".": TokenClass.DOT,
    ";": TokenClass.SEMICOLON,
    ":": TokenClass.COLON,
    "-": TokenClass.HYPHEN,
    "‐": TokenClass.HYPHEN,
    "‑": TokenClass.HYPHEN,
    "‒": TokenClass.HYPHEN,
    "–": TokenClass.HYPHEN,
    "—": TokenClass.HYPHEN,
    "−": TokenClass.HYPHEN,
    "(": TokenClass.LPAREN,
    ")": TokenClass.RPAREN,
    "[": TokenClass.LBRACKET,
    "]": TokenClass.RBRACKET,
    '"': TokenClass.QUOTE,
    "'": TokenClass.QUOTE,
    "‘": TokenClass.QUOTE,
    "’": TokenClass.QUOTE,
    "“": TokenClass.QUOTE,
    "”": TokenClass.QUOTE,
}

HEURISTIC_NAMES = (
    "length",
    "comma_count",
    "comma_fraction",
    "dot_count",
    "dot_fraction",
    "semicolon_count",
    "semicolon_fraction",
    "starts_bracket_enum",
    "starts_dot_enum",
)
N_HEURISTIC = len(HEURISTIC_NAMES)

# "tokens" divides punctuation counts by the token count, "chars" by the string length.
FRACTION_DENOMINATOR = "tokens"

_BRACKET_ENUM = re.compile(r"\s*\[\d+\]")
_DOT_ENUM = re.compile(r"\s*\d+\.")


@dataclass(frozen=True)
class Token:
    text: str
    cls: TokenClass
    position: int


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() and ch not in PUNCTUATION


def classify_token(text: str) -> TokenClass:
    if not text:
        raise ValueError("cannot classify an empty token")
    if len(text) == 1 and text in PUNCTUATION:
        return PUNCTUATION[text]
    if all(unicodedata.category(c) == "Nd" for c in text):
        return TokenClass.NUMBER
    if text.isalpha():
        if len(text) == 1:
            return TokenClass.UPPERCASE_LETTER if text.isupper() else TokenClass.LOWERCASE_WORD
        if text.isupper():
            return TokenClass.UPPERCASE_WORD
        if text[0].isupper() and text[1:].islower():
            return TokenClass.CAPITALIZED_WORD
        if text.islower():
            return TokenClass.LOWERCASE_WORD
    return TokenClass.OTHER


def tokenize(raw: str) -> List[Token]:
    """Split on whitespace; letter/digit runs are words, every other character stands alone."""
    texts: List[str] = []
    for chunk in raw.split():
        run = []
        for ch in chunk:
            if _is_word_char(ch):
                run.append(ch)
                continue
            if run:
                texts.append("".join(run))
                run = []
            texts.append(ch)
        if run:
            texts.append("".join(run))
    return [Token(t, classify_token(t), i) for i, t in enumerate(texts)]


@dataclass(frozen=True)
class HeuristicFeatures:
    length: int
    comma_count: int
    comma_fraction: float
    dot_count: int
    dot_fraction: float
    semicolon_count: int
    semicolon_fraction: float
    starts_bracket_enum: int
    starts_dot_enum: int

    def as_list(self) -> List[float]:
        return [float(getattr(self, name)) for name in HEURISTIC_NAMES]


def heuristic_features(raw: str, tokens: Optional[List[Token]] = None,
                       denominator: str = FRACTION_DENOMINATOR) -> HeuristicFeatures:
    if tokens is None:
        tokens = tokenize(raw)
    if denominator == "tokens":
        denom = len(tokens)
    elif denominator == "chars":
        denom = len(raw)
    else:
        raise ValueError(f"unknown fraction denominator {denominator!r}")
    counts = [raw.count(c) for c in ",.;"]
    fracs = [c / denom if denom else 0.0 for c in counts]
    return HeuristicFeatures(
        length=len(raw),
        comma_count=counts[0],
        comma_fraction=fracs[0],
        dot_count=counts[1],
        dot_fraction=fracs[1],
        semicolon_count=counts[2],
        semicolon_fraction=fracs[2],
        starts_bracket_enum=int(_BRACKET_ENUM.match(raw) is not None),
        starts_dot_enum=int(_DOT_ENUM.match(raw) is not None),
    )


Pattern = Tuple[TokenClass, ...]


def extract_ngrams(tokens: Sequence[Token], sizes: Sequence[int] = (3, 4)) -> Counter:
    classes = [t.cls for t in tokens]
    grams: Counter = Counter()
    for n in sizes:
        for i in range(len(classes) - n + 1):
            grams[tuple(classes[i:i + n])] += 1
    return grams


def pattern_key(p: Pattern) -> Tuple[str, ...]:
    return tuple(c.value for c in p)


def pattern_from_names(names: Iterable[str]) -> Pattern:
    p = tuple(TokenClass(n) for n in names)
    if len(p) not in (3, 4):
        raise ValueError(f"n-gram pattern must have length 3 or 4, got {len(p)}")
    return p


@dataclass(frozen=True)
class NgramVocabulary:
    patterns: Tuple[Pattern, ...]
    provenance: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(set(self.patterns)) != len(self.patterns):
            raise ValueError("vocabulary patterns must be distinct")

    @property
    def size(self) -> int:
        return len(self.patterns)

    @property
    def dimension(self) -> int:
        return N_HEURISTIC + len(self.patterns)

    def feature_names(self) -> List[str]:
        return list(HEURISTIC_NAMES) + ["-".join(pattern_key(p)) for p in self.patterns]

    def to_json(self) -> dict:
        return {"patterns": [list(pattern_key(p)) for p in self.patterns], **self.provenance}

    @classmethod
    def from_json(cls, obj: dict) -> "NgramVocabulary":
        provenance = {k: v for k, v in obj.items() if k != "patterns"}
        return cls(tuple(pattern_from_names(p) for p in obj["patterns"]), provenance)


def featurize(raw: str, vocab: NgramVocabulary) -> np.ndarray:
    tokens = tokenize(raw)
    heur = heuristic_features(raw, tokens).as_list()
    present = extract_ngrams(tokens)
    indicators = [1.0 if p in present else 0.0 for p in vocab.patterns]
    return np.array(heur + indicators, dtype=float)


def featurize_many(raws: Sequence[str], vocab: NgramVocabulary) -> np.ndarray:
    X = np.zeros((len(raws), vocab.dimension))
    for i, raw in enumerate(raws):
        X[i] = featurize(raw, vocab)
    return X


def best_parser_labels(f1: np.ndarray) -> np.ndarray:
    """Index of the highest-F1 parser per row; argmax already favours the lowest index on ties."""
    return np.argmax(f1, axis=1)


def build_vocabulary(raws: Sequence[str], f1: np.ndarray, k: int = 150,
                     forest_params: Optional[dict] = None, seed: int = 0) -> NgramVocabulary:
    """Select the ``k`` most important n-gram patterns for telling parsers apart.

    ``f1`` is an (n_refs, n_parsers) matrix in registry order. The forest is
    trained to predict the best parser of each reference from binary
    presence indicators of every candidate pattern.
    """
    from .learners.forest import ForestParams, feature_importances, fit_random_forest

    if not len(raws):
        raise ValueError("cannot build a vocabulary from zero references")
    if k < 1:
        raise ValueError("vocabulary size must be >= 1")
    f1 = np.asarray(f1, dtype=float)
    if f1.shape[0] != len(raws):
        raise ValueError("F1 table rows must match the reference count")

    present = [set(extract_ngrams(tokenize(r))) for r in raws]
    doc_freq: Counter = Counter()
    for s in present:
        doc_freq.update(s)
    params = ForestParams(**(forest_params or {}))
    provenance = {"k": k, "seed": seed, "forest_params": params.to_json()}
    if not doc_freq:
        return NgramVocabulary((), provenance)

    candidates = sorted(doc_freq, key=pattern_key)
    index = {p: j for j, p in enumerate(candidates)}
    X = np.zeros((len(raws), len(candidates)), dtype=np.float32)
    for i, s in enumerate(present):
        for p in s:
            X[i, index[p]] = 1.0
    y = best_parser_labels(f1)

    forest = fit_random_forest(X, y, params, seed=seed)
    importance = feature_importances(forest)
    order = sorted(range(len(candidates)),
                   key=lambda j: (-importance[j], -doc_freq[candidates[j]], pattern_key(candidates[j])))
    chosen = tuple(candidates[j] for j in order[:k])
    return NgramVocabulary(chosen, provenance)
