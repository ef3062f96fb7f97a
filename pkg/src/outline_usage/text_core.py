"""Sentence segmentation, tokenization and n-gram counting shared by every metric."""
from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

Token = str

# A terminator, optionally followed by a closing quote, that is itself followed by whitespace.
_BOUNDARY_RE = re.compile(r"[.!?][\"”]?(?=\s)")
_OPENERS = "\"'(“‘["


@dataclass(frozen=True)
class Sentence:
    index: int
    raw: str
    tokens: tuple[Token, ...] = field(default=())

    @classmethod
    def from_text(cls, index: int, raw: str) -> "Sentence":
        return cls(index, raw, tuple(tokenize(raw)))


@dataclass(frozen=True)
class NGramMultiset:
    n: int
    counts: Counter

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __len__(self) -> int:
        return len(self.counts)


def read_list_file(path: str | Path) -> list[str]:
    """Non-empty, non-comment lines of a UTF-8 text file."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


def _data_lines(name: str) -> list[str]:
    with resources.as_file(resources.files("outline_usage") / "data" / name) as p:
        return read_list_file(p)


@lru_cache(maxsize=1)
def default_abbreviations() -> frozenset[str]:
    return frozenset(a.lower() for a in _data_lines("abbreviations.txt"))


def load_abbreviations(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        return default_abbreviations()
    return frozenset(a.lower() for a in read_list_file(path))


def _is_abbreviation(text: str, term_start: int, abbreviations: frozenset[str]) -> bool:
    if text[term_start] != ".":
        return False
    word_start = term_start
    while word_start > 0 and not text[word_start - 1].isspace():
        word_start -= 1
    word = text[word_start:term_start + 1].lstrip(_OPENERS).lower()
    return word in abbreviations


def segment_sentences(
    text: str, abbreviations: Iterable[str] | None = None
) -> list[Sentence]:
    """Split ``text`` into sentences.

    A boundary falls after ``.``, ``!`` or ``?`` (optionally followed by a
    closing double quote) when whitespace follows, unless the word ending in
    the period is a known abbreviation. Raw spans are stripped of surrounding
    whitespace; internal whitespace is kept as-is.
    """
    abbrevs = (
        default_abbreviations()
        if abbreviations is None
        else frozenset(a.lower() for a in abbreviations)
    )
    spans: list[str] = []
    start = 0
    for m in _BOUNDARY_RE.finditer(text):
        if _is_abbreviation(text, m.start(), abbrevs):
            continue
        spans.append(text[start:m.end()])
        start = m.end()
    spans.append(text[start:])
    raws = [s.strip() for s in spans if s.strip()]
    return [Sentence.from_text(i, raw) for i, raw in enumerate(raws)]


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def tokenize(s: str) -> list[Token]:
    """Lowercase, split on whitespace, and peel leading/trailing punctuation
    into one token per character. Internal punctuation (``don't``, ``u.s``)
    stays attached."""
    out: list[Token] = []
    for chunk in s.lower().split():
        lo, hi = 0, len(chunk)
        while lo < hi and _is_punct(chunk[lo]):
            lo += 1
        while hi > lo and _is_punct(chunk[hi - 1]):
            hi -= 1
        out.extend(chunk[:lo])
        if lo < hi:
            out.append(chunk[lo:hi])
        out.extend(chunk[hi:])
    return out


def is_word(token: Token) -> bool:
    return not all(_is_punct(c) for c in token)


def words(tokens: Iterable[Token]) -> list[Token]:
    """Drop punctuation-only tokens."""
    return [t for t in tokens if is_word(t)]


def ngrams(tokens: Sequence[Token], n: int) -> NGramMultiset:
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    toks = tuple(tokens)
    counts = Counter(toks[i:i + n] for i in range(len(toks) - n + 1))
    return NGramMultiset(n, counts)


@lru_cache(maxsize=1)
def _porter():
    try:
        from nltk.stem.porter import PorterStemmer
    except ImportError as e:  # pragma: no cover - depends on environment
        raise ImportError("stemming needs nltk: pip install 'outline-usage[stem]'") from e
    return PorterStemmer()


def stem_tokens(tokens: Iterable[Token]) -> list[Token]:
    stemmer = _porter()
    return [stemmer.stem(t) if is_word(t) else t for t in tokens]
