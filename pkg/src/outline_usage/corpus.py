"""Corpus ingestion and the news-article preprocessing that yields prompt/outline/text documents."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import IO, Callable, Iterable, Iterator, Sequence

from .text_core import Sentence, read_list_file, segment_sentences

SOURCES = ("reference", "generated")
SKIP_REASONS = ("empty-after-strip", "too-short", "empty-highlights")


class CorpusFormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}: line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class RawRecord:
    id: str
    article: str
    highlights: str
    lineno: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Document:
    id: str
    prompt: str
    outline: tuple[Sentence, ...]
    text: tuple[Sentence, ...]
    source: str = "reference"
    provenance: dict | None = field(default=None, compare=False, hash=False)
    reference: tuple[Sentence, ...] | None = None

    def reference_sentences(self) -> tuple[Sentence, ...]:
        if self.reference is not None:
            return self.reference
        return self.text if self.source == "reference" else ()

    def to_json_obj(self) -> dict:
        obj = {
            "id": self.id,
            "prompt": self.prompt,
            "outline": [s.raw for s in self.outline],
            "text": [s.raw for s in self.text],
            "source": self.source,
        }
        if self.provenance is not None:
            obj["provenance"] = self.provenance
        if self.reference is not None:
            obj["reference"] = [s.raw for s in self.reference]
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), ensure_ascii=False)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Document":
        def sents(raws):
            return tuple(Sentence.from_text(i, r) for i, r in enumerate(raws))

        source = obj.get("source", "reference")
        if source not in SOURCES:
            raise ValueError(f"unknown source {source!r}")
        for key in ("id", "prompt", "outline", "text"):
            if key not in obj:
                raise ValueError(f"missing field {key!r}")
        ref = obj.get("reference")
        return cls(
            id=str(obj["id"]),
            prompt=obj["prompt"],
            outline=sents(obj["outline"]),
            text=sents(obj["text"]),
            source=source,
            provenance=obj.get("provenance"),
            reference=None if ref is None else sents(ref),
        )


@dataclass(frozen=True)
class Skip:
    id: str
    reason: str


# --- boilerplate -----------------------------------------------------------

def load_patterns(path: str | Path | None = None) -> tuple[re.Pattern, ...]:
    """Compile head-of-article boilerplate patterns; bad patterns fail here."""
    if path is None:
        return default_patterns()
    return _compile(read_list_file(path), str(path))


def _compile(lines: Sequence[str], where: str) -> tuple[re.Pattern, ...]:
    out = []
    for ln in lines:
        try:
            out.append(re.compile(ln))
        except re.error as e:
            raise ValueError(f"{where}: invalid boilerplate pattern {ln!r}: {e}") from e
    return tuple(out)


@lru_cache(maxsize=1)
def default_patterns() -> tuple[re.Pattern, ...]:
    ref = resources.files("outline_usage") / "data" / "boilerplate_patterns.txt"
    with resources.as_file(ref) as p:
        return _compile(read_list_file(p), "boilerplate_patterns.txt")


def strip_boilerplate(article: str, patterns: Sequence[re.Pattern] | None = None) -> str:
    """Repeatedly remove any pattern that matches at the head of the article."""
    pats = default_patterns() if patterns is None else patterns
    text = article
    changed = True
    while changed and text:
        changed = False
        for pat in pats:
            m = pat.match(text)
            if m and m.end() > 0:
                text = text[m.end():]
                changed = True
    return text.strip()


# --- preprocessing ---------------------------------------------------------

def segment_highlights(highlights: str, abbreviations=None) -> list[Sentence]:
    # highlights are newline-separated bullets that often lack terminal punctuation
    raws = [
        s.raw
        for line in highlights.splitlines()
        for s in segment_sentences(line, abbreviations)
    ]
    return [Sentence.from_text(i, r) for i, r in enumerate(raws)]


def preprocess(
    record: RawRecord,
    min_words: int = 64,
    max_sentences: int = 40,
    patterns: Sequence[re.Pattern] | None = None,
    abbreviations: Iterable[str] | None = None,
) -> Document | Skip:
    if min_words < 1 or max_sentences < 1:
        raise ValueError("min_words and max_sentences must be >= 1")
    article = strip_boilerplate(record.article, patterns)
    if not article:
        return Skip(record.id, "empty-after-strip")
    if len(article.split()) < min_words:
        return Skip(record.id, "too-short")
    outline = segment_highlights(record.highlights, abbreviations)
    if not outline:
        return Skip(record.id, "empty-highlights")
    text = segment_sentences(article, abbreviations)[:max_sentences]
    return Document(
        id=record.id,
        prompt=text[0].raw,
        outline=tuple(outline),
        text=tuple(text),
        source="reference",
    )


def document_as_record(doc: Document) -> RawRecord:
    """Render a document back into a raw record (used to check idempotence)."""
    return RawRecord(
        doc.id, " ".join(s.raw for s in doc.text), "\n".join(s.raw for s in doc.outline)
    )


# --- I/O -------------------------------------------------------------------

def _iter_json_lines(
    path: str | Path,
    parse: Callable[[dict, int], object],
    strict: bool,
    on_error: Callable[[CorpusFormatError], None] | None,
) -> Iterator:
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("expected a JSON object")
                item = parse(obj, lineno)
                if item.id in seen:
                    raise ValueError(f"duplicate id {item.id!r}")
            except (ValueError, TypeError, KeyError) as e:
                err = CorpusFormatError(path, lineno, str(e))
                if strict:
                    raise err from e
                if on_error is not None:
                    on_error(err)
                continue
            seen.add(item.id)
            yield item


def _parse_raw(obj: dict, lineno: int) -> RawRecord:
    for key in ("id", "article", "highlights"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
        if not isinstance(obj[key], (str, int)):
            raise ValueError(f"field {key!r} must be a string")
    if not str(obj["article"]):
        raise ValueError("empty article")
    return RawRecord(str(obj["id"]), obj["article"], obj["highlights"], lineno)


def load_corpus(
    path: str | Path,
    fmt: str = "raw",
    strict: bool = True,
    on_error: Callable[[CorpusFormatError], None] | None = None,
) -> Iterator[RawRecord] | Iterator[Document]:
    """Stream records from a JSON Lines file.

    ``fmt="raw"`` reads ``{"id", "article", "highlights"}`` pairs;
    ``fmt="documents"`` reads the canonical document format. In non-strict
    mode malformed lines are reported to ``on_error`` and skipped.
    """
    if fmt == "raw":
        parse = _parse_raw
    elif fmt == "documents":
        parse = lambda obj, _lineno: Document.from_json_obj(obj)  # noqa: E731
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")
    return _iter_json_lines(path, parse, strict, on_error)


def read_documents(path: str | Path, strict: bool = True) -> Iterator[Document]:
    return load_corpus(path, "documents", strict=strict)


def write_documents(docs: Iterable[Document], fh: IO[str]) -> int:
    n = 0
    for doc in docs:
        fh.write(doc.to_json() + "\n")
        n += 1
    return n
