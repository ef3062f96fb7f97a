"""Outline-bullet-to-sentence similarity and the per-bullet alignment distributions."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .text_core import Sentence, words

BACKENDS = ("unigram-f1", "rouge-l-f1", "embedding-cosine")
DEFAULT_EPSILON = 1e-6


class EmbeddingKeyError(KeyError):
    pass


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int

    def __post_init__(self):
        for key, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"embedding {key!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"embedding {key!r} contains NaN or Inf")

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self.vectors[key]
        except KeyError:
            raise EmbeddingKeyError(f"no embedding for key {key!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        """Read ``{"key": ..., "vector": [...]}`` JSON lines; dimension comes from line 1."""
        vectors: dict[str, np.ndarray] = {}
        dim = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key, vec = obj["key"], np.asarray(obj["vector"], dtype=float)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    raise ValueError(f"{path}: line {lineno}: bad embedding record ({e})") from e
                if dim is None:
                    dim = vec.shape[0] if vec.ndim == 1 else -1
                if vec.ndim != 1 or vec.shape[0] != dim:
                    raise ValueError(f"{path}: line {lineno}: dimension mismatch, expected {dim}")
                vectors[key] = vec
        if dim is None:
            raise ValueError(f"{path}: empty embedding table")
        return cls(vectors, dim)


@dataclass(frozen=True)
class SimilarityBackend:
    kind: str = "unigram-f1"
    embeddings: EmbeddingTable | None = None

    def __post_init__(self):
        if self.kind not in BACKENDS:
            raise ValueError(f"unknown similarity backend {self.kind!r}; choose from {BACKENDS}")
        if self.kind == "embedding-cosine" and self.embeddings is None:
            raise ValueError("embedding-cosine backend needs an EmbeddingTable")


def similarity(backend: SimilarityBackend, a: Sentence, b: Sentence) -> float:
    """Score in [0, 1]. The lexical backends ignore punctuation-only tokens."""
    if backend.kind == "embedding-cosine":
        u, v = backend.embeddings[a.raw], backend.embeddings[b.raw]
        nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
        cos = float(u @ v) / (nu * nv) if nu > 0 and nv > 0 else 0.0
        return min(1.0, max(0.0, (cos + 1.0) / 2.0))
    ta, tb = words(a.tokens), words(b.tokens)
    if not ta or not tb:
        return 0.0
    if backend.kind == "unigram-f1":
        ca, cb = Counter(ta), Counter(tb)
        overlap = sum((ca & cb).values())
    else:
        overlap = lcs_length(ta, tb)
    return _f1(overlap / len(ta), overlap / len(tb))


@dataclass(frozen=True)
class AlignmentMatrix:
    raw: np.ndarray
    distributions: np.ndarray
    bullet_texts: tuple[str, ...] = field(default=())
    sentence_count: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.raw.shape

    def to_dict(self) -> dict:
        return {
            "bullets": list(self.bullet_texts),
            "sentence_count": self.sentence_count,
            "raw": self.raw.tolist(),
            "distributions": self.distributions.tolist(),
        }


def normalize_rows(raw: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Additively smooth each row by ``epsilon`` and rescale to sum to 1.
    Rows with no positive entry become uniform."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    raw = np.asarray(raw, dtype=float)
    smoothed = raw + epsilon
    dist = smoothed / smoothed.sum(axis=1, keepdims=True)
    zero_rows = ~np.any(raw > 0, axis=1)
    dist[zero_rows] = 1.0 / raw.shape[1]
    return dist


def alignment_matrix(
    backend: SimilarityBackend,
    outline: Sequence[Sentence],
    text: Sequence[Sentence],
    epsilon: float = DEFAULT_EPSILON,
) -> AlignmentMatrix:
    if not outline:
        raise ValueError("outline is empty")
    if not text:
        raise ValueError("text is empty")
    raw = np.array([[similarity(backend, o, y) for y in text] for o in outline], dtype=float)
    return AlignmentMatrix(
        raw=raw,
        distributions=normalize_rows(raw, epsilon),
        bullet_texts=tuple(o.raw for o in outline),
        sentence_count=len(text),
    )
