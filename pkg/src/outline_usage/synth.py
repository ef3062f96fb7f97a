"""Synthetic outline/text documents with a controlled outline-usage profile.

Bullets use disjoint vocabularies and the filler text uses yet another one,
so the only lexical overlap between bullet ``a`` and the text is whatever is
deliberately injected. That makes the alignment peaks known in advance.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Document
from .metrics import dv, pd
from .similarity import DEFAULT_EPSILON, SimilarityBackend, alignment_matrix
from .text_core import Sentence

SHAPES = ("front-loaded", "spread", "uniform-noise")
SWEEP_COLUMNS = (
    "shape", "n_bullets", "n_sentences", "peak_positions", "echo_strength",
    "noise_vocab_size", "seed", "dv", "pd",
)


@dataclass(frozen=True)
class SynthProfile:
    shape: str = "spread"
    n_bullets: int = 3
    n_sentences: int = 40
    peak_positions: tuple[int, ...] | None = None
    echo_strength: float = 1.0
    noise_vocab_size: int = 500
    seed: int = 0
    bullet_length: int = 6
    sentence_length: tuple[int, int] = (8, 16)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; choose from {SHAPES}")
        if self.n_bullets < 1 or self.n_sentences < 1:
            raise ValueError("n_bullets and n_sentences must be >= 1")
        if self.n_bullets > self.n_sentences:
            raise ValueError(
                f"n_bullets ({self.n_bullets}) exceeds n_sentences ({self.n_sentences})"
            )
        if not 0 < self.echo_strength <= 1:
            raise ValueError("echo_strength must be in (0, 1]")
        if self.noise_vocab_size < 1 or self.bullet_length < 1:
            raise ValueError("noise_vocab_size and bullet_length must be >= 1")
        lo, hi = self.sentence_length
        if not 1 <= lo <= hi:
            raise ValueError("sentence_length must be an increasing pair of positive ints")
        if self.peak_positions is not None:
            object.__setattr__(self, "peak_positions", tuple(int(p) for p in self.peak_positions))
            if len(self.peak_positions) != self.n_bullets:
                raise ValueError("need one peak position per bullet")
            limit = self.front_window if self.shape == "front-loaded" else self.n_sentences
            if any(not 0 <= p < limit for p in self.peak_positions):
                raise ValueError(f"peak positions must lie in [0, {limit}) for shape {self.shape}")

    @property
    def front_window(self) -> int:
        return math.ceil(self.n_sentences / 10)

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthProfile":
        obj = dict(obj)
        if obj.get("peak_positions") is not None:
            obj["peak_positions"] = tuple(obj["peak_positions"])
        if "sentence_length" in obj:
            obj["sentence_length"] = tuple(obj["sentence_length"])
        return cls(**obj)


def resolve_peaks(profile: SynthProfile, rng: np.random.Generator | None = None) -> tuple[int, ...]:
    if profile.peak_positions is not None:
        return profile.peak_positions
    m, n = profile.n_bullets, profile.n_sentences
    if profile.shape == "spread":
        return tuple(int((a + 0.5) * n / m) for a in range(m))
    rng = rng if rng is not None else np.random.default_rng(profile.seed)
    high = profile.front_window if profile.shape == "front-loaded" else n
    return tuple(int(p) for p in rng.integers(0, high, size=m))


def _bullet_vocab(a: int, length: int) -> list[str]:
    return [f"b{a}w{i}" for i in range(length)]


def synthesize(profile: SynthProfile) -> Document:
    rng = np.random.default_rng(profile.seed)
    m, n = profile.n_bullets, profile.n_sentences
    peaks = resolve_peaks(profile, rng)
    noise_vocab = [f"n{i}" for i in range(profile.noise_vocab_size)]
    lo, hi = profile.sentence_length

    sentences = [
        [noise_vocab[j] for j in rng.integers(0, len(noise_vocab), size=int(rng.integers(lo, hi + 1)))]
        for _ in range(n)
    ]
    bullets = [_bullet_vocab(a, profile.bullet_length) for a in range(m)]
    k = math.ceil(profile.echo_strength * profile.bullet_length)
    for a, bullet in enumerate(bullets):
        chosen = sorted(rng.choice(len(bullet), size=k, replace=False))
        if profile.shape == "uniform-noise":
            # scatter the echoed words over random sentences: no single peak
            for idx in chosen:
                target = sentences[int(rng.integers(0, n))]
                target.insert(int(rng.integers(0, len(target) + 1)), bullet[idx])
        else:
            target = sentences[peaks[a]]
            at = int(rng.integers(0, len(target) + 1))
            target[at:at] = [bullet[i] for i in chosen]

    text = tuple(Sentence.from_text(i, " ".join(toks) + ".") for i, toks in enumerate(sentences))
    outline = tuple(Sentence.from_text(a, " ".join(b) + ".") for a, b in enumerate(bullets))
    params = asdict(profile)
    params["peak_positions"] = list(peaks) if profile.shape != "uniform-noise" else None
    params["sentence_length"] = list(profile.sentence_length)
    return Document(
        id=f"synth-{profile.shape}-{profile.seed}",
        prompt=text[0].raw,
        outline=outline,
        text=text,
        source="reference",
        provenance={"synth": params},
    )


def expand_seeds(profiles: Iterable[SynthProfile], n_seeds: int) -> list[SynthProfile]:
    """Replicate each profile over ``n_seeds`` consecutive seeds starting at its own seed."""
    return [replace(p, seed=p.seed + s) for p in profiles for s in range(n_seeds)]


def sweep_rows(
    profiles: Sequence[SynthProfile],
    backend: SimilarityBackend | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> list[dict]:
    if not profiles:
        raise ValueError("sweep needs at least one profile")
    backend = backend or SimilarityBackend()
    rows = []
    for p in profiles:
        doc = synthesize(p)
        mat = alignment_matrix(backend, doc.outline, doc.text, epsilon)
        used = doc.provenance["synth"]["peak_positions"]
        rows.append({
            "shape": p.shape,
            "n_bullets": p.n_bullets,
            "n_sentences": p.n_sentences,
            "peak_positions": "" if used is None else " ".join(map(str, used)),
            "echo_strength": p.echo_strength,
            "noise_vocab_size": p.noise_vocab_size,
            "seed": p.seed,
            "dv": dv(mat) if p.n_bullets >= 2 else float("nan"),
            "pd": pd(mat) if p.n_bullets >= 2 else float("nan"),
        })
    return rows


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def sweep(
    profiles: Sequence[SynthProfile],
    backend: SimilarityBackend | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> str:
    """CSV with one row per synthesized document: profile parameters, DV, PD."""
    return rows_to_csv(sweep_rows(profiles, backend, epsilon))


def load_profiles(path: str | Path) -> list[SynthProfile]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    items = obj if isinstance(obj, list) else obj.get("profiles", [obj])
    return [SynthProfile.from_dict(o) for o in items]
