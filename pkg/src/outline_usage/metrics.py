"""ROUGE-1/2/L, BLEU-1/2/4 and the outline-utilization metrics DV and PD."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .similarity import (
    DEFAULT_EPSILON,
    AlignmentMatrix,
    EmbeddingKeyError,
    SimilarityBackend,
    alignment_matrix,
    lcs_length,
)
from .text_core import Token, ngrams, stem_tokens

if TYPE_CHECKING:
    from .corpus import Document

ALL_METRICS = ("rouge1", "rouge2", "rougeL", "bleu1", "bleu2", "bleu4", "dv", "pd")
# Aggregate column order of the comparison table.
TABLE_COLUMNS = (
    ("R-1", "rouge1"),
    ("R-2", "rouge2"),
    ("R-L", "rougeL"),
    ("DV", "dv"),
    ("PD", "pd"),
    ("Bleu-1", "bleu1"),
    ("Bleu-2", "bleu2"),
    ("Bleu-4", "bleu4"),
)
METRIC_ALIASES = {
    "r1": "rouge1", "r2": "rouge2", "rl": "rougeL",
    "bleu1": "bleu1", "bleu2": "bleu2", "bleu4": "bleu4",
    "dv": "dv", "pd": "pd",
    "rouge1": "rouge1", "rouge2": "rouge2", "rougel": "rougeL",
}


class MetricUndefinedError(ValueError):
    """A metric's precondition does not hold for this input."""

    def __init__(self, message: str, reason: str = "metric-undefined"):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def _prf(overlap: int, hyp_total: int, ref_total: int) -> PRF:
    p = overlap / hyp_total if hyp_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f)


def rouge_n(hypothesis: Sequence[Token], reference: Sequence[Token], n: int) -> PRF:
    if not reference:
        raise MetricUndefinedError("ROUGE needs a non-empty reference", "no-reference")
    hyp, ref = ngrams(hypothesis, n), ngrams(reference, n)
    overlap = sum((hyp.counts & ref.counts).values())
    return _prf(overlap, hyp.total, ref.total)


def rouge_l(hypothesis: Sequence[Token], reference: Sequence[Token]) -> PRF:
    if not reference:
        raise MetricUndefinedError("ROUGE-L needs a non-empty reference", "no-reference")
    return _prf(lcs_length(hypothesis, reference), len(hypothesis), len(reference))


@dataclass(frozen=True)
class BleuResult:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    warning: str | None = None


def bleu(
    hypothesis: Sequence[Token],
    references: Sequence[Sequence[Token]],
    max_n: int = 4,
    smooth: bool = False,
) -> BleuResult:
    """Sentence BLEU with uniform weights over orders ``1..max_n``.

    Without ``smooth`` any zero modified precision makes the score 0. With
    ``smooth`` orders above 1 get add-one on both matched and total counts.
    """
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    refs = [r for r in references if r]
    if not refs:
        raise MetricUndefinedError("BLEU needs at least one non-empty reference", "no-reference")
    c = len(hypothesis)
    # closest reference length, shorter one on ties
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    if c == 0:
        return BleuResult(0.0, (0.0,) * max_n, 0.0, 0, r, warning="empty hypothesis")

    precisions = []
    for n in range(1, max_n + 1):
        hyp = ngrams(hypothesis, n)
        max_ref: dict = {}
        for ref in refs:
            for g, k in ngrams(ref, n).counts.items():
                if k > max_ref.get(g, 0):
                    max_ref[g] = k
        matched = sum(min(k, max_ref.get(g, 0)) for g, k in hyp.counts.items())
        total = hyp.total
        if smooth and n > 1:
            matched, total = matched + 1, total + 1
        precisions.append(matched / total if total else 0.0)

    bp = 1.0 if c > r else math.exp(1 - r / c)
    if min(precisions) == 0:
        return BleuResult(0.0, tuple(precisions), bp, c, r)
    log_mean = sum(math.log(p) for p in precisions) / max_n
    return BleuResult(bp * math.exp(log_mean), tuple(precisions), bp, c, r)


def _distributions(matrix: AlignmentMatrix | np.ndarray) -> np.ndarray:
    d = np.asarray(getattr(matrix, "distributions", matrix), dtype=float)
    if d.ndim != 2:
        raise ValueError("expected a 2-D matrix of distributions")
    if d.shape[0] < 2:
        raise MetricUndefinedError(
            f"needs at least 2 outline bullets, got {d.shape[0]}", "too-few-bullets"
        )
    return d


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats; terms with p = 0 contribute nothing."""
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def dv(matrix: AlignmentMatrix | np.ndarray) -> float:
    """Mean KL divergence over ordered pairs of distinct bullets (nats)."""
    d = _distributions(matrix)
    m = d.shape[0]
    total = sum(kl_divergence(d[a], d[b]) for a in range(m) for b in range(m) if a != b)
    return max(0.0, total / (m * (m - 1)))


def peaks(matrix: AlignmentMatrix | np.ndarray) -> list[int]:
    # np.argmax returns the first maximum, i.e. ties go to the smallest sentence index
    return [int(i) for i in np.argmax(_distributions(matrix), axis=1)]


def pd(matrix: AlignmentMatrix | np.ndarray) -> float:
    """Mean absolute distance between the best-matching sentence indices of
    every ordered pair of distinct bullets."""
    pk = peaks(matrix)
    m = len(pk)
    total = sum(abs(pk[a] - pk[b]) for a in range(m) for b in range(m) if a != b)
    return total / (m * (m - 1))


@dataclass
class MetricReport:
    per_document: dict[str, dict[str, float]] = field(default_factory=dict)
    aggregate: dict[str, float] = field(default_factory=dict)
    skipped: list[dict[str, str]] = field(default_factory=list)
    warnings: list[dict[str, str]] = field(default_factory=list)
    metrics: tuple[str, ...] = ALL_METRICS

    @property
    def n_documents(self) -> int:
        return len(self.per_document)

    def skip_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s in self.skipped:
            counts[s["reason"]] = counts.get(s["reason"], 0) + 1
        return dict(sorted(counts.items()))

    def to_dict(self) -> dict:
        return {
            "metrics": list(self.metrics),
            "n_documents": self.n_documents,
            "aggregate": self.aggregate,
            "skip_counts": self.skip_counts(),
            "skipped": self.skipped,
            "warnings": self.warnings,
            "per_document": self.per_document,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "MetricReport":
        return cls(
            per_document=obj.get("per_document", {}),
            aggregate=obj.get("aggregate", {}),
            skipped=obj.get("skipped", []),
            warnings=obj.get("warnings", []),
            metrics=tuple(obj.get("metrics", ALL_METRICS)),
        )

    def to_csv(self, label: str | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        header = [h for h, _ in TABLE_COLUMNS]
        row = [_csv_value(self.aggregate.get(k)) for _, k in TABLE_COLUMNS]
        if label is not None:
            header, row = ["Method", *header], [label, *row]
        w.writerow(header)
        w.writerow(row)
        return buf.getvalue()


def _csv_value(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def parse_metric_names(spec: str | Iterable[str]) -> tuple[str, ...]:
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    out = []
    for item in items:
        key = item.strip().lower()
        if not key:
            continue
        if key not in METRIC_ALIASES:
            raise ValueError(f"unknown metric {item!r}")
        if METRIC_ALIASES[key] not in out:
            out.append(METRIC_ALIASES[key])
    return tuple(m for m in ALL_METRICS if m in out)


@dataclass(frozen=True)
class EvalSettings:
    backend: SimilarityBackend = field(default_factory=SimilarityBackend)
    epsilon: float = DEFAULT_EPSILON
    metrics: tuple[str, ...] = ALL_METRICS
    rouge_measure: str = "f1"
    stem: bool = False
    bleu_smoothing: bool = False


def evaluate_document(doc: "Document", settings: EvalSettings) -> tuple[dict[str, float], list[str]]:
    """Metric values for one document plus any warnings.

    Raises MetricUndefinedError when a requested metric's precondition fails.
    """
    wanted = set(settings.metrics)
    values: dict[str, float] = {}
    warns: list[str] = []

    if wanted & {"rouge1", "rouge2", "rougeL", "bleu1", "bleu2", "bleu4"}:
        ref_sents = doc.reference_sentences()
        if not ref_sents:
            raise MetricUndefinedError("no reference text", "no-reference")
        hyp = [t for s in doc.text for t in s.tokens]
        ref = [t for s in ref_sents for t in s.tokens]
        if settings.stem:
            hyp, ref = stem_tokens(hyp), stem_tokens(ref)
        if not ref:
            raise MetricUndefinedError("reference has no tokens", "no-reference")
        measure = settings.rouge_measure
        if "rouge1" in wanted:
            values["rouge1"] = getattr(rouge_n(hyp, ref, 1), measure)
        if "rouge2" in wanted:
            values["rouge2"] = getattr(rouge_n(hyp, ref, 2), measure)
        if "rougeL" in wanted:
            values["rougeL"] = getattr(rouge_l(hyp, ref), measure)
        for n in (1, 2, 4):
            if f"bleu{n}" in wanted:
                res = bleu(hyp, [ref], n, smooth=settings.bleu_smoothing)
                values[f"bleu{n}"] = res.score
                if res.warning and res.warning not in warns:
                    warns.append(res.warning)

    if wanted & {"dv", "pd"}:
        if len(doc.outline) < 2:
            raise MetricUndefinedError(
                f"needs at least 2 outline bullets, got {len(doc.outline)}", "too-few-bullets"
            )
        if not doc.text:
            raise MetricUndefinedError("text is empty", "empty-text")
        matrix = alignment_matrix(settings.backend, doc.outline, doc.text, settings.epsilon)
        if "dv" in wanted:
            values["dv"] = dv(matrix)
        if "pd" in wanted:
            values["pd"] = pd(matrix)

    for k, v in values.items():
        if not math.isfinite(v) or v < 0:
            raise MetricUndefinedError(f"{k} is not a finite non-negative value ({v})")
    return {m: values[m] for m in settings.metrics if m in values}, warns


def evaluate_corpus(
    documents: Iterable["Document"],
    settings: EvalSettings | None = None,
    workers: int = 1,
) -> MetricReport:
    """Per-document metrics plus their means, ordered by document id.

    Documents are consumed as a stream; only their metric values are kept.
    Documents whose metrics are undefined are skipped and counted, never fatal.
    """
    settings = settings or EvalSettings()

    def run(doc):
        try:
            values, warns = evaluate_document(doc, settings)
            return doc.id, values, warns, None
        except MetricUndefinedError as e:
            return doc.id, None, [], (e.reason, str(e))
        except EmbeddingKeyError as e:
            return doc.id, None, [], ("missing-embedding", str(e.args[0]))

    if workers > 1:
        results = []
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for chunk in _chunks(documents, workers * 8):
                results.extend(ex.map(run, chunk))
    else:
        results = [run(d) for d in documents]
    results.sort(key=lambda r: r[0])

    report = MetricReport(metrics=settings.metrics)
    for doc_id, values, warns, err in results:
        if err is not None:
            report.skipped.append({"id": doc_id, "reason": err[0], "detail": err[1]})
            continue
        report.per_document[doc_id] = values
        report.warnings.extend({"id": doc_id, "warning": w} for w in warns)

    if report.per_document:
        for m in settings.metrics:
            vals = [v[m] for v in report.per_document.values()]
            report.aggregate[m] = math.fsum(vals) / len(vals)
    return report


def _chunks(items: Iterable, size: int) -> Iterable[list]:
    chunk = []
    for item in items:
        chunk.append(item)
        if len(chunk) == size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk
