"""Two-stage outline-then-text generation against an OpenAI-compatible chat endpoint.

``all-in`` mode asks for the whole text from the prompt plus the full outline
in one request. ``separate`` mode generates one segment per outline bullet,
each request seeing the prompt, that bullet, and the text generated so far.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, Protocol, Sequence

import httpx

from .corpus import Document
from .text_core import Sentence, segment_sentences

API_KEY_ENV = "OUTLINE_USAGE_API_KEY"
MODES = ("all-in", "separate")
REQUIRED_PLACEHOLDERS = {
    "outline_template": ("prompt",),
    "allin_template": ("prompt", "outline"),
    "segment_template": ("prompt", "bullet", "so_far"),
}
RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


# --- errors ----------------------------------------------------------------

class TransportError(RuntimeError):
    def __init__(self, message: str, status: int | None = None, retryable: bool = False):
        super().__init__(message)
        self.status = status
        self.retryable = retryable


class ReplayMissError(TransportError):
    pass


class EndpointError(RuntimeError):
    """A request still failed after the retry schedule ran out (or could not be retried)."""

    def __init__(self, message: str, attempts: int, cause: TransportError):
        super().__init__(f"{message} after {attempts} attempt(s): {cause}")
        self.attempts = attempts
        self.cause = cause


class OutlineParseError(RuntimeError):
    def __init__(self, message: str, raw_response: str):
        super().__init__(message)
        self.raw_response = raw_response


class SegmentGenerationError(RuntimeError):
    """A separate-mode segment failed; carries the segments finished before it."""

    def __init__(self, bullet_index: int, completed_segments: list[str], cause: Exception):
        super().__init__(f"segment {bullet_index} failed: {cause}")
        self.bullet_index = bullet_index
        self.completed_segments = completed_segments
        self.cause = cause


class GenerationAborted(RuntimeError):
    def __init__(self, completed: int, cause: Exception):
        super().__init__(f"generation aborted after {completed} completed document(s): {cause}")
        self.completed = completed
        self.cause = cause


# --- config ----------------------------------------------------------------

@lru_cache(maxsize=None)
def default_template(name: str) -> str:
    return (resources.files("outline_usage") / "data" / "templates" / f"{name}.txt").read_text(
        encoding="utf-8"
    )


_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


def render_template(template: str, **values) -> str:
    """Substitute ``{name}`` for the given names only; other braces pass through."""
    return _PLACEHOLDER_RE.sub(
        lambda m: str(values[m.group(1)]) if m.group(1) in values else m.group(0), template
    )


@dataclass(frozen=True)
class GenerationConfig:
    endpoint: str = "http://localhost:8000/v1"
    model: str = "gpt-3.5-turbo"
    mode: str = "all-in"
    outline_bullets: int = 3
    temperature: float = 0.7
    max_tokens: int = 512
    concurrency: int = 1
    retries: int = 3
    backoff: tuple[float, ...] = (1.0, 2.0, 4.0)
    timeout: float = 60.0
    outline_template: str = field(default_factory=lambda: default_template("outline"))
    allin_template: str = field(default_factory=lambda: default_template("allin"))
    segment_template: str = field(default_factory=lambda: default_template("segment"))
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.outline_bullets < 1:
            raise ValueError("outline_bullets must be >= 1")
        if any(b < 0 for b in self.backoff):
            raise ValueError("backoff delays must be >= 0")
        object.__setattr__(self, "backoff", tuple(float(b) for b in self.backoff))
        for name, keys in REQUIRED_PLACEHOLDERS.items():
            tpl = getattr(self, name)
            missing = [k for k in keys if "{" + k + "}" not in tpl]
            if missing:
                raise ValueError(f"{name} lacks placeholder(s): {', '.join(missing)}")

    def delay(self, retry_index: int) -> float:
        if not self.backoff:
            return 0.0
        return self.backoff[min(retry_index, len(self.backoff) - 1)]

    @classmethod
    def from_dict(cls, obj: dict) -> "GenerationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown generation config key(s): {sorted(unknown)}")
        obj = dict(obj)
        if "backoff" in obj:
            obj["backoff"] = tuple(obj["backoff"])
        return cls(**obj)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backoff"] = list(self.backoff)
        return d


# --- transports --------------------------------------------------------------

class Transport(Protocol):
    def __call__(self, payload: dict) -> dict: ...


def request_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HttpTransport:
    """POST ``{endpoint}/chat/completions``; the API key comes only from the environment."""

    def __init__(self, endpoint: str, timeout: float = 60.0, client: httpx.Client | None = None):
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.client = client or httpx.Client(timeout=timeout)
        key = os.environ.get(API_KEY_ENV)
        self.headers = {"Authorization": f"Bearer {key}"} if key else {}

    def __call__(self, payload: dict) -> dict:
        try:
            resp = self.client.post(self.url, json=payload, headers=self.headers)
        except httpx.TransportError as e:
            raise TransportError(f"{type(e).__name__}: {e}", retryable=True) from e
        if resp.status_code != 200:
            raise TransportError(
                f"HTTP {resp.status_code} from {self.url}",
                status=resp.status_code,
                retryable=resp.status_code in RETRYABLE_STATUS,
            )
        try:
            return resp.json()
        except ValueError as e:
            raise TransportError(f"non-JSON response body from {self.url}") from e

    def close(self) -> None:
        self.client.close()


class ReplayTransport:
    """Serve responses from a JSON Lines file of ``{request-hash, response-body}``."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.responses: dict[str, dict] = {}
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key = obj.get("request-hash", obj.get("request_hash"))
                    body = obj.get("response-body", obj.get("response_body"))
                    if not isinstance(key, str) or not isinstance(body, dict):
                        raise ValueError("needs request-hash and response-body")
                except ValueError as e:
                    raise ValueError(f"{self.path}: line {lineno}: {e}") from e
                self.responses[key] = body

    def __call__(self, payload: dict) -> dict:
        h = request_hash(payload)
        try:
            return self.responses[h]
        except KeyError:
            raise ReplayMissError(f"no recorded response for request {h[:12]} in {self.path}") from None


class RecordingTransport:
    """Forward to ``inner`` and append every successful exchange to a replay file."""

    def __init__(self, inner: Transport, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seen: set[str] = set()

    def __call__(self, payload: dict) -> dict:
        body = self.inner(payload)
        h = request_hash(payload)
        with self._lock:
            if h not in self._seen:
                self._seen.add(h)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"request-hash": h, "response-body": body}, ensure_ascii=False) + "\n")
        return body


# --- client ----------------------------------------------------------------

@dataclass
class RequestRecord:
    kind: str
    payload: dict
    response_text: str | None
    latency: float
    attempts: int
    error: str | None = None


@dataclass
class GenerationTrace:
    doc_id: str
    mode: str
    requests: list[RequestRecord] = field(default_factory=list)
    started: str = ""
    finished: str = ""
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class ChatClient:
    def __init__(
        self,
        transport: Transport,
        config: GenerationConfig,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.transport = transport
        self.config = config
        self.sleep = sleep

    def payload(self, content: str) -> dict:
        return {
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }

    def complete(self, content: str, kind: str, trace: GenerationTrace | None = None) -> str:
        payload = self.payload(content)
        t0 = time.perf_counter()
        attempts = 0
        while True:
            attempts += 1
            try:
                body = self.transport(payload)
                text = _content_of(body)
                break
            except TransportError as e:
                if e.retryable and attempts <= self.config.retries:
                    self.sleep(self.config.delay(attempts - 1))
                    continue
                if trace is not None:
                    trace.requests.append(
                        RequestRecord(kind, payload, None, time.perf_counter() - t0, attempts, str(e))
                    )
                raise EndpointError(f"{kind} request failed", attempts, e) from e
        if trace is not None:
            trace.requests.append(RequestRecord(kind, payload, text, time.perf_counter() - t0, attempts))
        return text


def _content_of(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as e:
        raise TransportError("response lacks choices[0].message.content") from e
    if not isinstance(content, str):
        raise TransportError("choices[0].message.content is not a string")
    return content.strip()


# --- outline parsing ---------------------------------------------------------

_NUMBERED_RE = re.compile(r"^\s*(?:\(?\d+[.):]|step\s+\d+[.:]?)\s*(.+?)\s*$", re.I)
_BULLET_RE = re.compile(r"^\s*(?:[-*•–]|\+)\s+(.+?)\s*$")
_LABEL_RE = re.compile(r"^\s*(?:\*\*)?(?:bullet|point|outline point)\s*\d*\s*[:.](?:\*\*)?\s*", re.I)


def _clean_bullet(s: str) -> str:
    s = _LABEL_RE.sub("", s)
    return s.strip().strip("*").strip()


def parse_outline(response: str, m: int) -> list[str]:
    """Extract up to ``m`` bullet sentences from an outline response.

    Tries, in order: numbered items, dash/star bullets, non-preamble lines,
    then plain sentence segmentation. The first strategy that yields at least
    ``m`` items wins; otherwise the longest partial result is returned. A
    response that uses list markers is never re-read as prose, so a short
    numbered list stays short.
    """
    lines = [ln for ln in response.splitlines() if ln.strip()]
    numbered = [_clean_bullet(mt.group(1)) for ln in lines if (mt := _NUMBERED_RE.match(ln))]
    bullets = [_clean_bullet(mt.group(1)) for ln in lines if (mt := _BULLET_RE.match(ln))]
    plain = [
        _clean_bullet(ln) for ln in lines
        if not ln.rstrip().endswith(":") and not re.match(r"^\s*#+\s", ln)
    ]
    sentences = [s.raw for s in segment_sentences(" ".join(plain))]
    strategies = (numbered, bullets) if numbered or bullets else (plain, sentences)
    best: list[str] = []
    for cand in strategies:
        cand = [c for c in cand if c]
        if len(cand) >= m:
            return cand[:m]
        if len(cand) > len(best):
            best = cand
    return best


# --- stages ----------------------------------------------------------------

def _sentences(raws: Sequence[str]) -> list[Sentence]:
    return [Sentence.from_text(i, r) for i, r in enumerate(raws)]


def predict_outline(
    prompt: str,
    config: GenerationConfig,
    client: ChatClient,
    trace: GenerationTrace | None = None,
) -> list[Sentence]:
    if not prompt.strip():
        raise ValueError("prompt is empty")
    m = config.outline_bullets
    content = render_template(config.outline_template, prompt=prompt, m=m)
    raw = ""
    for _ in range(config.retries + 1):
        raw = client.complete(content, "outline", trace)
        bullets = parse_outline(raw, m)
        if len(bullets) == m:
            return _sentences(bullets)
    raise OutlineParseError(f"expected {m} outline bullets, parsed {len(parse_outline(raw, m))}", raw)


def format_outline(outline: Sequence[Sentence | str]) -> str:
    return "\n".join(f"{i}. {getattr(b, 'raw', b)}" for i, b in enumerate(outline, 1))


def generate_all_in(
    prompt: str,
    outline: Sequence[Sentence | str],
    config: GenerationConfig,
    client: ChatClient,
    trace: GenerationTrace | None = None,
) -> str:
    if not outline:
        raise ValueError("outline is empty")
    content = render_template(config.allin_template, prompt=prompt, outline=format_outline(outline))
    return client.complete(content, "all-in", trace)


def generate_separate(
    prompt: str,
    outline: Sequence[Sentence | str],
    config: GenerationConfig,
    client: ChatClient,
    trace: GenerationTrace | None = None,
) -> str:
    if not outline:
        raise ValueError("outline is empty")
    segments: list[str] = []
    for j, bullet in enumerate(outline):
        content = render_template(
            config.segment_template,
            prompt=prompt,
            bullet=getattr(bullet, "raw", bullet),
            so_far=" ".join(segments),
        )
        try:
            segments.append(client.complete(content, f"segment-{j}", trace))
        except EndpointError as e:
            raise SegmentGenerationError(j, list(segments), e) from e
    return " ".join(segments)


def generate_document(
    doc: Document, config: GenerationConfig, client: ChatClient
) -> tuple[Document, GenerationTrace]:
    """Run both stages for one document. The trace is attached to any raised error as ``.trace``."""
    trace = GenerationTrace(doc.id, config.mode, started=_now())
    try:
        outline = predict_outline(doc.prompt, config, client, trace)
        stage2 = generate_all_in if config.mode == "all-in" else generate_separate
        text = stage2(doc.prompt, outline, config, client, trace)
    except Exception as e:
        trace.finished, trace.error = _now(), f"{type(e).__name__}: {e}"
        e.trace = trace
        raise
    trace.finished = _now()
    ref = doc.reference_sentences()
    generated = Document(
        id=doc.id,
        prompt=doc.prompt,
        outline=tuple(outline),
        text=tuple(segment_sentences(text)),
        source="generated",
        provenance={
            "model": config.model,
            "mode": config.mode,
            "outline_bullets": config.outline_bullets,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
            "seed": config.seed,
        },
        reference=ref if ref else None,
    )
    return generated, trace


# --- corpus runner -----------------------------------------------------------

class Checkpoint:
    """Newline-delimited ids of finished documents; written by one thread only."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.done: set[str] = set()
        if self.path is not None and self.path.exists():
            self.done = {ln.strip() for ln in self.path.read_text(encoding="utf-8").splitlines() if ln.strip()}

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.done

    def mark(self, doc_id: str) -> None:
        self.done.add(doc_id)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(doc_id + "\n")


@dataclass
class GenerationResult:
    source: Document
    document: Document | None
    trace: GenerationTrace
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _is_endpoint_failure(e: BaseException) -> bool:
    return isinstance(e, EndpointError) or (
        isinstance(e, SegmentGenerationError) and isinstance(e.cause, EndpointError)
    )


def run_generation(
    documents: Iterable[Document],
    config: GenerationConfig,
    client: ChatClient,
    checkpoint: Checkpoint | None = None,
) -> Iterator[GenerationResult]:
    """Generate every document not yet in ``checkpoint``, yielding results in input order.

    At most ``config.concurrency`` documents are in flight. A document whose
    outline cannot be parsed is yielded as a failed result and the run goes on;
    an endpoint that stays down aborts the run with ``GenerationAborted``.
    Successful documents are marked in the checkpoint once the consumer has
    taken them.
    """
    checkpoint = checkpoint or Checkpoint(None)
    todo = (d for d in documents if d.id not in checkpoint)
    completed = 0

    def work(doc: Document) -> GenerationResult:
        try:
            out, trace = generate_document(doc, config, client)
            return GenerationResult(doc, out, trace)
        except (OutlineParseError, SegmentGenerationError, EndpointError) as e:
            return GenerationResult(doc, None, e.trace, e)

    window = config.concurrency * 4
    pool = ThreadPoolExecutor(max_workers=config.concurrency, thread_name_prefix="generate")
    pending: deque[Future] = deque()
    try:
        for doc in todo:
            pending.append(pool.submit(work, doc))
            if len(pending) >= window:
                completed = yield from _drain_one(pending, checkpoint, completed)
        while pending:
            completed = yield from _drain_one(pending, checkpoint, completed)
    finally:
        for f in pending:
            f.cancel()
        pool.shutdown(wait=True, cancel_futures=True)


def _drain_one(pending: deque, checkpoint: Checkpoint, completed: int):
    result: GenerationResult = pending.popleft().result()
    if result.error is not None and _is_endpoint_failure(result.error):
        raise GenerationAborted(completed, result.error)
    yield result
    if result.ok:
        checkpoint.mark(result.source.id)
        completed += 1
    return completed
