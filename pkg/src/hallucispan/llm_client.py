"""Prompt construction, chat-completion transport and response post-processing.

Detection prompts ask the model to copy the summary with ``<error>`` tags
inserted; the copy is parsed, aligned back to the original summary and
turned into an annotation set. Responses can be recorded to and replayed
from a fixture directory keyed by a hash of the request messages.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from .anno_model import AnnotationSet, DocumentPair, SpanAnnotation, validate
from .errors import (
    ConfigError,
    ExternalError,
    FixtureMiss,
    HalluError,
    RateLimited,
    SchemaError,
    TemplateMissing,
    TransportError,
)
from .tagged_text import (
    CLASS_AGNOSTIC,
    CLASS_AWARE,
    DEFAULT_MIN_CONFIDENCE,
    _check_mode,
    align,
    parse_tagged,
    project_spans,
    render_tagged,
)

log = logging.getLogger(__name__)

DETECTION, SUMMARIZATION = "detection", "summarization"
LABELED_HEADER = "AVS WITH ERRORS LABELED:"
MAX_SUMMARY_SHOTS = 5
ANNOTATOR = "llm"

Message = dict[str, str]


# --- templates ----------------------------------------------------------------

TEMPLATE_FILES = {
    "system": "system.txt",
    "detection_guidelines": "detection_guidelines.txt",
    "detection_agnostic_format": "detection_agnostic_format.txt",
    "summarization_instruction": "summarization_instruction.txt",
}


def load_template(name: str, template_dir: str | Path | None = None) -> str:
    """Read a prompt template, from ``template_dir`` if given, else the bundled copy."""
    fname = TEMPLATE_FILES.get(name, name)
    try:
        if template_dir is not None:
            text = (Path(template_dir) / fname).read_text(encoding="utf-8")
        else:
            text = resources.files("hallucispan").joinpath("templates", fname).read_text(encoding="utf-8")
    except (FileNotFoundError, OSError) as exc:
        raise TemplateMissing(f"template {fname!r} not found: {exc}") from None
    return text.rstrip("\n")


# --- prompt specs ---------------------------------------------------------------


@dataclass(frozen=True)
class Decoding:
    max_new_tokens: int = 600
    temperature: float = 0.0


@dataclass(frozen=True)
class DetectionShot:
    """One labeled exemplar: context, plain summary, gold spans, optional reasoning list."""

    document: str
    summary: str
    spans: tuple[SpanAnnotation, ...] = ()
    errors: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(sorted(self.spans, key=lambda s: (s.start, s.end))))
        bad = validate(AnnotationSet("shot", "shot", self.spans), DocumentPair("shot", self.document, self.summary))
        if bad:
            raise SchemaError(f"invalid exemplar spans: {bad[0].message}")

    @classmethod
    def from_annotations(cls, doc: DocumentPair, aset: AnnotationSet, errors: str | None = None) -> "DetectionShot":
        return cls(doc.context, doc.summary, aset.spans, errors)

    @classmethod
    def from_tagged(cls, document: str, tagged_summary: str, errors: str | None = None) -> "DetectionShot":
        plain, spans = parse_tagged(tagged_summary, CLASS_AWARE)
        return cls(document, plain, tuple(spans), errors)

    def tagged(self, mode: str) -> str:
        return render_tagged(self.summary, self.spans, with_class=mode == CLASS_AWARE)

    def error_list(self, mode: str) -> str:
        """Reasoning list for chain-of-thought exemplars; derived from the spans if not given."""
        if self.errors is not None:
            return self.errors
        if not self.spans:
            return "- none"
        lines = []
        for s in self.spans:
            quoted = json.dumps(s.text(self.summary), ensure_ascii=False)
            if mode == CLASS_AWARE and s.label is not None:
                lines.append(f"- {quoted}: {s.label.value}")
            else:
                lines.append(f"- {quoted}")
        return "\n".join(lines)


@dataclass(frozen=True)
class SummaryShot:
    document: str
    summary: str


@dataclass(frozen=True)
class PromptSpec:
    task: str = DETECTION
    mode: str = CLASS_AWARE
    cot: bool = False
    shots: tuple = ()
    decoding: Decoding = Decoding()
    template_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(self.shots))
        if self.task == DETECTION:
            _check_mode(self.mode)
            if not all(isinstance(s, DetectionShot) for s in self.shots):
                raise SchemaError("detection shots must be DetectionShot records")
        elif self.task == SUMMARIZATION:
            if not all(isinstance(s, SummaryShot) for s in self.shots):
                raise SchemaError("summarization shots must be SummaryShot records")
            if len(self.shots) > MAX_SUMMARY_SHOTS:
                raise ValueError(f"at most {MAX_SUMMARY_SHOTS} summarization shots")
        else:
            raise ValueError(f"unknown task {self.task!r}")


def build_detection_prompt(spec: PromptSpec, doc: DocumentPair) -> list[Message]:
    if spec.task != DETECTION:
        raise ValueError("build_detection_prompt needs a detection PromptSpec")
    parts = [load_template("detection_guidelines", spec.template_dir)]
    if spec.mode == CLASS_AGNOSTIC:
        parts.append(load_template("detection_agnostic_format", spec.template_dir))
    body = "\n\n".join(parts) + "\n\n## Examples\n\n"
    for i, shot in enumerate(spec.shots, start=1):
        body += f"### Example {i}\n\nBHC:\n{shot.document}\n\nAVS:\n{shot.summary}\n\n"
        if spec.cot:
            body += f"ERRORS:\n{shot.error_list(spec.mode)}\n\n"
        body += f"{LABELED_HEADER}\n{shot.tagged(spec.mode)}\n\n"
    body += f"### Example {len(spec.shots) + 1}\n\nBHC:\n{doc.context}\n\nAVS:\n{doc.summary}\n\nERROR:"
    return [
        {"role": "system", "content": load_template("system", spec.template_dir)},
        {"role": "user", "content": body},
    ]


def build_summarization_prompt(shots: Sequence[SummaryShot], doc: DocumentPair,
                               template_dir: str | None = None) -> list[Message]:
    if not 0 <= len(shots) <= MAX_SUMMARY_SHOTS:
        raise ValueError(f"between 0 and {MAX_SUMMARY_SHOTS} shots allowed")
    body = load_template("summarization_instruction", template_dir) + "\n"
    if shots:
        body += "Here are some examples:\n"
        for s in shots:
            body += f"DOCUMENT:\n{s.document}\nSUMMARY:\n{s.summary}\n"
    body += f"\nDOCUMENT: {doc.context}"
    return [
        {"role": "system", "content": load_template("system", template_dir)},
        {"role": "user", "content": body},
    ]


# --- transport ---------------------------------------------------------------------


def fixture_key(messages: Sequence[Message]) -> str:
    canon = json.dumps(list(messages), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class FixtureStore:
    """Directory of ``<key>.json`` files holding recorded responses."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, messages: Sequence[Message]) -> dict:
        key = fixture_key(messages)
        try:
            with open(self.path(key), encoding="utf-8") as fh:
                rec = json.load(fh)
        except FileNotFoundError:
            raise FixtureMiss(key) from None
        if not isinstance(rec, dict) or not isinstance(rec.get("text"), str):
            raise SchemaError(f"fixture {key} lacks a text field")
        return rec

    def put(self, messages: Sequence[Message], text: str, usage: dict | None = None) -> str:
        key = fixture_key(messages)
        self.root.mkdir(parents=True, exist_ok=True)
        rec = {"key": key, "messages": list(messages), "text": text, "usage": usage or {}}
        tmp = self.path(key).with_suffix(".tmp")
        tmp.write_text(json.dumps(rec, ensure_ascii=False, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self.path(key))
        return key


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to send requests.

    ``fixture_mode`` is ``off`` (live only), ``replay`` (fixtures only, no
    network) or ``record`` (live, then store the response).
    """

    base_url: str | None = None
    model: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    api_key_header: str = "Authorization"
    timeout: float = 120.0
    max_retries: int = 4
    backoff_base: float = 1.0
    backoff_cap: float = 30.0
    fixture_dir: str | None = None
    fixture_mode: str = "off"

    def __post_init__(self):
        if self.fixture_mode not in ("off", "replay", "record"):
            raise ConfigError(f"fixture_mode must be off, replay or record, got {self.fixture_mode!r}")
        if self.fixture_mode != "off" and not self.fixture_dir:
            raise ConfigError(f"fixture_mode {self.fixture_mode} needs fixture_dir")


@dataclass
class LlmResponse:
    text: str
    raw: Any = None
    usage: dict = field(default_factory=dict)
    fixture_key: str | None = None


_TRANSIENT = {408, 409, 429, 500, 502, 503, 504}


class LlmClient:
    """Thread-safe chat-completion client with retries and record/replay."""

    def __init__(self, endpoint: EndpointConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        self.store = FixtureStore(endpoint.fixture_dir) if endpoint.fixture_dir else None
        self._transport = transport
        self._sleep = sleep
        self._http: httpx.Client | None = None
        self._lock = threading.Lock()
        self.requests_sent = 0

    def _credential(self) -> str:
        ep = self.endpoint
        if not ep.base_url:
            raise ConfigError("endpoint base_url is not configured")
        if not ep.model:
            raise ConfigError("endpoint model is not configured")
        key = os.environ.get(ep.api_key_env)
        if not key:
            raise ConfigError(f"credential environment variable {ep.api_key_env} is not set")
        return key

    def _client(self) -> httpx.Client:
        with self._lock:
            if self._http is None:
                self._http = httpx.Client(timeout=self.endpoint.timeout, transport=self._transport)
            return self._http

    def close(self) -> None:
        if self._http is not None:
            self._http.close()

    def complete(self, messages: Sequence[Message], decoding: Decoding = Decoding()) -> LlmResponse:
        ep = self.endpoint
        if ep.fixture_mode == "replay":
            rec = self.store.get(messages)
            return LlmResponse(rec["text"], rec, rec.get("usage") or {}, fixture_key(messages))
        resp = self._post(messages, decoding)
        if ep.fixture_mode == "record":
            resp.fixture_key = self.store.put(messages, resp.text, resp.usage)
        return resp

    def _post(self, messages: Sequence[Message], decoding: Decoding) -> LlmResponse:
        ep = self.endpoint
        key = self._credential()
        auth = f"Bearer {key}" if ep.api_key_header.lower() == "authorization" else key
        payload = {
            "model": ep.model,
            "messages": list(messages),
            "max_tokens": decoding.max_new_tokens,
            "temperature": decoding.temperature,
        }
        url = ep.base_url.rstrip("/") + "/chat/completions"
        last = "no attempt made"
        rate_limited = False
        for attempt in range(ep.max_retries + 1):
            if attempt:
                delay = min(ep.backoff_cap, ep.backoff_base * 2 ** (attempt - 1))
                self._sleep(delay * (0.5 + random.random() / 2))
            try:
                with self._lock:
                    self.requests_sent += 1
                r = self._client().post(url, json=payload, headers={ep.api_key_header: auth})
            except httpx.TransportError as exc:
                last, rate_limited = f"{type(exc).__name__}: {exc}", False
                log.warning("request failed (%s), attempt %d", last, attempt + 1)
                continue
            if r.status_code in _TRANSIENT:
                last, rate_limited = f"HTTP {r.status_code}", r.status_code == 429
                log.warning("transient %s, attempt %d", last, attempt + 1)
                continue
            if r.status_code >= 400:
                raise TransportError(f"HTTP {r.status_code}: {r.text[:500]}")
            try:
                data = r.json()
                text = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"unexpected response body: {exc}") from None
            if text is None:
                raise TransportError("response has no message content")
            return LlmResponse(text, data, dict(data.get("usage") or {}))
        if rate_limited:
            raise RateLimited(f"rate limited after {ep.max_retries + 1} attempts")
        raise TransportError(f"giving up after {ep.max_retries + 1} attempts: {last}")


def complete(messages: Sequence[Message], endpoint: EndpointConfig | LlmClient,
             decoding: Decoding = Decoding()) -> LlmResponse:
    client = endpoint if isinstance(endpoint, LlmClient) else LlmClient(endpoint)
    return client.complete(messages, decoding)


# --- detection -----------------------------------------------------------------------


@dataclass
class DetectionDiagnostics:
    doc_id: str
    confidence: float | None = None
    section_found: bool = False
    dropped: list[dict] = field(default_factory=list)
    cot_errors: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    fixture_key: str | None = None
    failure: dict | None = None

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "confidence": self.confidence,
            "section_found": self.section_found,
            "dropped": self.dropped,
            "cot_errors": self.cot_errors,
            "notes": self.notes,
            "fixture_key": self.fixture_key,
            "failure": self.failure,
        }


@dataclass
class DetectionResult:
    annotations: AnnotationSet
    diagnostics: DetectionDiagnostics

    @property
    def failed(self) -> bool:
        return self.diagnostics.failure is not None


def split_response(text: str) -> tuple[str, bool, list[str]]:
    """Return (labeled summary, header found, reasoning lines before it)."""
    idx = text.rfind(LABELED_HEADER)
    if idx < 0:
        return text.strip(), False, []
    head, labeled = text[:idx], text[idx + len(LABELED_HEADER):]
    head = re.sub(r"^\s*ERRORS?:\s*", "", head)
    cot = [re.sub(r"^[-*]\s*", "", ln.strip()) for ln in head.splitlines() if ln.strip()]
    return labeled.strip(), True, cot


def postprocess_detection(response: str, doc: DocumentPair, mode: str,
                          min_confidence: float = DEFAULT_MIN_CONFIDENCE,
                          diag: DetectionDiagnostics | None = None) -> AnnotationSet:
    """Turn a raw detection response into spans on ``doc.summary``."""
    diag = diag if diag is not None else DetectionDiagnostics(doc.id)
    labeled, found, cot = split_response(response)
    diag.section_found, diag.cot_errors = found, cot
    if not found:
        diag.notes.append("labeled-summary header missing; parsed whole response")
    variant, spans = parse_tagged(labeled, mode, diag.notes)
    omap = align(variant, doc.summary, threshold=min_confidence)
    diag.confidence = omap.confidence
    kept, dropped = project_spans(spans, omap)
    diag.dropped = [{"start": d.span.start, "end": d.span.end, "reason": d.reason} for d in dropped]
    aset = AnnotationSet(doc.id, ANNOTATOR, tuple(kept))
    problems = validate(aset, doc)
    if problems:
        raise SchemaError(f"projected spans invalid: {problems[0].message}")
    return aset


def detect_with_llm(doc: DocumentPair, spec: PromptSpec, client: LlmClient,
                    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
                    diag: DetectionDiagnostics | None = None) -> DetectionResult:
    """Prompt, complete and post-process one document. Errors propagate.

    A caller-supplied ``diag`` keeps whatever was learned before a failure.
    """
    if spec.task != DETECTION:
        raise ValueError("detect_with_llm needs a detection PromptSpec")
    messages = build_detection_prompt(spec, doc)
    diag = diag if diag is not None else DetectionDiagnostics(doc.id)
    diag.fixture_key = fixture_key(messages)
    resp = client.complete(messages, spec.decoding)
    aset = postprocess_detection(resp.text, doc, spec.mode, min_confidence, diag)
    return DetectionResult(aset, diag)


def _failure(exc: HalluError) -> dict:
    return {"code": exc.code, "message": str(exc), "external": isinstance(exc, ExternalError)}


def detect_batch(docs: Sequence[DocumentPair], spec: PromptSpec, client: LlmClient,
                 workers: int = 4, min_confidence: float = DEFAULT_MIN_CONFIDENCE) -> list[DetectionResult]:
    """One result per input document, in input order; failures yield empty sets."""

    def one(doc: DocumentPair) -> DetectionResult:
        diag = DetectionDiagnostics(doc.id)
        try:
            return detect_with_llm(doc, spec, client, min_confidence, diag)
        except HalluError as exc:
            log.warning("document %s failed: %s", doc.id, exc)
            diag.failure = _failure(exc)
            return DetectionResult(AnnotationSet(doc.id, ANNOTATOR), diag)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, docs))


# --- summarization ----------------------------------------------------------------------


@dataclass
class SummaryResult:
    doc_id: str
    summary: str | None
    failure: dict | None = None


def summarize(doc: DocumentPair, shots: Sequence[SummaryShot], client: LlmClient,
              decoding: Decoding = Decoding(), template_dir: str | None = None) -> str:
    return client.complete(build_summarization_prompt(shots, doc, template_dir), decoding).text.strip()


def summarize_batch(docs: Sequence[DocumentPair], shots: Sequence[SummaryShot], client: LlmClient,
                    workers: int = 4, decoding: Decoding = Decoding(),
                    template_dir: str | None = None) -> list[SummaryResult]:
    def one(doc: DocumentPair) -> SummaryResult:
        try:
            return SummaryResult(doc.id, summarize(doc, shots, client, decoding, template_dir))
        except HalluError as exc:
            log.warning("document %s failed: %s", doc.id, exc)
            return SummaryResult(doc.id, None, _failure(exc))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, docs))
