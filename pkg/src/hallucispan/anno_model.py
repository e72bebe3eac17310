"""Document pairs, span annotations, the 11-label taxonomy and standoff IO."""

from __future__ import annotations

import enum
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import SchemaError, UnknownLabel

DEID_TOKEN = "___"


class HallucinationClass(str, enum.Enum):
    UNSUPPORTED_CONDITION = "unsupported_condition"
    UNSUPPORTED_PROCEDURE = "unsupported_procedure"
    UNSUPPORTED_MEDICATION = "unsupported_medication"
    UNSUPPORTED_TIME = "unsupported_time"
    UNSUPPORTED_LOCATION = "unsupported_location"
    UNSUPPORTED_NUMBER = "unsupported_number"
    UNSUPPORTED_NAME = "unsupported_name"
    UNSUPPORTED_WORD = "unsupported_word"
    UNSUPPORTED_OTHER = "unsupported_other"
    CONTRADICTED_FACT = "contradicted_fact"
    INCORRECT_FACT = "incorrect_fact"

    @property
    def family(self) -> str:
        if self.value.startswith("unsupported_"):
            return "unsupported"
        return self.value

    @property
    def short_name(self) -> str:
        return SHORT_NAMES[self]


# Column headers used by the per-type count table.
SHORT_NAMES = {
    HallucinationClass.UNSUPPORTED_CONDITION: "cond.",
    HallucinationClass.UNSUPPORTED_PROCEDURE: "proc.",
    HallucinationClass.UNSUPPORTED_MEDICATION: "medic.",
    HallucinationClass.UNSUPPORTED_TIME: "time",
    HallucinationClass.UNSUPPORTED_LOCATION: "loc.",
    HallucinationClass.UNSUPPORTED_NUMBER: "numb.",
    HallucinationClass.UNSUPPORTED_NAME: "name",
    HallucinationClass.UNSUPPORTED_WORD: "word",
    HallucinationClass.UNSUPPORTED_OTHER: "other",
    HallucinationClass.CONTRADICTED_FACT: "contrad.",
    HallucinationClass.INCORRECT_FACT: "incorr.",
}

ALL_CLASSES: tuple[HallucinationClass, ...] = tuple(HallucinationClass)


def parse_label(name: str) -> HallucinationClass:
    """Map a label string to its class.

    Matching ignores case and treats spaces and hyphens like underscores, so
    ``"Contradicted Fact"`` and ``"contradicted_fact"`` are equivalent.
    """
    if not isinstance(name, str):
        raise UnknownLabel(f"label must be a string, got {type(name).__name__}")
    key = "_".join(name.strip().lower().replace("-", " ").replace("_", " ").split())
    try:
        return HallucinationClass(key)
    except ValueError:
        raise UnknownLabel(f"unknown hallucination label: {name!r}") from None


@dataclass(frozen=True)
class DocumentPair:
    id: str
    context: str
    summary: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")


@dataclass(frozen=True, order=True)
class SpanAnnotation:
    start: int
    end: int
    label: HallucinationClass | None = field(default=None, compare=False)

    def text(self, summary: str) -> str:
        return summary[self.start:self.end]

    def overlaps(self, other: "SpanAnnotation") -> bool:
        return self.start < other.end and other.start < self.end

    def overlap_len(self, other: "SpanAnnotation") -> int:
        return max(0, min(self.end, other.end) - max(self.start, other.start))

    def same_bounds(self, other: "SpanAnnotation") -> bool:
        return self.start == other.start and self.end == other.end

    def agnostic(self) -> "SpanAnnotation":
        return SpanAnnotation(self.start, self.end)


@dataclass(frozen=True)
class AnnotationSet:
    doc_id: str
    annotator: str
    spans: tuple[SpanAnnotation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(sorted(self.spans, key=lambda s: (s.start, s.end))))

    def __len__(self) -> int:
        return len(self.spans)

    def agnostic(self) -> "AnnotationSet":
        return AnnotationSet(self.doc_id, self.annotator, tuple(s.agnostic() for s in self.spans))


AUX_KINDS = ("key_fact_context", "key_fact_summary", "medical_jargon")


@dataclass(frozen=True)
class AuxLabelSet:
    """Key-fact or medical-jargon spans used by the qualitative subtasks."""

    doc_id: str
    label_kind: str
    spans: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.label_kind not in AUX_KINDS:
            raise ValueError(f"label_kind must be one of {AUX_KINDS}")
        object.__setattr__(self, "spans", tuple(sorted(self.spans)))

    def target_text(self, doc: DocumentPair) -> str:
        return doc.context if self.label_kind == "key_fact_context" else doc.summary


@dataclass(frozen=True)
class Violation:
    span_index: int | None
    rule: str
    message: str


def _coerce_text(text) -> str:
    if isinstance(text, (bytes, bytearray)):
        return bytes(text).decode("utf-8", errors="replace")
    if not isinstance(text, str):
        return str(text)
    return text


def _check_spans(pairs: list[tuple[int, int]], text: str) -> list[Violation]:
    out = []
    n = len(text)
    for i, (start, end) in enumerate(pairs):
        if not (isinstance(start, int) and isinstance(end, int)):
            out.append(Violation(i, "type", "offsets must be integers"))
            continue
        if not (0 <= start < end <= n):
            out.append(Violation(i, "bounds", f"({start}, {end}) outside 0..{n} or empty"))
            continue
        if not text[start:end].strip():
            out.append(Violation(i, "empty", f"({start}, {end}) covers only whitespace"))
    for i in range(1, len(pairs)):
        prev, cur = pairs[i - 1], pairs[i]
        if (cur[0], cur[1]) < (prev[0], prev[1]):
            out.append(Violation(i, "order", "spans not sorted by (start, end)"))
        elif cur[0] < prev[1]:
            out.append(Violation(i, "overlap", f"({cur[0]}, {cur[1]}) overlaps ({prev[0]}, {prev[1]})"))
    return out


def validate(aset: AnnotationSet, doc: DocumentPair) -> list[Violation]:
    """Check an annotation set against its document. Never raises."""
    try:
        out = []
        if aset.doc_id != doc.id:
            out.append(Violation(None, "doc_mismatch", f"set for {aset.doc_id!r} checked against {doc.id!r}"))
        summary = _coerce_text(doc.summary)
        pairs = [(s.start, s.end) for s in aset.spans]
        out.extend(_check_spans(pairs, summary))
        return out
    except Exception as exc:  # totality: report rather than raise
        return [Violation(None, "internal", repr(exc))]


def validate_aux(aux: AuxLabelSet, doc: DocumentPair) -> list[Violation]:
    return _check_spans(list(aux.spans), _coerce_text(aux.target_text(doc)))


# --- IO ---------------------------------------------------------------------


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc}", i) from None
            if not isinstance(rec, dict):
                raise SchemaError("record is not an object", i)
            yield i, rec


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _span_from_record(raw, idx: int) -> SpanAnnotation:
    if not isinstance(raw, dict):
        raise SchemaError("span is not an object", idx)
    start, end = raw.get("start"), raw.get("end")
    if type(start) is not int or type(end) is not int:
        raise SchemaError("span start/end must be integers", idx)
    if start < 0 or end <= start:
        raise SchemaError(f"invalid span offsets ({start}, {end})", idx)
    label = raw.get("class")
    if label is None:
        return SpanAnnotation(start, end)
    try:
        return SpanAnnotation(start, end, parse_label(label))
    except Exception as exc:
        raise SchemaError(str(exc), idx) from None


def set_from_record(rec: dict, idx: int = 0) -> AnnotationSet:
    doc_id, annotator, spans = rec.get("doc_id"), rec.get("annotator"), rec.get("spans")
    if not isinstance(doc_id, str) or not doc_id:
        raise SchemaError("doc_id must be a non-empty string", idx)
    if not isinstance(annotator, str):
        raise SchemaError("annotator must be a string", idx)
    if not isinstance(spans, list):
        raise SchemaError("spans must be a list", idx)
    aset = AnnotationSet(doc_id, annotator, tuple(_span_from_record(s, idx) for s in spans))
    for a, b in zip(aset.spans, aset.spans[1:]):
        if b.start < a.end:
            raise SchemaError(f"overlapping spans ({a.start}, {a.end}) and ({b.start}, {b.end})", idx)
    return aset


def set_to_record(aset: AnnotationSet) -> dict:
    return {
        "doc_id": aset.doc_id,
        "annotator": aset.annotator,
        "spans": [
            {"start": s.start, "end": s.end, "class": s.label.value if s.label else None}
            for s in aset.spans
        ],
    }


def load_standoff(path: str | Path) -> list[AnnotationSet]:
    return [set_from_record(rec, i) for i, rec in iter_jsonl(path)]


def save_standoff(path: str | Path, sets: Iterable[AnnotationSet]) -> None:
    write_jsonl(path, (set_to_record(s) for s in sets))


def load_corpus(path: str | Path) -> list[DocumentPair]:
    docs, seen = [], set()
    for i, rec in iter_jsonl(path):
        try:
            doc = DocumentPair(str(rec["id"]), rec["context"], rec["summary"])
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad corpus record: {exc}", i) from None
        if not isinstance(doc.context, str) or not isinstance(doc.summary, str):
            raise SchemaError("context and summary must be strings", i)
        if doc.id in seen:
            raise SchemaError(f"duplicate document id {doc.id!r}", i)
        seen.add(doc.id)
        docs.append(doc)
    return docs


def save_corpus(path: str | Path, docs: Iterable[DocumentPair]) -> None:
    write_jsonl(path, ({"id": d.id, "context": d.context, "summary": d.summary} for d in docs))


# --- counting ---------------------------------------------------------------


@dataclass
class CountTable:
    per_class: dict[HallucinationClass, int]
    unlabeled: int
    total: int
    per_summary: list[int]
    mean: float
    sd: float

    def row(self) -> dict[str, float]:
        out: dict[str, float] = {c.short_name: self.per_class[c] for c in ALL_CLASSES}
        out["Total"] = self.total
        return out


def count_annotations(sets: Iterable[AnnotationSet], group_by: str = "class") -> CountTable:
    """Tally spans per class and per summary.

    Both groupings are always computed; ``group_by`` only validates the
    caller's intent. The SD is the sample standard deviation (n - 1), 0 for
    fewer than two summaries.
    """
    if group_by not in ("class", "summary"):
        raise ValueError("group_by must be 'class' or 'summary'")
    per_class = {c: 0 for c in ALL_CLASSES}
    unlabeled = 0
    per_summary = []
    for aset in sets:
        per_summary.append(len(aset.spans))
        for s in aset.spans:
            if s.label is None:
                unlabeled += 1
            else:
                per_class[s.label] += 1
    total = sum(per_summary)
    mean = statistics.fmean(per_summary) if per_summary else 0.0
    sd = statistics.stdev(per_summary) if len(per_summary) > 1 else 0.0
    return CountTable(per_class, unlabeled, total, per_summary, mean, sd)


def count_deid(text: str) -> int:
    return text.count(DEID_TOKEN)
