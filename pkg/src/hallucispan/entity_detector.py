"""Entity-based hallucination baseline.

Concept mentions are found in both the context and the summary with a
dictionary recognizer; summary mentions whose concept never occurs in the
context are flagged. Optionally, concept embeddings relax the comparison:
a summary concept counts as supported when some context concept is at least
``tau``-similar (cosine).
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .anno_model import AnnotationSet, DocumentPair, SpanAnnotation, iter_jsonl
from .errors import EmptyGrid, SchemaError
from .span_eval import evaluate_corpus
from .tagged_text import CLASS_AGNOSTIC

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\w+(?:['’-]\w+)*|[^\w\s]")
DEFAULT_TAU = 0.85
ANNOTATOR = "entity-baseline"


def _tokens(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class Mention:
    start: int
    end: int
    concept_id: str
    semantic_type: str


class Lexicon:
    """Surface form -> (concept id, semantic type) dictionary.

    Lookups are case-insensitive and whitespace-insensitive (surface forms
    are compared as token sequences).
    """

    def __init__(self, entries: Mapping[str, tuple[str, str]] | Iterable[tuple[str, str, str]] = (),
                 semantic_type_filter: Iterable[str] | None = None):
        self.entries: dict[tuple[str, ...], tuple[str, str]] = {}
        items = entries.items() if isinstance(entries, Mapping) else ((s, (c, t)) for s, c, t in entries)
        for surface, (cid, stype) in items:
            self.add(surface, cid, stype)
        self.semantic_type_filter = frozenset(semantic_type_filter or ())

    def add(self, surface: str, concept_id: str, semantic_type: str) -> None:
        key = tuple(t for t, _, _ in _tokens(surface))
        if not key:
            raise ValueError(f"empty surface form {surface!r}")
        if key in self.entries and self.entries[key] != (concept_id, semantic_type):
            log.warning("surface form %r already mapped to %s; keeping first", surface, self.entries[key])
            return
        self.entries[key] = (concept_id, semantic_type)

    def __len__(self) -> int:
        return len(self.entries)

    def allowed(self, semantic_type: str) -> bool:
        return not self.semantic_type_filter or semantic_type in self.semantic_type_filter

    @property
    def max_len(self) -> int:
        return max((len(k) for k in self.entries), default=0)

    @classmethod
    def load(cls, path: str | Path, semantic_type_filter: Iterable[str] | None = None) -> "Lexicon":
        lex = cls(semantic_type_filter=semantic_type_filter)
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise SchemaError("expected surface<TAB>concept_id<TAB>semantic_type", i)
                lex.add(*parts)
        return lex


class EmbeddingStore:
    def __init__(self, vectors: Mapping[str, Sequence[float]] | None = None, dim: int | None = None):
        self.vectors: dict[str, np.ndarray] = {}
        self.dim = dim
        for cid, vec in (vectors or {}).items():
            self.add(cid, vec)

    def add(self, concept_id: str, vec: Sequence[float]) -> None:
        arr = np.asarray(vec, dtype=float)
        if self.dim is None:
            self.dim = arr.size
        if arr.ndim != 1 or arr.size != self.dim:
            raise ValueError(f"vector for {concept_id} has dimension {arr.size}, expected {self.dim}")
        if not np.linalg.norm(arr) > 0:
            raise ValueError(f"vector for {concept_id} has zero norm")
        self.vectors[concept_id] = arr

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def cosine(self, a: str, b: str) -> float:
        va, vb = self.vectors[a], self.vectors[b]
        return float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb)))

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingStore":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 1 or not header[0].isdigit():
                raise SchemaError("first line must hold the vector dimension", 0)
            store = cls(dim=int(header[0]))
            for i, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                try:
                    store.add(parts[0], [float(x) for x in parts[1:]])
                except ValueError as exc:
                    raise SchemaError(str(exc), i) from None
        return store


@dataclass(frozen=True)
class DetectorConfig:
    tau: float = DEFAULT_TAU
    use_embeddings: bool = False

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")


def recognize(text: str, lexicon: Lexicon) -> list[Mention]:
    """Leftmost-longest dictionary matches on token boundaries.

    Entries outside the lexicon's semantic-type filter never match, so a
    filtered long form does not shadow an allowed shorter one.
    """
    toks = _tokens(text)
    max_len = lexicon.max_len
    out: list[Mention] = []
    i = 0
    while i < len(toks):
        hit = None
        for n in range(min(max_len, len(toks) - i), 0, -1):
            entry = lexicon.entries.get(tuple(t for t, _, _ in toks[i:i + n]))
            if entry and lexicon.allowed(entry[1]):
                hit = (n, entry)
                break
        if hit:
            n, (cid, stype) = hit
            out.append(Mention(toks[i][1], toks[i + n - 1][2], cid, stype))
            i += n
        else:
            i += 1
    return out


@dataclass
class Detection:
    annotations: AnnotationSet
    missing_embeddings: list[str] = field(default_factory=list)
    summary_mentions: list[Mention] = field(default_factory=list)


def _supported(cid: str, context_ids: set[str], embeddings: EmbeddingStore | None, cfg: DetectorConfig,
               missing: list[str]) -> bool:
    if cid in context_ids:
        return True
    if not cfg.use_embeddings or embeddings is None or len(embeddings) == 0:
        return False
    if cid not in embeddings:
        missing.append(cid)
        return False
    for other in sorted(context_ids):
        if other not in embeddings:
            if other not in missing:
                missing.append(other)
            continue
        if embeddings.cosine(cid, other) >= cfg.tau:
            return True
    return False


def detect(
    doc: DocumentPair,
    lexicon: Lexicon | None,
    embeddings: EmbeddingStore | None = None,
    cfg: DetectorConfig = DetectorConfig(),
    summary_mentions: Sequence[Mention] | None = None,
    context_mentions: Sequence[Mention] | None = None,
) -> Detection:
    """Flag summary mentions whose concept is not supported by the context.

    Precomputed mentions (from an external recognizer) bypass ``recognize``.
    Concepts lacking an embedding fall back to exact-id matching and are
    listed in ``missing_embeddings``.
    """
    if summary_mentions is None:
        summary_mentions = recognize(doc.summary, lexicon)
    if context_mentions is None:
        context_mentions = recognize(doc.context, lexicon)
    if lexicon is not None:
        summary_mentions = [m for m in summary_mentions if lexicon.allowed(m.semantic_type)]
        context_mentions = [m for m in context_mentions if lexicon.allowed(m.semantic_type)]
    context_ids = {m.concept_id for m in context_mentions}
    missing: list[str] = []
    spans = []
    cache: dict[str, bool] = {}
    for m in summary_mentions:
        if m.concept_id not in cache:
            cache[m.concept_id] = _supported(m.concept_id, context_ids, embeddings, cfg, missing)
        if not cache[m.concept_id]:
            spans.append(SpanAnnotation(m.start, m.end))
    return Detection(AnnotationSet(doc.id, ANNOTATOR, tuple(spans)), missing, list(summary_mentions))


def load_mentions(path: str | Path) -> dict[tuple[str, str], list[Mention]]:
    """Read externally recognized mentions keyed by (doc_id, side)."""
    out: dict[tuple[str, str], list[Mention]] = {}
    for i, rec in iter_jsonl(path):
        try:
            side = rec["side"]
            if side not in ("context", "summary"):
                raise ValueError(f"side must be context or summary, got {side!r}")
            start, end = rec["start"], rec["end"]
            if type(start) is not int or type(end) is not int or not 0 <= start < end:
                raise ValueError(f"invalid offsets ({start}, {end})")
            m = Mention(start, end, str(rec["concept_id"]), str(rec.get("semantic_type", "")))
        except (KeyError, ValueError) as exc:
            raise SchemaError(str(exc), i) from None
        out.setdefault((str(rec["doc_id"]), side), []).append(m)
    for key, ms in out.items():
        ms.sort(key=lambda m: (m.start, m.end))
        for a, b in zip(ms, ms[1:]):
            if b.start < a.end:
                raise SchemaError(f"overlapping mentions in {key}")
    return out


@dataclass
class TauSearch:
    tau: float
    scores: dict[float, float]
    all_zero: bool


def tune_tau(
    dev_gold: Sequence[AnnotationSet],
    dev_docs: Sequence[DocumentPair],
    lexicon: Lexicon,
    embeddings: EmbeddingStore,
    grid: Iterable[float],
) -> TauSearch:
    """Pick the threshold with the best class-agnostic partial-match F1.

    Ties go to the smallest threshold.
    """
    grid = sorted(set(float(t) for t in grid))
    if not grid:
        raise EmptyGrid("tau grid is empty")
    gold = [g.agnostic() for g in dev_gold]
    scores = {}
    for tau in grid:
        cfg = DetectorConfig(tau=tau, use_embeddings=True)
        preds = [detect(d, lexicon, embeddings, cfg).annotations for d in dev_docs]
        scores[tau] = evaluate_corpus(gold, preds, CLASS_AGNOSTIC).f1
    best = max(scores.values())
    tau = min(t for t, s in scores.items() if math.isclose(s, best, rel_tol=0, abs_tol=1e-12))
    all_zero = best == 0
    if all_zero:
        log.warning("every tau in the grid scored F1 = 0; returning %s", tau)
    return TauSearch(tau, scores, all_zero)
