"""Partial-match span scoring (correct / partial / incorrect / missed / spurious).

Gold and predicted spans are paired one-to-one. A pair must overlap. With
identical boundaries the pair is *correct*, otherwise *partial*; in
class-aware mode any pair whose classes differ is *incorrect* instead.
Partial matches earn half credit in precision and recall.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .anno_model import ALL_CLASSES, AnnotationSet, HallucinationClass, SpanAnnotation
from .errors import DocMismatch
from .tagged_text import CLASS_AGNOSTIC, CLASS_AWARE, _check_mode

CORRECT, PARTIAL, INCORRECT = "correct", "partial", "incorrect"


@dataclass
class EvalCounts:
    correct: int = 0
    partial: int = 0
    incorrect: int = 0
    missed: int = 0
    spurious: int = 0

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    @property
    def gold(self) -> int:
        return self.correct + self.partial + self.incorrect + self.missed

    @property
    def predicted(self) -> int:
        return self.correct + self.partial + self.incorrect + self.spurious

    @property
    def precision(self) -> float:
        return (self.correct + 0.5 * self.partial) / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return (self.correct + 0.5 * self.partial) / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _pair_kind(g: SpanAnnotation, p: SpanAnnotation, mode: str) -> str:
    if mode == CLASS_AWARE and g.label != p.label:
        return INCORRECT
    return CORRECT if g.same_bounds(p) else PARTIAL


def match_spans(
    gold: Sequence[SpanAnnotation], pred: Sequence[SpanAnnotation], mode: str = CLASS_AGNOSTIC
) -> list[tuple[int, int, str]]:
    """Pair gold and predicted spans one-to-one.

    The pairing maximises, in order of priority, the number of correct pairs,
    then partial pairs, then incorrect pairs, then the summed overlap length.
    Remaining ties go to the solver's deterministic choice. Returns
    ``(gold_index, pred_index, kind)`` triples.
    """
    _check_mode(mode)
    ng, npred = len(gold), len(pred)
    if not ng or not npred:
        return []
    # lexicographic priorities packed into one integer weight per pair
    w_overlap = 1
    w_incorrect = sum(g.end - g.start for g in gold) + 1
    w_partial = w_incorrect * (min(ng, npred) + 1)
    w_correct = w_partial * (min(ng, npred) + 1)
    unit = {CORRECT: w_correct, PARTIAL: w_partial, INCORRECT: w_incorrect}
    weights = np.zeros((ng, npred), dtype=float)
    kinds: dict[tuple[int, int], str] = {}
    for gi, g in enumerate(gold):
        for pi, p in enumerate(pred):
            ov = g.overlap_len(p)
            if ov <= 0:
                continue
            kind = _pair_kind(g, p, mode)
            kinds[gi, pi] = kind
            weights[gi, pi] = unit[kind] + w_overlap * ov
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return [(int(r), int(c), kinds[r, c]) for r, c in zip(rows, cols) if (r, c) in kinds]


def _counts_from_pairs(n_gold: int, n_pred: int, pairs) -> EvalCounts:
    c = EvalCounts()
    for _, _, kind in pairs:
        setattr(c, kind, getattr(c, kind) + 1)
    c.missed = n_gold - len(pairs)
    c.spurious = n_pred - len(pairs)
    return c


def match_document(gold: AnnotationSet, pred: AnnotationSet, mode: str = CLASS_AGNOSTIC) -> EvalCounts:
    if gold.doc_id != pred.doc_id:
        raise DocMismatch(f"gold {gold.doc_id!r} vs prediction {pred.doc_id!r}")
    pairs = match_spans(gold.spans, pred.spans, mode)
    return _counts_from_pairs(len(gold.spans), len(pred.spans), pairs)


@dataclass
class EvalReport:
    mode: str
    counts: EvalCounts
    per_class: dict[HallucinationClass, EvalCounts] = field(default_factory=dict)
    per_class_recall: dict[HallucinationClass, float] = field(default_factory=dict)
    zero_support: set[HallucinationClass] = field(default_factory=set)
    n_documents: int = 0

    @property
    def precision(self) -> float:
        return self.counts.precision

    @property
    def recall(self) -> float:
        return self.counts.recall

    @property
    def f1(self) -> float:
        return self.counts.f1

    @property
    def no_gold_spans(self) -> bool:
        return self.counts.gold == 0

    def to_record(self) -> dict:
        return {
            "mode": self.mode,
            "n_documents": self.n_documents,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "no_gold_spans": self.no_gold_spans,
            "counts": self.counts.as_dict(),
            "per_class": {c.value: self.per_class[c].as_dict() for c in self.per_class},
            "per_class_recall": {c.value: r for c, r in self.per_class_recall.items()},
            "zero_support": sorted(c.value for c in self.zero_support),
        }


def _pair_up(gold_sets: Iterable[AnnotationSet], pred_sets: Iterable[AnnotationSet]):
    preds = {p.doc_id: p for p in pred_sets}
    for g in gold_sets:
        yield g, preds.get(g.doc_id, AnnotationSet(g.doc_id, "missing"))


def evaluate_corpus(
    gold_sets: Iterable[AnnotationSet], pred_sets: Iterable[AnnotationSet], mode: str = CLASS_AGNOSTIC
) -> EvalReport:
    """Micro-averaged scores over all gold documents.

    Documents without a prediction set count as all-missed; prediction sets
    for documents absent from gold are ignored. Per-class counts attribute
    matched and missed spans to the gold class and spurious spans to the
    predicted class (when it has one).
    """
    gold_sets = list(gold_sets)
    pred_sets = list(pred_sets)
    total = EvalCounts()
    per_class = {c: EvalCounts() for c in ALL_CLASSES}
    n_docs = 0
    for g, p in _pair_up(gold_sets, pred_sets):
        n_docs += 1
        pairs = match_spans(g.spans, p.spans, mode)
        total = total + _counts_from_pairs(len(g.spans), len(p.spans), pairs)
        hit_g = {gi for gi, _, _ in pairs}
        hit_p = {pi for _, pi, _ in pairs}
        for gi, _, kind in pairs:
            lab = g.spans[gi].label
            if lab is not None:
                setattr(per_class[lab], kind, getattr(per_class[lab], kind) + 1)
        for gi, s in enumerate(g.spans):
            if gi not in hit_g and s.label is not None:
                per_class[s.label].missed += 1
        for pi, s in enumerate(p.spans):
            if pi not in hit_p and s.label is not None:
                per_class[s.label].spurious += 1
    recall, zero = per_class_recall_detail(gold_sets, pred_sets)
    return EvalReport(mode, total, per_class, recall, zero, n_docs)


def per_class_recall_detail(gold_sets, pred_sets) -> tuple[dict[HallucinationClass, float], set]:
    credit: dict[HallucinationClass, float] = defaultdict(float)
    support: dict[HallucinationClass, int] = defaultdict(int)
    for g, p in _pair_up(gold_sets, pred_sets):
        pairs = match_spans(g.spans, p.spans, CLASS_AGNOSTIC)
        for s in g.spans:
            if s.label is not None:
                support[s.label] += 1
        for gi, _, kind in pairs:
            lab = g.spans[gi].label
            if lab is not None:
                credit[lab] += 1.0 if kind == CORRECT else 0.5
    out = {c: (credit[c] / support[c] if support[c] else 0.0) for c in ALL_CLASSES}
    zero = {c for c in ALL_CLASSES if not support[c]}
    return out, zero


def per_class_recall(gold_sets, pred_sets) -> dict[HallucinationClass, float]:
    """Recall per gold class under class-agnostic matching.

    Classes without gold spans report 0; see :func:`per_class_recall_detail`
    for the zero-support flags.
    """
    return per_class_recall_detail(list(gold_sets), list(pred_sets))[0]
