"""Inter-annotator agreement: interval Krippendorff's alpha and span-overlap F1."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .anno_model import AnnotationSet, iter_jsonl
from .errors import CoverageMismatch, InsufficientData, SchemaError
from .span_eval import evaluate_corpus
from .tagged_text import CLASS_AGNOSTIC, CLASS_AWARE

log = logging.getLogger(__name__)

DIMENSIONS = ("relevance", "consistency", "simplification", "fluency", "coherence")


@dataclass(frozen=True)
class AlphaResult:
    value: float
    n_units: int
    n_values: int
    degenerate: bool = False

    def __float__(self) -> float:
        return self.value


def krippendorff_interval(units: Iterable[Sequence[float | None]]) -> AlphaResult:
    """Interval Krippendorff's alpha.

    ``units`` holds one sequence of values per unit (one entry per
    annotator, ``None`` for a missing value). Only pairable values (units
    with at least two values) enter the computation. When all pairable values
    are identical the expected disagreement is zero and alpha is reported as
    1.0 with ``degenerate`` set.
    """
    groups = []
    for u in units:
        vals = [float(v) for v in u if v is not None]
        if len(vals) >= 2:
            groups.append(np.asarray(vals))
    if len(groups) < 2:
        raise InsufficientData(f"need at least 2 pairable units, got {len(groups)}")
    allv = np.concatenate(groups)
    n = allv.size
    # sum over ordered pairs of (v - v')**2 equals 2 * (m * sum(v^2) - sum(v)^2)
    def pair_sq(v: np.ndarray) -> float:
        return 2.0 * (v.size * float(np.dot(v, v)) - float(v.sum()) ** 2)

    d_obs = sum(pair_sq(g) / (g.size - 1) for g in groups) / n
    d_exp = pair_sq(allv) / (n * (n - 1))
    if d_exp == 0:
        return AlphaResult(1.0, len(groups), n, degenerate=True)
    return AlphaResult(1.0 - d_obs / d_exp, len(groups), n)


def _count_vectors(sets_by_annotator: Mapping[str, Iterable[AnnotationSet]], docs=None):
    by_ann = {a: {s.doc_id: len(s.spans) for s in sets} for a, sets in sets_by_annotator.items()}
    if len(by_ann) < 2:
        raise InsufficientData("need at least two annotators")
    if docs is not None:
        doc_ids = [d if isinstance(d, str) else d.id for d in docs]
    else:
        doc_ids = sorted(set().union(*(m.keys() for m in by_ann.values())))
    for ann, m in by_ann.items():
        missing = [d for d in doc_ids if d not in m]
        extra = sorted(set(m) - set(doc_ids))
        if missing or extra:
            raise CoverageMismatch(f"annotator {ann!r}: missing {missing[:5]}, extra {extra[:5]}")
    annotators = sorted(by_ann)
    return [[by_ann[a][d] for a in annotators] for d in doc_ids]


def count_agreement(sets_by_annotator: Mapping[str, Iterable[AnnotationSet]], docs=None) -> AlphaResult:
    """Alpha over the number of annotated spans per summary."""
    return krippendorff_interval(_count_vectors(sets_by_annotator, docs))


def span_overlap_f1(sets_a: Iterable[AnnotationSet], sets_b: Iterable[AnnotationSet], mode: str = CLASS_AGNOSTIC) -> float:
    """F1 of annotator B's spans scored against annotator A's."""
    sets_a, sets_b = list(sets_a), list(sets_b)
    ids_a, ids_b = {s.doc_id for s in sets_a}, {s.doc_id for s in sets_b}
    if ids_a != ids_b:
        raise CoverageMismatch(f"documents differ: {sorted(ids_a ^ ids_b)[:5]}")
    return evaluate_corpus(sets_a, sets_b, mode).f1


@dataclass(frozen=True)
class RatingRecord:
    doc_id: str
    annotator: str
    dimension: str
    value: int

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown dimension {self.dimension!r}")
        if type(self.value) is not int or not 1 <= self.value <= 5:
            raise ValueError(f"rating must be an integer 1..5, got {self.value!r}")


def load_ratings(path) -> list[RatingRecord]:
    out, seen = [], set()
    for i, rec in iter_jsonl(path):
        try:
            r = RatingRecord(str(rec["doc_id"]), str(rec["annotator"]), rec["dimension"], rec["value"])
        except (KeyError, ValueError) as exc:
            raise SchemaError(str(exc), i) from None
        key = (r.doc_id, r.annotator, r.dimension)
        if key in seen:
            raise SchemaError(f"duplicate rating for {key}", i)
        seen.add(key)
        out.append(r)
    return out


@dataclass
class LikertAgreement:
    per_dimension: dict[str, AlphaResult | None]
    total: AlphaResult | None
    failures: dict[str, str] = field(default_factory=dict)


def _rating_units(ratings: Sequence[RatingRecord], key) -> list[list[int]]:
    annotators = sorted({r.annotator for r in ratings})
    cells: dict = defaultdict(dict)
    for r in ratings:
        cells[key(r)][r.annotator] = r.value
    return [[cells[u].get(a) for a in annotators] for u in sorted(cells)]


def likert_alpha(ratings: Iterable[RatingRecord]) -> LikertAgreement:
    """Alpha per rating dimension plus a pooled alpha over all (doc, dimension) units.

    A dimension without enough data is reported in ``failures`` instead of
    aborting the whole computation.
    """
    ratings = list(ratings)
    per_dim: dict[str, AlphaResult | None] = {}
    failures: dict[str, str] = {}
    for dim in DIMENSIONS:
        sub = [r for r in ratings if r.dimension == dim]
        try:
            if len({r.annotator for r in sub}) < 2:
                raise InsufficientData("fewer than two annotators")
            per_dim[dim] = krippendorff_interval(_rating_units(sub, lambda r: r.doc_id))
        except InsufficientData as exc:
            log.warning("dimension %s: %s", dim, exc)
            per_dim[dim] = None
            failures[dim] = str(exc)
    try:
        total = krippendorff_interval(_rating_units(ratings, lambda r: (r.doc_id, r.dimension)))
    except InsufficientData as exc:
        total = None
        failures["total"] = str(exc)
    return LikertAgreement(per_dim, total, failures)


@dataclass
class AgreementReport:
    """Span agreement for one dataset: count alpha and overlap F1s."""

    name: str
    alpha: AlphaResult
    overlap_f1_agnostic: float
    overlap_f1_aware: float

    @property
    def n_units(self) -> int:
        return self.alpha.n_units

    method = "interval"

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "method": self.method,
            "alpha": self.alpha.value,
            "alpha_degenerate": self.alpha.degenerate,
            "n_units": self.n_units,
            "overlap_f1_agnostic": self.overlap_f1_agnostic,
            "overlap_f1_aware": self.overlap_f1_aware,
        }


def span_agreement(name: str, sets_a: Sequence[AnnotationSet], sets_b: Sequence[AnnotationSet]) -> AgreementReport:
    alpha = count_agreement({"a": sets_a, "b": sets_b})
    return AgreementReport(
        name,
        alpha,
        span_overlap_f1(sets_a, sets_b, CLASS_AGNOSTIC),
        span_overlap_f1(sets_a, sets_b, CLASS_AWARE),
    )
