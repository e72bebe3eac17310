"""ROUGE-N, ROUGE-L, SARI and simple corpus statistics.

Tokenization for all overlap metrics: lowercase, split on whitespace, strip
leading and trailing punctuation, drop tokens that become empty.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .anno_model import DEID_TOKEN, iter_jsonl
from .errors import SchemaError

_PUNCT = string.punctuation + "“”‘’–—…"


def tokenize(text: str) -> list[str]:
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, hits: float, n_cand: int, n_ref: int) -> "PRF":
        p = hits / n_cand if n_cand else 0.0
        r = hits / n_ref if n_ref else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 1) -> PRF:
    if n < 1:
        raise ValueError("n must be >= 1")
    c, r = ngrams(tokenize(candidate), n), ngrams(tokenize(reference), n)
    hits = sum((c & r).values())
    return PRF.from_counts(hits, sum(c.values()), sum(r.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> PRF:
    c, r = tokenize(candidate), tokenize(reference)
    return PRF.from_counts(lcs_length(c, r), len(c), len(r))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _sari_ngram(src: set, cand: set, ref_sets: Sequence[set]) -> tuple[float, float, float]:
    """Keep F1, deletion precision and addition F1 for one n-gram order.

    Source and candidate n-grams count once each. For keep and delete, a
    reference n-gram is weighted by the fraction of references containing it;
    for addition, presence in any reference counts. 0/0 is taken as 0.
    """
    weight: dict[tuple, float] = {}
    for rs in ref_sets:
        for g in rs:
            weight[g] = weight.get(g, 0.0) + 1.0 / len(ref_sets)
    kept = src & cand
    keep_tp = sum(weight.get(g, 0.0) for g in kept)
    keep_p = _ratio(keep_tp, len(kept))
    keep_r = _ratio(keep_tp, sum(weight.get(g, 0.0) for g in src))

    deleted = src - cand
    del_p = _ratio(sum(1.0 - weight.get(g, 0.0) for g in deleted), len(deleted))

    added = cand - src
    any_ref = set(weight)
    add_tp = len(added & any_ref)
    add_p = _ratio(add_tp, len(added))
    add_r = _ratio(add_tp, len(any_ref - src))
    return _f1(keep_p, keep_r), del_p, _f1(add_p, add_r)


def sari(source: str, candidate: str, references: Sequence[str], max_n: int = 4) -> float:
    """SARI on a 0-100 scale, averaged over n-gram orders 1..max_n."""
    if isinstance(references, str) or not references:
        raise ValueError("references must be a non-empty list of strings")
    s, c = tokenize(source), tokenize(candidate)
    refs = [tokenize(r) for r in references]
    total = 0.0
    for n in range(1, max_n + 1):
        k, d, a = _sari_ngram(set(ngrams(s, n)), set(ngrams(c, n)), [set(ngrams(r, n)) for r in refs])
        total += k + d + a
    return 100.0 * total / (3 * max_n)


# Sentence boundaries: terminal punctuation followed by whitespace or end of
# text, or a line break. Common abbreviations do not end a sentence.
_ABBREV = {"dr", "mr", "mrs", "ms", "st", "vs", "e.g", "i.e", "approx", "no", "pt"}
_BOUNDARY = re.compile(r"[.!?]+(?=\s|$)|\n")


def split_sentences(text: str) -> list[str]:
    out = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        if m.group(0) == ".":
            prev = text[start:m.start()].split()
            if prev and prev[-1].lower().rstrip(".") in _ABBREV:
                continue
        piece = text[start:m.end()]
        if re.search(r"\w", piece):
            out.append(piece.strip())
        start = m.end()
    tail = text[start:]
    if re.search(r"\w", tail):
        out.append(tail.strip())
    return out


def corpus_stats(text: str) -> dict[str, int]:
    return {
        "words": len(text.split()),
        "sentences": len(split_sentences(text)),
        "characters": len(text),
        "deid_count": text.count(DEID_TOKEN),
    }


@dataclass
class MetricReport:
    rouge_n: dict[int, PRF]
    rouge_l: PRF
    sari: float
    words: float
    external_scores: dict[str, float] = field(default_factory=dict)

    def table_row(self) -> dict[str, float | None]:
        """Values on the percent scale used by the summary-metric table."""
        row: dict[str, float | None] = {f"R-{n}": 100 * self.rouge_n[n].f1 for n in range(1, 5)}
        row["R-L"] = 100 * self.rouge_l.f1
        row["BERT"] = self.external_scores.get("BERT")
        row["DeBERT"] = self.external_scores.get("DeBERT")
        row["SARI"] = self.sari
        row["Words"] = float(self.words)
        return row

    def to_record(self) -> dict:
        return {
            "rouge_n": {str(n): vars(v) for n, v in self.rouge_n.items()},
            "rouge_l": vars(self.rouge_l),
            "sari": self.sari,
            "words": self.words,
            "external_scores": dict(self.external_scores),
        }


def score_pair(source: str, candidate: str, reference: str, external: dict[str, float] | None = None) -> MetricReport:
    return MetricReport(
        {n: rouge_n(candidate, reference, n) for n in range(1, 5)},
        rouge_l(candidate, reference),
        sari(source, candidate, [reference]),
        len(candidate.split()),
        dict(external or {}),
    )


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Macro average of per-document reports (the corpus row)."""
    if not reports:
        raise ValueError("no reports to average")
    k = len(reports)

    def avg(prfs):
        prfs = list(prfs)
        return PRF(*(sum(getattr(p, f) for p in prfs) / k for f in ("precision", "recall", "f1")))

    ext_names = sorted(set().union(*(r.external_scores for r in reports)))
    ext = {}
    for name in ext_names:
        vals = [r.external_scores[name] for r in reports if name in r.external_scores]
        ext[name] = sum(vals) / len(vals)
    return MetricReport(
        {n: avg(r.rouge_n[n] for r in reports) for n in range(1, 5)},
        avg(r.rouge_l for r in reports),
        sum(r.sari for r in reports) / k,
        sum(r.words for r in reports) / k,
        ext,
    )


def load_external_scores(path) -> dict[str, dict[str, float]]:
    """Read ``{doc_id, name, value}`` records into doc_id -> {name: value}."""
    out: dict[str, dict[str, float]] = {}
    for i, rec in iter_jsonl(path):
        try:
            out.setdefault(str(rec["doc_id"]), {})[str(rec["name"])] = float(rec["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(str(exc), i) from None
    return out
