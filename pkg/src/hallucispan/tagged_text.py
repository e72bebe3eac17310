"""Inline ``<error>`` tag parsing/rendering and character re-alignment.

An LLM asked to label a summary returns a copy of it with ``<error ...>``
tags inserted. The copy is not always verbatim (typos get fixed, whitespace
changes), so spans found in it are mapped back onto the original summary via
a minimum-edit-distance character alignment.
"""

from __future__ import annotations

import difflib
import logging
import re
from dataclasses import dataclass

import numpy as np

from .anno_model import HallucinationClass, SpanAnnotation, parse_label
from .errors import LowConfidence, MalformedTag, UnknownLabel

log = logging.getLogger(__name__)

CLASS_AWARE = "class_aware"
CLASS_AGNOSTIC = "class_agnostic"
MODES = (CLASS_AWARE, CLASS_AGNOSTIC)

_TAG_RE = re.compile(r"</?error\b[^<>]*>")
_OPEN_PLAIN = re.compile(r"<error\s*>")
_OPEN_CLASS = re.compile(r'<error\s+class\s*=\s*"([^"]*)"\s*>')
_CLOSE = re.compile(r"</error\s*>")

DEFAULT_MIN_CONFIDENCE = 0.5
LONG_INPUT = 20_000
# Above this many DP cells the sentence-pairing pass is used even for shorter inputs.
MAX_CELLS = 40_000_000


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class TaggedSegment:
    text: str
    tagged: bool = False
    label: HallucinationClass | None = None


def segment_tagged(text: str, mode: str = CLASS_AWARE, notes: list[str] | None = None) -> list[TaggedSegment]:
    """Split tagged text into plain and tagged segments.

    Raises MalformedTag for unclosed, nested, stray-closing or unrecognised
    ``error`` tags. Other tags are ordinary text.
    """
    _check_mode(mode)
    segments: list[TaggedSegment] = []
    pos = 0
    open_label: HallucinationClass | None = None
    open_at: int | None = None
    for m in _TAG_RE.finditer(text):
        tag = m.group(0)
        if tag.startswith("</"):
            if not _CLOSE.fullmatch(tag):
                raise MalformedTag(f"unrecognised closing tag {tag!r} at {m.start()}", text)
            if open_at is None:
                raise MalformedTag(f"closing tag without opening tag at {m.start()}", text)
            segments.append(TaggedSegment(text[pos:m.start()], True, open_label))
            open_at, open_label = None, None
        else:
            if open_at is not None:
                raise MalformedTag(f"nested error tag at {m.start()} (opened at {open_at})", text)
            plain = _OPEN_PLAIN.fullmatch(tag)
            classed = _OPEN_CLASS.fullmatch(tag)
            if not plain and not classed:
                raise MalformedTag(f"unrecognised error tag {tag!r} at {m.start()}", text)
            if text[pos:m.start()]:
                segments.append(TaggedSegment(text[pos:m.start()]))
            open_at = m.start()
            open_label = None
            if mode == CLASS_AWARE:
                name = classed.group(1) if classed else None
                try:
                    if name is None:
                        raise UnknownLabel("missing class attribute")
                    open_label = parse_label(name)
                except UnknownLabel as exc:
                    open_label = HallucinationClass.UNSUPPORTED_OTHER
                    msg = f"tag at {m.start()}: {exc}; using unsupported_other"
                    log.warning(msg)
                    if notes is not None:
                        notes.append(msg)
        pos = m.end()
    if open_at is not None:
        raise MalformedTag(f"unclosed error tag opened at {open_at}", text)
    if text[pos:]:
        segments.append(TaggedSegment(text[pos:]))
    return segments


def parse_tagged(
    text: str, mode: str = CLASS_AWARE, notes: list[str] | None = None
) -> tuple[str, list[SpanAnnotation]]:
    """Strip error tags and return the plain text with the tagged spans.

    Tagged regions that are empty or whitespace-only are dropped (and noted),
    since they cannot form a valid span.
    """
    plain_parts: list[str] = []
    spans: list[SpanAnnotation] = []
    pos = 0
    for seg in segment_tagged(text, mode, notes):
        if seg.tagged:
            if seg.text.strip():
                spans.append(SpanAnnotation(pos, pos + len(seg.text), seg.label))
            else:
                msg = f"dropped empty tagged region at {pos}"
                log.warning(msg)
                if notes is not None:
                    notes.append(msg)
        plain_parts.append(seg.text)
        pos += len(seg.text)
    return "".join(plain_parts), spans


def render_tagged(plain: str, spans, with_class: bool = True) -> str:
    """Insert error tags around ``spans`` (assumed valid and non-overlapping)."""
    out = []
    pos = 0
    for s in sorted(spans, key=lambda s: (s.start, s.end)):
        out.append(plain[pos:s.start])
        if with_class and s.label is not None:
            out.append(f'<error class="{s.label.value}">')
        else:
            out.append("<error>")
        out.append(plain[s.start:s.end])
        out.append("</error>")
        pos = s.end
    out.append(plain[pos:])
    return "".join(out)


# --- alignment --------------------------------------------------------------


@dataclass(frozen=True)
class OffsetMap:
    """Monotone map from variant boundaries to original boundaries.

    Boundary ``i`` of the variant may correspond to a run of original
    positions (where the variant dropped characters); ``lo[i]`` and ``hi[i]``
    are the ends of that run. Span starts map through ``hi`` and span ends
    through ``lo`` so projected spans never absorb dropped text at their edges.
    """

    lo: tuple[int, ...]
    hi: tuple[int, ...]
    matched: int
    variant_len: int
    original_len: int

    @property
    def confidence(self) -> float:
        denom = max(self.variant_len, self.original_len)
        return 1.0 if denom == 0 else self.matched / denom

    def start(self, i: int) -> int:
        return self.hi[i]

    def end(self, i: int) -> int:
        return self.lo[i]

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(len(self.lo)) for j in range(self.lo[i], self.hi[i] + 1)]

    @classmethod
    def identity(cls, n: int) -> "OffsetMap":
        r = tuple(range(n + 1))
        return cls(r, r, n, n, n)


def _suffix_distances(a: str, b: str) -> np.ndarray:
    """S[i, j] = edit distance between a[i:] and b[j:] (unit costs)."""
    n, m = len(a), len(b)
    dtype = np.int32
    S = np.empty((n + 1, m + 1), dtype=dtype)
    S[n] = np.arange(m, -1, -1, dtype=dtype)
    bcodes = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    ks = np.arange(m + 1, dtype=dtype)
    for i in range(n - 1, -1, -1):
        below = S[i + 1]
        tmp = np.empty(m + 1, dtype=dtype)
        tmp[m] = n - i
        if m:
            cost = (bcodes != ord(a[i])).astype(dtype)
            tmp[:m] = np.minimum(below[1:] + cost, below[:m] + 1)
        # resolve the right-neighbour dependency: S[i, j] = min_k>=j tmp[k] + (k - j)
        S[i] = np.minimum.accumulate((tmp + ks)[::-1])[::-1] - ks
    return S


def _align_dp(a: str, b: str) -> tuple[list[int], list[int], int]:
    """Character alignment of variant ``a`` to original ``b``.

    Walks the optimal path forward from (0, 0), preferring at each step a
    match, then a substitution, then skipping an original character, then
    skipping a variant character. Preferring matches while walking forward
    places matches as early as possible.
    """
    n, m = len(a), len(b)
    S = _suffix_distances(a, b)
    lo = [0] * (n + 1)
    hi = [0] * (n + 1)
    i = j = matched = 0
    lo[0] = hi[0] = 0
    while i < n or j < m:
        cur = S[i, j]
        if i < n and j < m and S[i + 1, j + 1] + (a[i] != b[j]) == cur:
            matched += a[i] == b[j]
            i += 1
            j += 1
            lo[i] = hi[i] = j
        elif j < m and S[i, j + 1] + 1 == cur:
            j += 1
            hi[i] = j
        else:
            i += 1
            lo[i] = hi[i] = j
    return lo, hi, matched


def _sentence_tiles(text: str) -> list[str]:
    pieces = re.split(r"(?<=[.!?\n])(?=\s)|(?<=\n)", text)
    tiles: list[str] = []
    for p in pieces:
        if not p:
            continue
        if tiles and not p.strip():
            tiles[-1] += p
        else:
            tiles.append(p)
    return tiles


def _align_long(a: str, b: str) -> tuple[list[int], list[int], int]:
    va, vb = _sentence_tiles(a), _sentence_tiles(b)
    a_off = np.concatenate([[0], np.cumsum([len(t) for t in va])]).astype(int)
    b_off = np.concatenate([[0], np.cumsum([len(t) for t in vb])]).astype(int)
    n = len(a)
    lo = [None] * (n + 1)
    hi = [None] * (n + 1)
    matched = 0

    def put(i, l, h):
        lo[i] = l if lo[i] is None else min(lo[i], l)
        hi[i] = h if hi[i] is None else max(hi[i], h)

    sm = difflib.SequenceMatcher(None, va, vb, autojunk=False)
    for tag, i1, i2, j1, j2 in sm.get_opcodes():
        ca, cb = int(a_off[i1]), int(b_off[j1])
        sa, sb = a[ca:int(a_off[i2])], b[cb:int(b_off[j2])]
        if tag == "equal":
            for k in range(len(sa) + 1):
                put(ca + k, cb + k, cb + k)
            matched += len(sa)
        elif not sa:
            put(ca, cb, cb + len(sb))
        elif not sb:
            for k in range(len(sa) + 1):
                put(ca + k, cb, cb)
        else:
            llo, lhi, lm = _align_dp(sa, sb)
            for k in range(len(sa) + 1):
                put(ca + k, cb + llo[k], cb + lhi[k])
            matched += lm
    return lo, hi, matched


def align(
    variant: str,
    original: str,
    threshold: float | None = DEFAULT_MIN_CONFIDENCE,
    long_input: int = LONG_INPUT,
) -> OffsetMap:
    """Align ``variant`` (e.g. an LLM's rewrite) to ``original``.

    Raises LowConfidence when fewer than ``threshold`` of the characters
    (relative to the longer text) are matched; pass ``threshold=None`` to
    always get the map.
    """
    if not variant or not original:
        raise ValueError("align requires two non-empty strings")
    if variant == original:
        omap = OffsetMap.identity(len(variant))
    else:
        n, m = len(variant), len(original)
        if max(n, m) > long_input or (n + 1) * (m + 1) > MAX_CELLS:
            lo, hi, matched = _align_long(variant, original)
        else:
            lo, hi, matched = _align_dp(variant, original)
        omap = OffsetMap(tuple(lo), tuple(hi), matched, n, m)
    if threshold is not None and omap.confidence < threshold:
        raise LowConfidence(omap.confidence, threshold)
    return omap


@dataclass(frozen=True)
class DroppedSpan:
    span: SpanAnnotation
    reason: str


def project_spans(spans, omap: OffsetMap) -> tuple[list[SpanAnnotation], list[DroppedSpan]]:
    """Carry variant spans over to the original text."""
    kept: list[SpanAnnotation] = []
    dropped: list[DroppedSpan] = []
    for s in spans:
        start, end = omap.start(s.start), omap.end(s.end)
        if end <= start:
            log.warning("span (%d, %d) projects to zero width; dropped", s.start, s.end)
            dropped.append(DroppedSpan(s, "zero-width projection"))
            continue
        kept.append(SpanAnnotation(start, end, s.label))
    return kept, dropped
