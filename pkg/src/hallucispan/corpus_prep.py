"""Discharge-note preprocessing: section split, ordered cleaning rules, filters.

Stage 0 splits each note into a context and the discharge-instruction
summary. Every later stage applies the configured rules with that stage
number, in file order. A rule either transforms the text or rejects the
record; a rejection ends processing for that record.
"""

from __future__ import annotations

import logging
import re
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .errors import ConfigError, SchemaError, SectionMissing

log = logging.getLogger(__name__)

KINDS = (
    "prefix_strip",
    "heading_strip",
    "pattern_replace",
    "suffix_prune",
    "template_reject",
    "length_filter",
    "section_require",
)
TRANSFORMING = {"prefix_strip", "heading_strip", "pattern_replace", "suffix_prune"}
TARGETS = ("summary", "context")
SHORT, FULL = "short", "full"
SPLIT_STAGE = 0

ANNO_MAX_CONTEXT = 4000
ANNO_MIN_SUMMARY = 600

# --- section split -------------------------------------------------------------------

_DI_HEADER = re.compile(r"^[ \t]*discharge instructions[ \t]*(?::|$)[ \t]*", re.I | re.M)
_BHC_HEADER = re.compile(r"^[ \t]*brief hospital course[ \t]*(?::|$)[ \t]*", re.I | re.M)
# Top-level note sections that end the brief hospital course or the
# discharge instructions. Sub-headings inside a section do not end it.
END_HEADERS = (
    "medications on admission",
    "discharge medications",
    "discharge disposition",
    "facility",
    "discharge diagnosis",
    "discharge condition",
    "discharge instructions",
    "followup instructions",
    "follow-up instructions",
)
_END = re.compile(
    r"^[ \t]*(?:" + "|".join(re.escape(h) for h in END_HEADERS) + r")[ \t]*(?::|$)", re.I | re.M
)


def _section_body(note: str, m: re.Match) -> str:
    rest = note[m.end():]
    nxt = _END.search(rest)
    return (rest[:nxt.start()] if nxt else rest).strip()


def split_sections(note: str, context_mode: str = SHORT) -> tuple[str, str]:
    """Return (context, discharge instructions) for one note.

    Headers match case-insensitively at line start with an optional colon.
    In ``short`` mode the context is the brief hospital course section; in
    ``full`` mode it is everything before the discharge-instruction header.
    """
    if context_mode not in (SHORT, FULL):
        raise ValueError(f"context_mode must be {SHORT!r} or {FULL!r}")
    di_m = _DI_HEADER.search(note)
    if di_m is None:
        raise SectionMissing("no Discharge Instructions header")
    di = _section_body(note, di_m)
    if context_mode == FULL:
        return note[:di_m.start()].strip(), di
    bhc_m = _BHC_HEADER.search(note)
    if bhc_m is None:
        log.warning("no Brief Hospital Course header; context left empty")
        return "", di
    return _section_body(note, bhc_m), di


# --- rules ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class Rule:
    id: str
    stage: int
    kind: str
    pattern: str = ""
    replacement: str | None = None
    param: int | None = None
    literal: bool = False
    target: str = "summary"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"rule {self.id}: unknown kind {self.kind!r}")
        if type(self.stage) is not int or self.stage < 1:
            raise ConfigError(f"rule {self.id}: stage must be an integer >= 1")
        if self.target not in TARGETS:
            raise ConfigError(f"rule {self.id}: target must be one of {TARGETS}")
        if self.kind == "length_filter":
            if type(self.param) is not int or self.param < 0:
                raise ConfigError(f"rule {self.id}: length_filter needs an integer param >= 0")
        else:
            if not self.pattern:
                raise ConfigError(f"rule {self.id}: pattern is required")
            try:
                self.regex
            except re.error as exc:
                raise ConfigError(f"rule {self.id}: pattern does not compile: {exc}") from None
        if self.kind == "pattern_replace" and self.replacement is None:
            raise ConfigError(f"rule {self.id}: pattern_replace needs a replacement")

    @property
    def regex(self) -> re.Pattern:
        src = re.escape(self.pattern) if self.literal else self.pattern
        return re.compile(src, re.I | re.M)

    @property
    def transforming(self) -> bool:
        return self.kind in TRANSFORMING


def _transform(rule: Rule, text: str) -> str:
    rx = rule.regex
    if rule.kind == "prefix_strip":
        # repeated prefixes are all removed so the rule is idempotent
        out = text
        while True:
            m = rx.match(out.lstrip())
            if not m or not m.group(0):
                return out
            out = out.lstrip()[m.end():].lstrip()
    if rule.kind == "heading_strip":
        lines = text.splitlines(keepends=True)
        kept = [ln for ln in lines if not rx.fullmatch(ln.strip())]
        return "".join(kept).strip() if len(kept) != len(lines) else text
    if rule.kind == "pattern_replace":
        return rx.sub(rule.replacement, text)
    if rule.kind == "suffix_prune":
        m = rx.search(text)
        return text[:m.start()].rstrip() if m else text
    raise AssertionError(rule.kind)


def _rejects(rule: Rule, text: str) -> bool:
    if rule.kind == "template_reject":
        return rule.regex.search(text) is not None
    if rule.kind == "length_filter":
        return len(text) < rule.param
    if rule.kind == "section_require":
        return rule.regex.search(text) is None
    raise AssertionError(rule.kind)


@dataclass
class Outcome:
    kept: bool
    summary: str
    context: str = ""
    rejected_stage: int | None = None
    rejected_rule: str | None = None
    edits: list[str] = field(default_factory=list)
    transformed_stages: set[int] = field(default_factory=set)


def _ordered(rules: Iterable[Rule]) -> list[Rule]:
    return sorted(rules, key=lambda r: r.stage)  # stable: file order within a stage


def apply_rules(summary: str, rules: Sequence[Rule], context: str = "") -> Outcome:
    """Apply rules in stage order; stop at the first rejection.

    Length filters are sticky: after any later stage that changed the
    summary, every length filter seen so far is checked again.
    """
    out = Outcome(True, summary, context)
    rules = _ordered(rules)
    active_lengths: list[Rule] = []
    stages = sorted({r.stage for r in rules})
    for stage in stages:
        changed = False
        for rule in (r for r in rules if r.stage == stage):
            text = out.summary if rule.target == "summary" else out.context
            if rule.transforming:
                new = _transform(rule, text)
                if new != text:
                    out.edits.append(rule.id)
                    if rule.target == "summary":
                        out.summary, changed = new, True
                    else:
                        out.context = new
                    out.transformed_stages.add(stage)
                continue
            if rule.kind == "length_filter" and rule.target == "summary":
                active_lengths.append(rule)
            if _rejects(rule, text):
                out.kept, out.rejected_stage, out.rejected_rule = False, stage, rule.id
                return out
        if changed:
            for rule in active_lengths:
                if _rejects(rule, out.summary):
                    out.kept, out.rejected_stage, out.rejected_rule = False, stage, rule.id
                    return out
    return out


def idempotence_failures(text: str, rules: Sequence[Rule], context: str = "") -> list[str]:
    """Ids of transforming rules that change ``text`` again when re-applied."""
    bad = []
    for rule in _ordered(rules):
        if rule.transforming and rule.target == "summary" and _transform(rule, text) != text:
            bad.append(rule.id)
    return bad


# --- statistics -----------------------------------------------------------------------------


@dataclass
class StageCount:
    entered: int = 0
    rejected: int = 0
    transformed: int = 0


class StageStats:
    """Per-stage counts; stage 0 is the section split."""

    def __init__(self, stages: Iterable[int] = ()):
        self.stages: OrderedDict[int, StageCount] = OrderedDict((s, StageCount()) for s in sorted(stages))

    def __getitem__(self, stage: int) -> StageCount:
        return self.stages[stage]

    def merge(self, other: "StageStats") -> "StageStats":
        out = StageStats(set(self.stages) | set(other.stages))
        for src in (self, other):
            for s, c in src.stages.items():
                t = out.stages[s]
                t.entered += c.entered
                t.rejected += c.rejected
                t.transformed += c.transformed
        return out

    def kept_after(self, stage: int) -> int:
        c = self.stages[stage]
        return c.entered - c.rejected

    def flow(self) -> list[int]:
        """Input size followed by the survivors of every stage."""
        keys = list(self.stages)
        return [self.stages[keys[0]].entered] + [self.kept_after(s) for s in keys] if keys else []

    def check(self) -> None:
        keys = list(self.stages)
        for a, b in zip(keys, keys[1:]):
            if self.stages[b].entered != self.kept_after(a):
                raise AssertionError(f"stage {b} entered {self.stages[b].entered}, expected {self.kept_after(a)}")
        for s, c in self.stages.items():
            if min(c.entered, c.rejected, c.transformed) < 0 or c.rejected > c.entered:
                raise AssertionError(f"stage {s} has inconsistent counts {c}")

    def to_record(self) -> dict:
        return {str(s): vars(c).copy() for s, c in self.stages.items()}


# --- pipeline ---------------------------------------------------------------------------------


@dataclass
class PipelineResult:
    dataset: list[dict]
    stats: StageStats
    rejections: list[dict]
    non_idempotent: dict[str, int]


def _process(args) -> tuple[str, Outcome | None, str | None]:
    rec_id, text, rules, context_mode = args
    try:
        context, di = split_sections(text, context_mode)
    except SectionMissing as exc:
        return rec_id, None, str(exc)
    return rec_id, apply_rules(di, rules, context), None


def run_pipeline(corpus: Iterable[dict], rules: Sequence[Rule], context_mode: str = SHORT,
                 workers: int = 1) -> PipelineResult:
    """Run the split and every rule stage over ``{note_id, text}`` records.

    Output order equals input order regardless of ``workers``.
    """
    rules = _ordered(rules)
    stage_ids = [SPLIT_STAGE] + sorted({r.stage for r in rules})
    jobs = []
    for i, rec in enumerate(corpus):
        try:
            jobs.append((str(rec["note_id"]), rec["text"], rules, context_mode))
        except (KeyError, TypeError):
            raise SchemaError("corpus records need note_id and text", i) from None
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_process, jobs, chunksize=64))
    else:
        results = [_process(j) for j in jobs]

    stats = StageStats(stage_ids)
    dataset, rejections = [], []
    non_idem: dict[str, int] = {}
    for rec_id, out, split_err in results:
        stats[SPLIT_STAGE].entered += 1
        if out is None:
            stats[SPLIT_STAGE].rejected += 1
            rejections.append({"id": rec_id, "stage": SPLIT_STAGE, "rule": "split", "reason": split_err})
            continue
        for s in stage_ids[1:]:
            stats[s].entered += 1
            if s in out.transformed_stages:
                stats[s].transformed += 1
            if out.rejected_stage == s:
                stats[s].rejected += 1
                rejections.append({"id": rec_id, "stage": s, "rule": out.rejected_rule})
                break
        if out.kept:
            for rid in idempotence_failures(out.summary, rules):
                non_idem[rid] = non_idem.get(rid, 0) + 1
            dataset.append({"id": rec_id, "context": out.context, "summary": out.summary})
    for rid, n in non_idem.items():
        log.warning("rule %s is not idempotent on %d kept summaries", rid, n)
    stats.check()
    return PipelineResult(dataset, stats, rejections, non_idem)


def filter_anno_subset(dataset: Iterable[dict], max_context: int = ANNO_MAX_CONTEXT,
                       min_summary: int = ANNO_MIN_SUMMARY) -> list[dict]:
    """Keep records with len(context) <= max_context and len(summary) >= min_summary."""
    return [r for r in dataset if len(r["context"]) <= max_context and len(r["summary"]) >= min_summary]


# --- config -------------------------------------------------------------------------------------


def rules_from_config(cfg: dict) -> list[Rule]:
    if not isinstance(cfg, dict) or not isinstance(cfg.get("rules"), list):
        raise ConfigError("rule config needs a top-level 'rules' list")
    out, seen = [], set()
    for i, r in enumerate(cfg["rules"]):
        if not isinstance(r, dict):
            raise ConfigError(f"rule {i} is not a mapping")
        unknown = set(r) - {f for f in Rule.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"rule {r.get('id', i)}: unknown fields {sorted(unknown)}")
        try:
            rule = Rule(**r)
        except TypeError as exc:
            raise ConfigError(f"rule {i}: {exc}") from None
        if rule.id in seen:
            raise ConfigError(f"duplicate rule id {rule.id!r}")
        seen.add(rule.id)
        out.append(rule)
    return out


def load_rules(path: str | Path | None = None) -> list[Rule]:
    """Load rules from a YAML file; ``None`` loads the bundled starter set."""
    try:
        if path is None:
            text = resources.files("hallucispan").joinpath("data", "default_rules.yaml").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"rule config is not valid YAML: {exc}") from None
    return rules_from_config(cfg)

