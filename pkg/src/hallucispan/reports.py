"""Report tables rendered as aligned text, TSV and JSON records.

Each builder returns a :class:`Table` whose column names follow the
published result tables: annotation counts per class, summary metrics,
per-class recall, detection scores, span agreement and rating agreement.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .agreement import DIMENSIONS, AgreementReport, LikertAgreement
from .anno_model import ALL_CLASSES, SHORT_NAMES, CountTable, HallucinationClass
from .span_eval import EvalReport
from .text_metrics import MetricReport

MISSING = "-"

COUNT_COLUMNS = ["Dataset / Model"] + [SHORT_NAMES[c] for c in ALL_CLASSES] + ["Total"]
METRIC_COLUMNS = ["Model (training data)", "R-1", "R-2", "R-3", "R-4", "R-L", "BERT", "DeBERT", "SARI", "Words"]
RECALL_SHORT = ["cond.", "proc.", "medic.", "time", "location", "number", "name", "words", "other",
                "contrad.", "incorr."]
RECALL_COLUMNS = ["Model"] + RECALL_SHORT
SCORE_FIELDS = ["Prec.", "Rec.", "F1"]
AGREEMENT_COLUMNS = ["Annotation Task", "Agreement (Kripp.-α)", "Class-agn. overlap (F1)",
                     "Class-aw. overlap (F1)"]
LIKERT_SHORT = {"relevance": "Rel.", "consistency": "Con.", "simplification": "Sim.",
                "fluency": "Flu.", "coherence": "Coh."}
LIKERT_COLUMNS = [""] + [LIKERT_SHORT[d] for d in DIMENSIONS] + ["Total"]
LIKERT_ROW = "Agree. (Kr.-α)"
STATS_COLUMNS = ["Quantity", "Value (SD)"]
STATS_ROWS = [("sentences", "# Sentences"), ("words", "# Words"), ("characters", "# Characters"),
              ("deid_count", "# Deidentified")]


@dataclass
class Row:
    label: str
    values: list
    group: str | None = None


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[Row] = field(default_factory=list)
    fmt: str = ".2f"
    # optional spanning headers over the value columns: (title, width)
    spans: list[tuple[str, int]] | None = None

    def cell(self, v) -> str:
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return MISSING
        if isinstance(v, bool) or isinstance(v, int) or isinstance(v, str):
            return str(v)
        return format(v, self.fmt)

    @property
    def has_groups(self) -> bool:
        return any(r.group is not None for r in self.rows)

    def display_columns(self) -> list[str]:
        """Column titles for the text view; spanned columns drop the span title prefix."""
        cols = list(self.columns)
        if self.spans:
            col = 1
            for title, n in self.spans:
                for k in range(col, col + n):
                    if cols[k].startswith(title + " "):
                        cols[k] = cols[k][len(title) + 1:]
                col += n
        return cols

    def to_text(self) -> str:
        header = self.display_columns()
        body = [[r.label] + [self.cell(v) for v in r.values] for r in self.rows]
        widths = [max([len(header[i])] + [len(b[i]) for b in body]) for i in range(len(header))]

        def line(cells):
            out = [cells[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
            return "  ".join(out).rstrip()

        total = sum(widths) + 2 * (len(widths) - 1)
        out = ["=" * total]
        if self.spans:
            parts, col = [" " * widths[0]], 1
            for title, n in self.spans:
                w = sum(widths[col:col + n]) + 2 * (n - 1)
                parts.append(title.center(w))
                col += n
            out.append("  ".join(parts).rstrip())
        out += [line(header), "-" * total]
        group = None
        for r, cells in zip(self.rows, body):
            if r.group != group and r.group is not None:
                if group is not None:
                    out.append("-" * total)
                out += [r.group, "-" * total]
            group = r.group
            out.append(line(cells))
        out.append("=" * total)
        return "\n".join(out) + "\n"

    def tsv_columns(self) -> list[str]:
        return (["group"] if self.has_groups else []) + list(self.columns)

    def to_tsv(self) -> str:
        lines = ["\t".join(self.tsv_columns())]
        for r in self.rows:
            cells = [r.label] + [self.cell(v) for v in r.values]
            if self.has_groups:
                cells = [r.group or ""] + cells
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"

    def to_record(self) -> dict:
        rows = []
        for r in self.rows:
            rec = {"group": r.group} if self.has_groups else {}
            rec[self.columns[0] or "row"] = r.label
            for c, v in zip(self.columns[1:], r.values):
                rec[c] = None if isinstance(v, float) and math.isnan(v) else v
            rows.append(rec)
        return {"table": self.name, "columns": self.tsv_columns(), "rows": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2, ensure_ascii=False) + "\n"


# --- builders -----------------------------------------------------------------------------


def count_table(counts: Sequence[tuple[str, CountTable]], name: str = "annotation_counts") -> Table:
    t = Table(name, COUNT_COLUMNS, fmt="d")
    for label, ct in counts:
        t.rows.append(Row(label, [ct.per_class[c] for c in ALL_CLASSES] + [ct.total]))
    return t


def metrics_table(reports: Sequence[tuple[str, MetricReport]], name: str = "summary_metrics") -> Table:
    t = Table(name, METRIC_COLUMNS, fmt=".2f")
    for label, rep in reports:
        row = rep.table_row()
        t.rows.append(Row(label, [row[c] for c in METRIC_COLUMNS[1:]]))
    return t


def recall_table(groups: Sequence[tuple[str, Sequence[tuple[str, EvalReport]]]],
                 name: str = "per_class_recall") -> Table:
    """Per-class recall in percent; classes without gold spans report 0."""
    t = Table(name, RECALL_COLUMNS, fmt=".1f")
    for group, reports in groups:
        for label, rep in reports:
            vals = [100 * rep.per_class_recall[c] for c in ALL_CLASSES]
            t.rows.append(Row(label, vals, group))
    return t


def detection_table(datasets: Sequence[str],
                    groups: Sequence[tuple[str, Sequence[tuple[str, Sequence[EvalReport | None]]]]],
                    name: str = "detection_scores") -> Table:
    """Precision, recall and F1 in percent, one column triple per dataset.

    ``groups`` holds (section title, [(model, [report per dataset])]).
    """
    cols = ["Model"] + [f"{ds} {f}" for ds in datasets for f in SCORE_FIELDS]
    t = Table(name, cols, fmt=".1f", spans=[(ds, 3) for ds in datasets])
    for group, models in groups:
        for label, reps in models:
            if len(reps) != len(datasets):
                raise ValueError(f"{label}: expected {len(datasets)} reports, got {len(reps)}")
            vals = []
            for rep in reps:
                vals += [None] * 3 if rep is None else [100 * rep.precision, 100 * rep.recall, 100 * rep.f1]
            t.rows.append(Row(label, vals, group))
    return t


def agreement_table(reports: Sequence[AgreementReport], name: str = "span_agreement") -> Table:
    t = Table(name, AGREEMENT_COLUMNS, fmt=".3f")
    for r in reports:
        t.rows.append(Row(r.name, [r.alpha.value, r.overlap_f1_agnostic, r.overlap_f1_aware]))
    return t


def likert_table(result: LikertAgreement, name: str = "rating_agreement") -> Table:
    t = Table(name, LIKERT_COLUMNS, fmt=".3f")
    vals = [None if result.per_dimension.get(d) is None else result.per_dimension[d].value for d in DIMENSIONS]
    vals.append(None if result.total is None else result.total.value)
    t.rows.append(Row(LIKERT_ROW, vals))
    return t


def _mean_sd(xs: Sequence[float]) -> str:
    if not xs:
        return MISSING
    mean = statistics.fmean(xs)
    sd = statistics.stdev(xs) if len(xs) > 1 else 0.0
    return f"{mean:.1f} ({sd:.1f})"


def corpus_stats_table(groups: Mapping[str, Sequence[Mapping[str, int]]], name: str = "corpus_stats") -> Table:
    """Mean (SD) of per-text statistics, one block per text kind."""
    t = Table(name, STATS_COLUMNS)
    for group, stats in groups.items():
        for key, label in STATS_ROWS:
            t.rows.append(Row(label, [_mean_sd([s[key] for s in stats])], group))
    return t


def stage_table(stats, labels: Mapping[int, str] | None = None, name: str = "stage_flow") -> Table:
    labels = labels or {}
    t = Table(name, ["Stage", "Entered", "Rejected", "Transformed", "Kept"], fmt="d")
    for s, c in stats.stages.items():
        label = labels.get(s, "split" if s == 0 else f"stage {s}")
        t.rows.append(Row(label, [c.entered, c.rejected, c.transformed, c.entered - c.rejected]))
    return t


def class_header(c: HallucinationClass) -> str:
    return RECALL_SHORT[ALL_CLASSES.index(c)]
