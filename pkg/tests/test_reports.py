import json

import pytest

import report_inputs as ri
from conftest import GOLDEN
from hallucispan.anno_model import AnnotationSet, SpanAnnotation, count_annotations
from hallucispan.corpus_prep import StageStats
from hallucispan.plots import agreement_plot, per_class_recall_plot, stage_flow_plot
from hallucispan.reports import (
    Table,
    agreement_table,
    corpus_stats_table,
    count_table,
    detection_table,
    likert_table,
    metrics_table,
    recall_table,
    stage_table,
)

# Column and row layouts of the published result tables, written out literally.
REF_METRICS = ["Model (training data)", "R-1", "R-2", "R-3", "R-4", "R-L", "BERT", "DeBERT", "SARI", "Words"]
REF_RECALL = ["Model", "cond.", "proc.", "medic.", "time", "location", "number", "name", "words", "other",
              "contrad.", "incorr."]
REF_RECALL_GROUPS = ["Hallucinations-MIMIC-DI", "Hallucinations-Generated-DI"]
REF_DETECTION_SPANS = ["H.-MIMIC-DI", "H.-Generated-DI"]
REF_DETECTION_SUB = ["Model", "Prec.", "Rec.", "F1", "Prec.", "Rec.", "F1"]
REF_DETECTION_GROUPS = ["Class-agnostic recognition", "Class-aware recognition (11 classes)"]
REF_DETECTION_ROWS = ["MedCat", "MedCat + Em.", "GPT-4 (class-ag.)", "GPT-4 (class-aw.)", "GPT-4 (no-cot)"]
REF_AGREEMENT = ["Annotation Task", "Agreement (Kripp.-α)", "Class-agn. overlap (F1)", "Class-aw. overlap (F1)"]
REF_AGREEMENT_ROWS = ["MIMIC", "Generated"]
REF_LIKERT = ["", "Rel.", "Con.", "Sim.", "Flu.", "Coh.", "Total"]
REF_LIKERT_ROWS = ["Agree. (Kr.-α)"]


def tables():
    return {
        "summary_metrics": metrics_table(ri.metric_rows()),
        "per_class_recall": recall_table(ri.recall_groups()),
        "detection_scores": detection_table(ri.DATASETS, ri.detection_groups()),
        "span_agreement": agreement_table(ri.agreement_reports()),
        "rating_agreement": likert_table(ri.likert_result()),
    }


@pytest.mark.parametrize("name", sorted(tables()))
def test_golden_tsv_and_text(name):
    t = tables()[name]
    assert t.name == name
    assert t.to_tsv() == (GOLDEN / f"{name}.tsv").read_text(encoding="utf-8")
    assert t.to_text() == (GOLDEN / f"{name}.txt").read_text(encoding="utf-8")


def test_header_parity():
    t = tables()
    assert t["summary_metrics"].display_columns() == REF_METRICS
    assert t["per_class_recall"].display_columns() == REF_RECALL
    assert t["span_agreement"].display_columns() == REF_AGREEMENT
    assert t["rating_agreement"].display_columns() == REF_LIKERT
    det = t["detection_scores"]
    assert det.display_columns() == REF_DETECTION_SUB
    assert [s for s, _ in det.spans] == REF_DETECTION_SPANS and all(n == 3 for _, n in det.spans)


def test_row_structure_parity():
    t = tables()
    det = t["detection_scores"]
    assert list(dict.fromkeys(r.group for r in det.rows)) == REF_DETECTION_GROUPS
    assert [r.label for r in det.rows] == REF_DETECTION_ROWS
    rec = t["per_class_recall"]
    assert list(dict.fromkeys(r.group for r in rec.rows)) == REF_RECALL_GROUPS
    assert [r.label for r in t["span_agreement"].rows] == REF_AGREEMENT_ROWS
    assert [r.label for r in t["rating_agreement"].rows] == REF_LIKERT_ROWS
    for tab in t.values():
        assert all(len(r.values) == len(tab.columns) - 1 for r in tab.rows)


def test_json_matches_tsv_columns():
    for t in tables().values():
        rec = json.loads(t.to_json())
        assert rec["columns"] == t.to_tsv().splitlines()[0].split("\t")
        assert len(rec["rows"]) == len(t.rows)


def test_missing_values_render_as_dash():
    t = tables()["summary_metrics"]
    assert t.to_tsv().splitlines()[2].split("\t")[6:8] == ["-", "-"]
    assert json.loads(t.to_json())["rows"][1]["BERT"] is None


def test_detection_table_rejects_wrong_width():
    with pytest.raises(ValueError):
        detection_table(ri.DATASETS, [("g", [("m", [None])])])
    t = detection_table(ri.DATASETS, [("g", [("m", [None, None])])])
    assert t.to_tsv().splitlines()[1].split("\t")[2:] == ["-"] * 6


def test_count_table():
    sets = [AnnotationSet("d1", "a", (SpanAnnotation(0, 2, "unsupported_condition"),)), AnnotationSet("d2", "a")]
    t = count_table([("H-MIMIC", count_annotations(sets))])
    assert len(t.columns) == 13 and t.columns[-1] == "Total"
    assert t.rows[0].values[0] == 1 and t.rows[0].values[-1] == 1


def test_stage_and_corpus_stats_tables():
    s = StageStats([0, 1])
    s[0].entered, s[0].rejected, s[1].entered, s[1].rejected, s[1].transformed = 10, 2, 8, 1, 3
    t = stage_table(s)
    assert [r.label for r in t.rows] == ["split", "stage 1"]
    assert t.rows[1].values == [8, 1, 3, 7]
    cs = corpus_stats_table({"Summary": [{"words": 2, "sentences": 1, "characters": 10, "deid_count": 0},
                                         {"words": 4, "sentences": 1, "characters": 20, "deid_count": 2}]})
    assert cs.rows[1].label == "# Words" and cs.rows[1].values == ["3.0 (1.4)"]


def test_plain_table_text():
    t = Table("x", ["A", "B"], fmt=".1f")
    t.rows = []
    assert t.to_text().splitlines()[1] == "A  B"


def test_plots_write_png(tmp_path):
    recall = {r: rep.per_class_recall for r, rep in ri.recall_groups()[0][1]}
    paths = [
        per_class_recall_plot(recall, tmp_path / "a" / "recall.png"),
        stage_flow_plot([10, 8, 7, 4], ["input", "split", "stage 1", "stage 2"], tmp_path / "flow.png"),
        agreement_plot({"MIMIC": {"alpha": 0.6, "f1": None}}, tmp_path / "agree.png"),
    ]
    for p in paths:
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
