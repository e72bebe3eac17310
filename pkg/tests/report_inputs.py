"""Small hand-built inputs for the report golden files.

Every number here is chosen so the rendered percentages can be checked by
hand; the golden TSV files were written from these comments, not from the
renderer.
"""

from hallucispan.agreement import AgreementReport, AlphaResult, LikertAgreement
from hallucispan.anno_model import ALL_CLASSES
from hallucispan.span_eval import EvalCounts, EvalReport
from hallucispan.tagged_text import CLASS_AGNOSTIC, CLASS_AWARE
from hallucispan.text_metrics import PRF, MetricReport

# P, R, F1 in percent:
A = EvalCounts(correct=1, missed=1, spurious=3)           # 25.0 50.0 33.3
B = EvalCounts(correct=2, partial=2)                      # 75.0 75.0 75.0
C = EvalCounts(partial=1, missed=1, spurious=1)           # 25.0 25.0 25.0
D = EvalCounts()                                          # 0.0 0.0 0.0
E = EvalCounts(correct=1, incorrect=1)                    # 50.0 50.0 50.0

DATASETS = ["H.-MIMIC-DI", "H.-Generated-DI"]


def _rep(counts, mode=CLASS_AGNOSTIC, recall=None):
    rec = {c: 0.0 for c in ALL_CLASSES}
    rec.update(recall or {})
    return EvalReport(mode, counts, per_class_recall=rec)


def detection_groups():
    return [
        ("Class-agnostic recognition", [
            ("MedCat", [_rep(A), _rep(C)]),
            ("MedCat + Em.", [_rep(A), _rep(B)]),
            ("GPT-4 (class-ag.)", [_rep(B), _rep(C)]),
            ("GPT-4 (class-aw.)", [_rep(C), _rep(D)]),
        ]),
        ("Class-aware recognition (11 classes)", [
            ("GPT-4 (no-cot)", [_rep(E, CLASS_AWARE), _rep(D, CLASS_AWARE)]),
        ]),
    ]


def recall_groups():
    cond, proc, medic, time_, loc, num, name, word, other, contrad, incorr = ALL_CLASSES
    return [
        ("Hallucinations-MIMIC-DI", [
            ("MedCat", _rep(A, recall={cond: 0.5, proc: 0.25, medic: 1 / 3})),          # 50.0 25.0 33.3
            ("GPT-4 (class-ag.)", _rep(B, recall={num: 0.75, other: 1.0, contrad: 0.125})),  # 75.0 100.0 12.5
        ]),
        ("Hallucinations-Generated-DI", [
            ("MedCat", _rep(C, recall={word: 0.064, loc: 2 / 3})),                       # 6.4 66.7
            ("GPT-4 (class-ag.)", _rep(D, recall={time_: 0.5, name: 0.4, incorr: 0.0})),  # 50.0 40.0 0.0
        ]),
    ]


def _metric(r1, r2, r3, r4, rl, sari, words, external=None):
    prf = lambda f: PRF(f, f, f)  # noqa: E731
    return MetricReport({1: prf(r1), 2: prf(r2), 3: prf(r3), 4: prf(r4)}, prf(rl), sari, words,
                        dict(external or {}))


def metric_rows():
    return [
        # 50.00 25.00 12.50 6.25 37.50 88.00 64.00 46.71 77.00
        ("LED-large (80,140 ex.)", _metric(0.5, 0.25, 0.125, 0.0625, 0.375, 46.71, 77,
                                           {"BERT": 88.0, "DeBERT": 64.0})),
        # 40.00 10.00 2.50 1.00 20.00 - - 42.88 131.86
        ("GPT-4 5-shot (5 ex.)", _metric(0.4, 0.1, 0.025, 0.01, 0.2, 42.88, 131.86)),
    ]


def agreement_reports():
    return [
        AgreementReport("MIMIC", AlphaResult(0.629, 100, 200), 0.479, 0.245),
        AgreementReport("Generated", AlphaResult(0.826, 100, 200), 0.440, 0.271),
    ]


def likert_result():
    vals = {"relevance": 0.457, "consistency": 0.778, "simplification": 0.633, "fluency": 0.431,
            "coherence": 0.218}
    return LikertAgreement({d: AlphaResult(v, 10, 20) for d, v in vals.items()}, AlphaResult(0.586, 50, 100))
