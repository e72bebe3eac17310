import json
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hallucispan.anno_model import (
    ALL_CLASSES,
    AnnotationSet,
    DocumentPair,
    HallucinationClass,
    SpanAnnotation,
    count_annotations,
    count_deid,
    load_corpus,
    load_standoff,
    parse_label,
    save_standoff,
    validate,
)
from hallucispan.errors import SchemaError, UnknownLabel

H = HallucinationClass


def test_parse_label_canonical_and_loose_forms():
    assert parse_label("unsupported_number") is H.UNSUPPORTED_NUMBER
    assert parse_label("Contradicted Fact") is H.CONTRADICTED_FACT
    assert parse_label("  incorrect-fact ") is H.INCORRECT_FACT


def test_parse_label_rejects_unknown():
    with pytest.raises(UnknownLabel):
        parse_label("hallucination")
    with pytest.raises(UnknownLabel):
        parse_label(3)


def test_parse_label_inverts_canonical_name():
    assert len(ALL_CLASSES) == 11
    for c in ALL_CLASSES:
        assert parse_label(c.value) is c


def test_families():
    assert sum(c.family == "unsupported" for c in ALL_CLASSES) == 9
    assert H.CONTRADICTED_FACT.family == "contradicted_fact"


def _write(path, lines):
    path.write_text("".join(json.dumps(x) + "\n" for x in lines), encoding="utf-8")


def test_load_standoff_empty_file(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text("")
    assert load_standoff(p) == []


def test_load_standoff_one_span(tmp_path):
    p = tmp_path / "a.jsonl"
    _write(p, [{"doc_id": "d1", "annotator": "x", "spans": [{"start": 12, "end": 14, "class": "unsupported_number"}]}])
    (s,) = load_standoff(p)
    assert s.spans == (SpanAnnotation(12, 14, H.UNSUPPORTED_NUMBER),)
    assert s.spans[0].label is H.UNSUPPORTED_NUMBER


@pytest.mark.parametrize("span", [
    {"start": 5, "end": 3},
    {"start": 5, "end": 5},
    {"start": -1, "end": 3},
    {"start": "0", "end": 3},
    {"start": 0, "end": 3, "class": "nonsense"},
])
def test_load_standoff_bad_span(tmp_path, span):
    p = tmp_path / "a.jsonl"
    _write(p, [{"doc_id": "d1", "annotator": "x", "spans": [span]}])
    with pytest.raises(SchemaError):
        load_standoff(p)


def test_load_standoff_rejects_overlap_and_bad_json(tmp_path):
    p = tmp_path / "a.jsonl"
    _write(p, [{"doc_id": "d1", "annotator": "x", "spans": [{"start": 0, "end": 10}, {"start": 5, "end": 12}]}])
    with pytest.raises(SchemaError):
        load_standoff(p)
    p.write_text("{not json\n")
    with pytest.raises(SchemaError) as err:
        load_standoff(p)
    assert err.value.index == 0


def test_load_corpus_rejects_duplicates(tmp_path):
    p = tmp_path / "c.jsonl"
    _write(p, [{"id": "a", "context": "c", "summary": "s"}] * 2)
    with pytest.raises(SchemaError):
        load_corpus(p)


DOC = DocumentPair("d", "context", "x" * 20)


def test_validate_accepts_good_set():
    assert validate(AnnotationSet("d", "a", (SpanAnnotation(0, 4), SpanAnnotation(10, 12))), DOC) == []


def test_validate_overlap():
    v = validate(AnnotationSet("d", "a", (SpanAnnotation(0, 10), SpanAnnotation(5, 12))), DOC)
    assert [x.rule for x in v] == ["overlap"]


def test_validate_bounds():
    v = validate(AnnotationSet("d", "a", (SpanAnnotation(18, 25),)), DOC)
    assert [x.rule for x in v] == ["bounds"]


def test_validate_whitespace_and_doc_mismatch():
    doc = DocumentPair("d", "c", "ab   cd")
    v = validate(AnnotationSet("e", "a", (SpanAnnotation(2, 5),)), doc)
    assert {x.rule for x in v} == {"doc_mismatch", "empty"}


@given(st.one_of(st.binary(max_size=40), st.text(max_size=40), st.integers()),
       st.lists(st.tuples(st.integers(-5, 50), st.integers(-5, 50)), max_size=5))
def test_validate_never_raises(summary, pairs):
    doc = DocumentPair("d", "c", summary)
    aset = AnnotationSet("d", "a", tuple(SpanAnnotation(a, b) for a, b in pairs))
    assert isinstance(validate(aset, doc), list)


def _valid_sets():
    @st.composite
    def build(draw):
        n = draw(st.integers(1, 60))
        summary = draw(st.text(alphabet="abc xyz.", min_size=n, max_size=n))
        cuts = sorted(set(draw(st.lists(st.integers(0, n), max_size=8))))
        spans = []
        for a, b in zip(cuts[::2], cuts[1::2]):
            if b > a and summary[a:b].strip():
                spans.append(SpanAnnotation(a, b, draw(st.one_of(st.none(), st.sampled_from(ALL_CLASSES)))))
        return summary, AnnotationSet("d", "ann", tuple(spans))
    return build()


@settings(max_examples=100)
@given(_valid_sets())
def test_valid_sets_cover_at_most_the_summary(pair):
    summary, aset = pair
    assert validate(aset, DocumentPair("d", "c", summary)) == []
    assert sum(len(s.text(summary)) for s in aset.spans) <= len(summary)


@settings(max_examples=60)
@given(st.lists(_valid_sets(), max_size=4))
def test_standoff_round_trip(tmp_path_factory, pairs):
    d = tmp_path_factory.mktemp("rt")
    sets = [AnnotationSet(f"d{i}", a.annotator, a.spans) for i, (_, a) in enumerate(pairs)]
    p1, p2 = d / "a.jsonl", d / "b.jsonl"
    save_standoff(p1, sets)
    loaded = load_standoff(p1)
    assert [(s.doc_id, [(x.start, x.end, x.label) for x in s.spans]) for s in loaded] == \
        [(s.doc_id, [(x.start, x.end, x.label) for x in s.spans]) for s in sets]
    save_standoff(p2, loaded)
    assert p1.read_bytes() == p2.read_bytes()


def test_count_table_row_with_published_totals():
    # one class-breakdown row of the annotation-count table: 286 spans in 100 summaries
    per_class = dict(zip(ALL_CLASSES, [52, 19, 34, 35, 29, 7, 18, 76, 1, 15, 0]))
    spans_by_doc = [[] for _ in range(100)]
    k = 0
    for c, n in per_class.items():
        for _ in range(n):
            spans_by_doc[k % 100].append(c)
            k += 1
    sets = [AnnotationSet(f"d{i}", "a", tuple(SpanAnnotation(2 * j, 2 * j + 1, c) for j, c in enumerate(cs)))
            for i, cs in enumerate(spans_by_doc)]
    t = count_annotations(sets)
    assert t.total == 286
    assert t.per_class[H.UNSUPPORTED_WORD] == 76
    assert t.row()["word"] == 76 and t.row()["Total"] == 286
    assert t.mean == pytest.approx(2.86)


def test_count_table_empty():
    t = count_annotations([])
    assert t.total == 0 and all(v == 0 for v in t.per_class.values()) and t.mean == 0 and t.sd == 0


def test_count_table_mean_sd_against_direct_formula():
    counts = [3, 2, 0, 5, 1, 1, 4, 2, 2, 3, 0, 6, 1, 2, 3, 2, 4, 1, 0, 2]
    sets = [AnnotationSet(f"d{i}", "a", tuple(SpanAnnotation(2 * j, 2 * j + 1) for j in range(n)))
            for i, n in enumerate(counts)]
    t = count_annotations(sets, group_by="summary")
    mean = sum(counts) / 20
    sd = (sum((c - mean) ** 2 for c in counts) / 19) ** 0.5
    assert t.per_summary == counts
    assert t.mean == pytest.approx(mean, abs=1e-12)
    assert t.sd == pytest.approx(sd, abs=1e-12)
    assert t.unlabeled == sum(counts)
    assert statistics.stdev(counts) == pytest.approx(sd)


def test_count_deid():
    assert count_deid("Dear ___, see Dr. ___ on ___.") == 3
