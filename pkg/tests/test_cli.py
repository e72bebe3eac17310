import json
import shutil

from conftest import FIXTURES
from hallucispan.cli import main

LLM = FIXTURES / "llm"
ENT = FIXTURES / "entity"
PREP = FIXTURES / "prep"


def run(*argv):
    return main([str(a) for a in argv])


def err_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_eval_identical_files(tmp_path, capsys):
    gold = ENT / "gold.jsonl"
    assert run("eval", "--gold", gold, "--pred", gold, "--label", "self", "--out", tmp_path) == 0
    raw = json.loads((tmp_path / "eval_raw.json").read_text())
    assert raw["self"]["class_agnostic"]["f1"] == 1.0
    assert "self" in capsys.readouterr().out
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "eval" and str(gold) in man["inputs"]
    assert {"detection_scores.tsv", "per_class_recall.json", "eval_raw.json"} <= set(man["outputs"])


def test_detect_llm_replay_missing_fixture(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    corpus.write_text(json.dumps({"id": "Z1", "context": "never recorded", "summary": "none"}) + "\n")
    code = run("detect-llm", "--corpus", corpus, "--replay", LLM / "replay", "--out", tmp_path / "o")
    assert code == 2
    err = err_json(capsys)
    assert err["error"] == "FixtureMiss" and err["failed"][0]["doc_id"] == "Z1"
    assert (tmp_path / "o" / "manifest.json").exists()


def test_detect_llm_replay_matches_expected(tmp_path):
    assert run("detect-llm", "--corpus", LLM / "corpus.jsonl", "--replay", LLM / "replay", "--out", tmp_path) == 0
    got = [json.loads(x) for x in (tmp_path / "predictions.jsonl").read_text().splitlines()]
    want = [json.loads(x) for x in (LLM / "expected_predictions.jsonl").read_text().splitlines()]
    assert got == want


def test_prep_prints_stage_table(tmp_path, capsys):
    assert run("prep", "--in", PREP / "notes.jsonl", "--rules", PREP / "rules.yaml", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "Entered" in out and "split" in out
    raw = json.loads((tmp_path / "stage_stats_raw.json").read_text())
    assert raw["flow"] == [10, 8, 7, 4]
    assert (tmp_path / "dataset.jsonl").read_bytes() == (PREP / "expected_dataset.jsonl").read_bytes()


def test_prep_runs_are_byte_identical_and_rerunnable(tmp_path):
    args = ["prep", "--in", PREP / "notes.jsonl", "--rules", PREP / "rules.yaml", "--figures"]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert "stage_flow.png" in a
    man_a, man_b = json.loads(a.pop("manifest.json")), json.loads(b.pop("manifest.json"))
    assert a == b
    man_a["config"].pop("out"), man_b["config"].pop("out")
    assert man_a == man_b
    assert run("rerun", "--manifest", tmp_path / "a" / "manifest.json", "--out", tmp_path / "c") == 0
    c = files(tmp_path / "c")
    c.pop("manifest.json")
    assert c == a


def test_replay_run_is_rerunnable(tmp_path):
    assert run("detect-llm", "--corpus", LLM / "corpus.jsonl", "--replay", LLM / "replay", "--out", tmp_path / "a") == 0
    assert run("rerun", "--manifest", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b") == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b


def test_validate_exit_codes(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    corpus.write_text(json.dumps({"id": "d", "context": "c", "summary": "short text"}) + "\n")
    good = tmp_path / "good.jsonl"
    good.write_text(json.dumps({"doc_id": "d", "annotator": "a", "spans": [{"start": 0, "end": 5}]}) + "\n")
    assert run("validate", "--corpus", corpus, "--annotations", good, "--out", tmp_path / "o1") == 0
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"doc_id": "d", "annotator": "a", "spans": [{"start": 5, "end": 40}]}) + "\n")
    assert run("validate", "--corpus", corpus, "--annotations", bad, "--out", tmp_path / "o2") == 1
    assert err_json(capsys)["error"] == "ValidationFailed"
    assert (tmp_path / "o2" / "violations.jsonl").read_text().strip()


def test_usage_and_path_errors(tmp_path, capsys):
    assert run("eval", "--out", tmp_path) == 1
    assert err_json(capsys)["error"] == "UsageError"
    assert run("eval", "--gold", tmp_path / "nope.jsonl", "--pred", tmp_path / "nope.jsonl", "--out", tmp_path) == 2
    assert err_json(capsys)["error"] == "PathError"
    assert not (tmp_path / "manifest.json").exists()


def test_schema_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "g.jsonl"
    bad.write_text("{not json\n")
    assert run("eval", "--gold", bad, "--pred", bad, "--out", tmp_path / "o") == 1
    assert err_json(capsys)["error"] == "SchemaError"


def test_eval_figures(tmp_path):
    gold = ENT / "gold.jsonl"
    assert run("eval", "--gold", gold, "--pred", gold, "--figures", "--out", tmp_path) == 0
    assert (tmp_path / "per_class_recall.png").read_bytes()[:4] == b"\x89PNG"


def test_detect_entity_and_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("detect-entity:\n  tau: 0.6\n  use-embeddings: true\n")
    base = ["detect-entity", "--corpus", ENT / "corpus.jsonl", "--lexicon", ENT / "lexicon.tsv",
            "--embeddings", ENT / "embeddings.txt"]
    assert run("--config", cfg, *base, "--out", tmp_path / "a") == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["tau"] == 0.6
    assert run("--config", cfg, *base, "--tau", "0.85", "--out", tmp_path / "b") == 0
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man["tau"] == 0.85 and man["config"]["use_embeddings"] is True
    flagged = [json.loads(x) for x in (tmp_path / "a" / "predictions.jsonl").read_text().splitlines()]
    assert sum(len(r["spans"]) for r in flagged) == 7


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("eval:\n  bogus: 1\n")
    gold = ENT / "gold.jsonl"
    assert run("--config", cfg, "eval", "--gold", gold, "--pred", gold, "--out", tmp_path / "o") == 2
    assert err_json(capsys)["error"] == "ConfigError"


def test_tau_grid(tmp_path):
    code = run("detect-entity", "--corpus", ENT / "corpus.jsonl", "--lexicon", ENT / "lexicon.tsv",
               "--embeddings", ENT / "embeddings.txt", "--use-embeddings", "--tau-grid",
               "0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95", "--dev-gold", ENT / "gold.jsonl",
               "--dev-corpus", ENT / "corpus.jsonl", "--out", tmp_path)
    assert code == 0
    assert json.loads((tmp_path / "tau_search.json").read_text())["tau"] == 0.8


def test_agree_and_metrics(tmp_path):
    gold = ENT / "gold.jsonl"
    ratings = tmp_path / "r.jsonl"
    ratings.write_text("".join(json.dumps({"doc_id": f"d{d}", "annotator": a, "dimension": "relevance",
                                           "value": 1 + (d + (a == "y")) % 5}) + "\n"
                               for d in range(4) for a in "xy"))
    assert run("agree", "--a", gold, "--b", gold, "--label", "MIMIC", "--ratings", ratings, "--figures",
               "--out", tmp_path / "ag") == 0
    tsv = (tmp_path / "ag" / "span_agreement.tsv").read_text().splitlines()
    assert tsv[1].split("\t")[:2] == ["MIMIC", "1.000"]
    assert (tmp_path / "ag" / "agreement.png").exists()
    assert (tmp_path / "ag" / "rating_agreement_failures.json").exists()

    pred = tmp_path / "p.jsonl"
    docs = [json.loads(x) for x in (LLM / "corpus.jsonl").read_text().splitlines()]
    pred.write_text("".join(json.dumps({"id": d["id"], "summary": d["summary"]}) + "\n" for d in docs))
    assert run("metrics", "--corpus", LLM / "corpus.jsonl", "--pred", pred, "--out", tmp_path / "m") == 0
    row = (tmp_path / "m" / "summary_metrics.tsv").read_text().splitlines()[1].split("\t")
    # L09 has three tokens, so its R-4 is 0 and the mean over ten documents is 90
    assert row[1:6] == ["100.00", "100.00", "100.00", "90.00", "100.00"]
    assert (tmp_path / "m" / "corpus_stats.tsv").exists()


def test_align_and_subset(tmp_path, capsys):
    v, o = tmp_path / "v.txt", tmp_path / "o.txt"
    v.write_text('Take your <error class="unsupported_medication">medications</error> now.')
    o.write_text("Take your medictaions now.")
    assert run("align", "--variant", v, "--original", o, "--tagged", "--out", tmp_path / "a") == 0
    out = json.loads((tmp_path / "a" / "alignment.json").read_text())
    assert out["spans"] == [{"start": 10, "end": 21, "class": "unsupported_medication", "text": "medictaions"}]
    capsys.readouterr()
    ds = tmp_path / "ds.jsonl"
    ds.write_text("".join(json.dumps(r) + "\n" for r in [
        {"id": "a", "context": "c" * 4000, "summary": "s" * 600},
        {"id": "b", "context": "c" * 4001, "summary": "s" * 600}]))
    assert run("subset", "--in", ds, "--out", tmp_path / "s") == 0
    assert "kept 1 of 2" in capsys.readouterr().out


def test_rerun_bad_manifest(tmp_path, capsys):
    assert run("rerun", "--manifest", tmp_path / "none.json") == 2
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"command": "rerun", "config": {}}))
    assert run("rerun", "--manifest", m) == 1


def test_summarize_replay(tmp_path):
    shutil.copytree(LLM / "replay", tmp_path / "fx")
    corpus = tmp_path / "c.jsonl"
    corpus.write_text(json.dumps({"id": "s1", "context": "ctx", "summary": "ref"}) + "\n")
    assert run("summarize", "--corpus", corpus, "--replay", tmp_path / "fx", "--out", tmp_path / "o") == 2
    rec = json.loads((tmp_path / "o" / "summaries.jsonl").read_text())
    assert rec["summary"] is None and rec["failure"]["code"] == "FixtureMiss"
