"""Command-line entry point.

Every subcommand writes its outputs into ``--out DIR`` together with a
``manifest.json`` recording the resolved options, input digests, tool
version and any sampled exemplars. Exit codes: 0 success, 1 invalid input
or arguments, 2 IO, transport or fixture failures. Errors are reported on
stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

import yaml

from . import __version__
from . import corpus_prep as prep
from . import reports
from .agreement import likert_alpha, load_ratings, span_agreement
from .anno_model import (
    count_annotations,
    iter_jsonl,
    load_corpus,
    load_standoff,
    save_standoff,
    validate,
    write_jsonl,
)
from .entity_detector import DEFAULT_TAU, DetectorConfig, EmbeddingStore, Lexicon, detect, load_mentions, tune_tau
from .errors import ConfigError, ExternalError, InputError, PathError, SchemaError, UsageError
from .llm_client import (
    DETECTION,
    Decoding,
    DetectionShot,
    EndpointConfig,
    LlmClient,
    PromptSpec,
    SummaryShot,
    detect_batch,
    summarize_batch,
)
from .sampling import sample_shots
from .span_eval import evaluate_corpus
from .tagged_text import CLASS_AGNOSTIC, CLASS_AWARE, DEFAULT_MIN_CONFIDENCE, MODES, align, parse_tagged, project_spans
from .text_metrics import corpus_stats, load_external_scores, mean_report, score_pair

log = logging.getLogger("hallucispan")

# option keys that name input files; digested into the manifest
INPUT_KEYS = (
    "input", "rules", "corpus", "gold", "pred", "lexicon", "embeddings", "mentions", "dev_gold",
    "dev_corpus", "shot_pool", "shot_gold", "a", "b", "ratings", "external", "variant", "original",
    "annotations",
)
# keys left out of the manifest config (not part of the computation)
NON_CONFIG = ("func", "config", "log_level")


class Run:
    """Collects outputs for one invocation and writes the manifest."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.extra: dict = {}

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text, encoding="utf-8", newline="\n")

    def write_json(self, name: str, obj) -> None:
        self.write_text(name, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")

    def write_table(self, table: reports.Table, stem: str) -> None:
        self.write_text(f"{stem}.txt", table.to_text())
        self.write_text(f"{stem}.tsv", table.to_tsv())
        self.write_text(f"{stem}.json", table.to_json())

    def manifest(self) -> dict:
        cfg = {k: v for k, v in sorted(vars(self.args).items()) if k not in NON_CONFIG}
        inputs = {}
        for key in INPUT_KEYS:
            vals = cfg.get(key)
            for v in vals if isinstance(vals, list) else [vals]:
                if v and Path(v).is_file():
                    inputs[str(v)] = _digest(Path(v))
        return {
            "tool": "hallucispan",
            "version": __version__,
            "command": self.args.command,
            "config": cfg,
            "inputs": inputs,
            "outputs": sorted(set(self.outputs)),
            **self.extra,
        }

    def finish(self) -> None:
        self.write_json("manifest.json", self.manifest())


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _check_paths(args: argparse.Namespace) -> None:
    for key in INPUT_KEYS:
        vals = getattr(args, key, None)
        for v in vals if isinstance(vals, list) else [vals]:
            if v and not Path(v).exists():
                raise PathError(f"--{key.replace('_', '-')}: {v} does not exist")


# --- endpoint and shots -----------------------------------------------------------------------


def _endpoint(args) -> EndpointConfig:
    if args.replay and args.record:
        raise UsageError("--replay and --record are mutually exclusive")
    mode, fdir = ("replay", args.replay) if args.replay else ("record", args.record) if args.record else ("off", None)
    return EndpointConfig(
        base_url=args.base_url,
        model=args.model,
        api_key_env=args.api_key_env,
        api_key_header=args.api_key_header,
        max_retries=args.max_retries,
        fixture_dir=fdir,
        fixture_mode=mode,
    )


def _decoding(args) -> Decoding:
    return Decoding(max_new_tokens=args.max_new_tokens, temperature=args.temperature)


def _pick(run: Run, pool: Sequence, k: int, seed: int | None) -> list:
    if k and seed is None:
        raise UsageError("--seed is required when sampling exemplars")
    chosen = sample_shots(pool, k, seed if seed is not None else 0)
    run.extra["seed"] = seed
    run.extra["shots"] = [d.id for d in chosen]
    return chosen


def _detection_shots(run: Run, args) -> tuple[DetectionShot, ...]:
    if not args.shots:
        run.extra.update(seed=args.seed, shots=[])
        return ()
    if not args.shot_pool or not args.shot_gold:
        raise UsageError("--shots > 0 needs --shot-pool and --shot-gold")
    pool = load_corpus(args.shot_pool)
    gold = {s.doc_id: s for s in load_standoff(args.shot_gold)}
    pool = [d for d in pool if d.id in gold]
    chosen = _pick(run, pool, args.shots, args.seed)
    return tuple(DetectionShot.from_annotations(d, gold[d.id]) for d in chosen)


def _summary_shots(run: Run, args) -> tuple[SummaryShot, ...]:
    if not args.shots:
        run.extra.update(seed=args.seed, shots=[])
        return ()
    if not args.shot_pool:
        raise UsageError("--shots > 0 needs --shot-pool")
    chosen = _pick(run, load_corpus(args.shot_pool), args.shots, args.seed)
    return tuple(SummaryShot(d.context, d.summary) for d in chosen)


# --- subcommands ---------------------------------------------------------------------------------


def cmd_prep(run: Run, args) -> int:
    rules = prep.load_rules(args.rules)
    records = (rec for _, rec in iter_jsonl(args.input))
    res = prep.run_pipeline(records, rules, args.context_mode, workers=args.workers)
    write_jsonl(run.path("dataset.jsonl"), res.dataset)
    write_jsonl(run.path("rejections.jsonl"), res.rejections)
    table = reports.stage_table(res.stats)
    run.write_table(table, "stage_stats")
    run.write_json("stage_stats_raw.json", {"stages": res.stats.to_record(), "flow": res.stats.flow(),
                                            "non_idempotent": res.non_idempotent})
    if args.figures:
        from .plots import stage_flow_plot

        labels = ["input"] + [r.label for r in table.rows]
        stage_flow_plot(res.stats.flow(), labels, run.path("stage_flow.png"))
    print(table.to_text(), end="")
    return 0


def cmd_subset(run: Run, args) -> int:
    data = [rec for _, rec in iter_jsonl(args.input)]
    for i, rec in enumerate(data):
        if not isinstance(rec.get("context"), str) or not isinstance(rec.get("summary"), str):
            raise SchemaError("records need context and summary strings", i)
    sub = prep.filter_anno_subset(data, args.max_context, args.min_summary)
    write_jsonl(run.path("subset.jsonl"), sub)
    print(f"kept {len(sub)} of {len(data)} records")
    return 0


def cmd_detect_entity(run: Run, args) -> int:
    docs = load_corpus(args.corpus)
    types = args.semantic_types.split(",") if args.semantic_types else None
    lexicon = Lexicon.load(args.lexicon, types) if args.lexicon else None
    mentions = load_mentions(args.mentions) if args.mentions else {}
    if lexicon is None and not mentions:
        raise UsageError("need --lexicon or --mentions")
    emb = EmbeddingStore.load(args.embeddings) if args.embeddings else None
    if args.use_embeddings and emb is None:
        raise UsageError("--use-embeddings needs --embeddings")
    tau = args.tau
    if args.tau_grid:
        if not (args.dev_gold and args.dev_corpus and emb and lexicon):
            raise UsageError("--tau-grid needs --dev-gold, --dev-corpus, --lexicon and --embeddings")
        grid = [float(x) for x in args.tau_grid.split(",")]
        search = tune_tau(load_standoff(args.dev_gold), load_corpus(args.dev_corpus), lexicon, emb, grid)
        tau = search.tau
        run.write_json("tau_search.json", {"tau": tau, "all_zero": search.all_zero,
                                           "scores": {str(k): v for k, v in search.scores.items()}})
    cfg = DetectorConfig(tau=tau, use_embeddings=args.use_embeddings)
    preds, missing = [], {}
    for d in docs:
        det = detect(d, lexicon, emb, cfg, mentions.get((d.id, "summary")), mentions.get((d.id, "context")))
        preds.append(det.annotations)
        if det.missing_embeddings:
            missing[d.id] = det.missing_embeddings
    save_standoff(run.path("predictions.jsonl"), preds)
    run.extra["tau"] = tau
    if missing:
        run.write_json("missing_embeddings.json", missing)
    print(f"{sum(len(p.spans) for p in preds)} spans flagged in {len(docs)} documents (tau={tau})")
    return 0


def _report_external(failures: list[dict]) -> int:
    ext = [f for f in failures if f["failure"]["external"]]
    if ext:
        err = {"error": ext[0]["failure"]["code"], "exit": 2, "failed": ext}
        print(json.dumps(err, ensure_ascii=False), file=sys.stderr)
        return 2
    return 0


def cmd_detect_llm(run: Run, args) -> int:
    docs = load_corpus(args.corpus)
    spec = PromptSpec(DETECTION, args.mode, args.cot, _detection_shots(run, args), _decoding(args), args.template_dir)
    client = LlmClient(_endpoint(args))
    try:
        results = detect_batch(docs, spec, client, args.workers, args.min_confidence)
    finally:
        client.close()
    save_standoff(run.path("predictions.jsonl"), [r.annotations for r in results])
    write_jsonl(run.path("diagnostics.jsonl"), [r.diagnostics.to_record() for r in results])
    failures = [{"doc_id": r.diagnostics.doc_id, "failure": r.diagnostics.failure} for r in results if r.failed]
    print(f"{len(results)} documents, {len(failures)} failed, "
          f"{sum(len(r.annotations.spans) for r in results)} spans")
    return _report_external(failures)


def cmd_summarize(run: Run, args) -> int:
    docs = load_corpus(args.corpus)
    shots = _summary_shots(run, args)
    client = LlmClient(_endpoint(args))
    try:
        results = summarize_batch(docs, shots, client, args.workers, _decoding(args), args.template_dir)
    finally:
        client.close()
    write_jsonl(run.path("summaries.jsonl"),
                [{"id": r.doc_id, "summary": r.summary, "failure": r.failure} for r in results])
    failures = [{"doc_id": r.doc_id, "failure": r.failure} for r in results if r.failure]
    print(f"{len(results)} documents, {len(failures)} failed")
    return _report_external(failures)


def cmd_eval(run: Run, args) -> int:
    gold = load_standoff(args.gold)
    if args.corpus:
        docs = {d.id: d for d in load_corpus(args.corpus)}
        for s in gold:
            if s.doc_id in docs and validate(s, docs[s.doc_id]):
                raise SchemaError(f"gold set for {s.doc_id} fails validation")
    labels = args.label or []
    if labels and len(labels) != len(args.pred):
        raise UsageError("give one --label per --pred")
    labels = labels or [Path(p).stem for p in args.pred]
    agn, aware, records = [], [], {}
    for label, path in zip(labels, args.pred):
        pred = load_standoff(path)
        r_agn = evaluate_corpus(gold, pred, CLASS_AGNOSTIC)
        agn.append((label, r_agn))
        rec = {CLASS_AGNOSTIC: r_agn.to_record()}
        if any(s.label is not None for p in pred for s in p.spans):
            r_aw = evaluate_corpus(gold, pred, CLASS_AWARE)
            aware.append((label, r_aw))
            rec[CLASS_AWARE] = r_aw.to_record()
        records[label] = rec
    groups = [("Class-agnostic recognition", [(lab, [r]) for lab, r in agn])]
    if aware:
        groups.append(("Class-aware recognition (11 classes)", [(lab, [r]) for lab, r in aware]))
    table = reports.detection_table([args.dataset], groups)
    run.write_table(table, "detection_scores")
    recall = reports.recall_table([(args.dataset, agn)])
    run.write_table(recall, "per_class_recall")
    run.write_json("eval_raw.json", records)
    if args.figures:
        from .plots import per_class_recall_plot

        per_class_recall_plot({lab: r.per_class_recall for lab, r in agn}, run.path("per_class_recall.png"))
    print(table.to_text(), end="")
    return 0


def cmd_agree(run: Run, args) -> int:
    if not (args.a and args.b) and not args.ratings:
        raise UsageError("need --a/--b span annotations, --ratings, or both")
    if bool(args.a) != bool(args.b):
        raise UsageError("--a and --b go together")
    rows = {}
    if args.a:
        labels = args.label or [f"set{i + 1}" for i in range(len(args.a))]
        if len(args.a) != len(args.b) or len(labels) != len(args.a):
            raise UsageError("give matching numbers of --a, --b and --label")
        reps = [span_agreement(lab, load_standoff(a), load_standoff(b)) for lab, a, b in zip(labels, args.a, args.b)]
        table = reports.agreement_table(reps)
        run.write_table(table, "span_agreement")
        print(table.to_text(), end="")
        rows.update({r.name: {"alpha": r.alpha.value, "F1 agn.": r.overlap_f1_agnostic,
                              "F1 aw.": r.overlap_f1_aware} for r in reps})
    if args.ratings:
        res = likert_alpha(load_ratings(args.ratings))
        table = reports.likert_table(res)
        run.write_table(table, "rating_agreement")
        if res.failures:
            run.write_json("rating_agreement_failures.json", res.failures)
        print(table.to_text(), end="")
        rows["ratings"] = {d: (None if v is None else v.value) for d, v in res.per_dimension.items()}
    if args.figures and rows:
        from .plots import agreement_plot

        agreement_plot(rows, run.path("agreement.png"))
    return 0


def cmd_metrics(run: Run, args) -> int:
    docs = {d.id: d for d in load_corpus(args.corpus)}
    preds = {}
    for i, rec in iter_jsonl(args.pred):
        if not isinstance(rec.get("id"), str) or not isinstance(rec.get("summary"), str):
            raise SchemaError("prediction records need id and summary strings", i)
        preds[rec["id"]] = rec["summary"]
    missing = sorted(set(preds) - set(docs))
    if missing:
        raise SchemaError(f"predictions for unknown documents: {missing[:5]}")
    external = load_external_scores(args.external) if args.external else {}
    per_doc, rows = [], []
    for doc_id, cand in preds.items():
        d = docs[doc_id]
        rep = score_pair(d.context, cand, d.summary, external.get(doc_id))
        per_doc.append(rep)
        rows.append({"id": doc_id, **rep.to_record()})
    if not per_doc:
        raise SchemaError("no predictions to score")
    write_jsonl(run.path("metrics_per_doc.jsonl"), rows)
    table = reports.metrics_table([(args.label, mean_report(per_doc))])
    run.write_table(table, "summary_metrics")
    scored = [docs[i] for i in preds]
    stats = reports.corpus_stats_table({
        "Context": [corpus_stats(d.context) for d in scored],
        "Reference": [corpus_stats(d.summary) for d in scored],
        "Candidate": [corpus_stats(preds[d.id]) for d in scored],
    })
    run.write_table(stats, "corpus_stats")
    print(table.to_text(), end="")
    return 0


def cmd_align(run: Run, args) -> int:
    variant = Path(args.variant).read_text(encoding="utf-8")
    original = Path(args.original).read_text(encoding="utf-8")
    notes: list[str] = []
    if args.tagged:
        variant, spans = parse_tagged(variant, args.mode, notes)
    else:
        spans = []
    omap = align(variant, original, threshold=args.min_confidence)
    kept, dropped = project_spans(spans, omap)
    out = {
        "confidence": omap.confidence,
        "matched": omap.matched,
        "spans": [{"start": s.start, "end": s.end, "class": s.label.value if s.label else None,
                   "text": original[s.start:s.end]} for s in kept],
        "dropped": [{"start": d.span.start, "end": d.span.end, "reason": d.reason} for d in dropped],
        "notes": notes,
    }
    if args.map:
        out["lo"], out["hi"] = list(omap.lo), list(omap.hi)
    run.write_json("alignment.json", out)
    print(json.dumps({k: out[k] for k in ("confidence", "spans", "dropped")}, ensure_ascii=False))
    return 0


def cmd_validate(run: Run, args) -> int:
    docs = {d.id: d for d in load_corpus(args.corpus)}
    problems = []
    sets = load_standoff(args.annotations) if args.annotations else []
    for s in sets:
        doc = docs.get(s.doc_id)
        if doc is None:
            problems.append({"doc_id": s.doc_id, "rule": "doc_mismatch", "message": "unknown document"})
            continue
        for v in validate(s, doc):
            problems.append({"doc_id": s.doc_id, "span_index": v.span_index, "rule": v.rule, "message": v.message})
    write_jsonl(run.path("violations.jsonl"), problems)
    if sets:
        table = reports.count_table([(args.label, count_annotations(sets))])
        run.write_table(table, "annotation_counts")
        print(table.to_text(), end="")
    print(f"{len(docs)} documents, {len(sets)} annotation sets, {len(problems)} violations")
    if problems:
        print(json.dumps({"error": "ValidationFailed", "exit": 1, "count": len(problems)}), file=sys.stderr)
        return 1
    return 0


def cmd_rerun(run: Run, args) -> int:
    raise AssertionError("rerun is dispatched in main")


# --- parser --------------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _endpoint_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-url", help="OpenAI-compatible API base URL")
    p.add_argument("--model")
    p.add_argument("--api-key-env", default="OPENAI_API_KEY", help="environment variable holding the credential")
    p.add_argument("--api-key-header", default="Authorization")
    p.add_argument("--max-retries", type=int, default=4)
    p.add_argument("--replay", metavar="DIR", help="answer requests from recorded fixtures only")
    p.add_argument("--record", metavar="DIR", help="call the endpoint and store responses")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--max-new-tokens", type=int, default=600)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--template-dir", help="directory overriding the bundled prompt templates")
    p.add_argument("--shots", type=int, default=0)
    p.add_argument("--shot-pool", help="corpus to sample exemplars from")
    p.add_argument("--seed", type=int)


COMMANDS: dict[str, Callable] = {}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hallucispan", description="Hallucination span annotation, detection and scoring.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="YAML file with option defaults (explicit flags take precedence)")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", required=name != "rerun", help="output directory")
        p.add_argument("--figures", action="store_true", help="also write PNG figures")
        COMMANDS[name] = func
        return p

    p = add("prep", cmd_prep, "split and clean raw notes")
    p.add_argument("--in", dest="input", required=True, help="JSONL of {note_id, text}")
    p.add_argument("--rules", help="rule config (default: bundled starter rules)")
    p.add_argument("--context-mode", choices=(prep.SHORT, prep.FULL), default=prep.SHORT)
    p.add_argument("--workers", type=int, default=1)

    p = add("subset", cmd_subset, "select the annotation subset by length")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--max-context", type=int, default=prep.ANNO_MAX_CONTEXT)
    p.add_argument("--min-summary", type=int, default=prep.ANNO_MIN_SUMMARY)

    p = add("detect-entity", cmd_detect_entity, "entity-based baseline detector")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--semantic-types", help="comma-separated semantic types to keep")
    p.add_argument("--mentions", help="precomputed mentions JSONL")
    p.add_argument("--embeddings")
    p.add_argument("--use-embeddings", action="store_true")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--tau-grid", help="comma-separated thresholds to tune on dev data")
    p.add_argument("--dev-gold")
    p.add_argument("--dev-corpus")

    p = add("detect-llm", cmd_detect_llm, "LLM span detection")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=MODES, default=CLASS_AWARE)
    p.add_argument("--cot", action="store_true")
    p.add_argument("--shot-gold", help="gold annotations for the exemplar pool")
    p.add_argument("--min-confidence", type=float, default=DEFAULT_MIN_CONFIDENCE)
    _endpoint_flags(p)

    p = add("summarize", cmd_summarize, "LLM summary generation")
    p.add_argument("--corpus", required=True)
    _endpoint_flags(p)

    p = add("eval", cmd_eval, "score predictions against gold spans")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True, action="append")
    p.add_argument("--label", action="append", help="row label per --pred")
    p.add_argument("--dataset", default="data", help="dataset column title")
    p.add_argument("--corpus", help="validate gold spans against this corpus")
    p.add_argument("--mode", choices=MODES, help="accepted for compatibility; both modes are reported")

    p = add("agree", cmd_agree, "inter-annotator agreement")
    p.add_argument("--a", action="append", help="annotator A standoff file")
    p.add_argument("--b", action="append", help="annotator B standoff file")
    p.add_argument("--label", action="append")
    p.add_argument("--ratings", help="Likert ratings JSONL")

    p = add("metrics", cmd_metrics, "ROUGE, SARI and corpus statistics")
    p.add_argument("--corpus", required=True, help="documents with reference summaries")
    p.add_argument("--pred", required=True, help="JSONL of {id, summary}")
    p.add_argument("--external", help="JSONL of {doc_id, name, value}")
    p.add_argument("--label", default="model")

    p = add("align", cmd_align, "align a rewritten summary to the original")
    p.add_argument("--variant", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--tagged", action="store_true", help="variant contains error tags to project")
    p.add_argument("--mode", choices=MODES, default=CLASS_AWARE)
    p.add_argument("--min-confidence", type=float, default=DEFAULT_MIN_CONFIDENCE)
    p.add_argument("--map", action="store_true", help="include the full offset map")

    p = add("validate", cmd_validate, "check a corpus and annotations")
    p.add_argument("--corpus", required=True)
    p.add_argument("--annotations")
    p.add_argument("--label", default="annotations")

    p = add("rerun", cmd_rerun, "re-execute a run from its manifest")
    p.add_argument("--manifest", required=True)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise PathError(f"--config: {args.config} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    # a section named after the subcommand overrides top-level keys
    merged = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    merged.update(cfg.get(args.command, {}) or {})
    merged = {k.replace("-", "_"): v for k, v in merged.items()}
    known = set(vars(args))
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {unknown}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**merged)
    return parser.parse_args(argv)


def _rerun(parser, args) -> int:
    try:
        man = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise PathError(f"--manifest: {args.manifest} does not exist") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from None
    cmd = man.get("command")
    if cmd not in COMMANDS or cmd == "rerun":
        raise SchemaError(f"manifest names unknown command {cmd!r}")
    ns = argparse.Namespace(**man["config"])
    ns.command, ns.func, ns.config = cmd, COMMANDS[cmd], None
    if args.out:
        ns.out = args.out
    return _execute(ns)


def _execute(args) -> int:
    _check_paths(args)
    run = Run(args)
    code = args.func(run, args)
    run.finish()
    return code


def _emit(exc: BaseException, code: int) -> int:
    rec = {"error": getattr(exc, "code", type(exc).__name__), "message": str(exc), "exit": code}
    print(json.dumps(rec, ensure_ascii=False), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        if args.command == "rerun":
            return _rerun(parser, args)
        return _execute(args)
    except InputError as exc:
        return _emit(exc, 1)
    except ExternalError as exc:
        return _emit(exc, 2)
    except (OSError, UnicodeDecodeError) as exc:
        return _emit(exc, 2)
    except ValueError as exc:
        return _emit(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
