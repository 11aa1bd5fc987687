"""Command-line front end for the toolkit.

Subcommands
    validate   schema-check a standoff corpus, listing violations
    stats      corpus statistics (entity/role/event counts, length summaries)
    encode     dump NER and relation task files as JSON Lines records
    train      fit the baseline (or drive a protocol server's training)
    predict    annotate raw text with a trained model
    score      compare predictions against gold annotations
    iaa        inter-annotator agreement between two versions of a corpus
    cv         repeated cross-validation with CSV results and JSON summary
    compare    corrected resampled t-test between two results files
    fixture    generate the synthetic evaluation corpus
    export     mirror a corpus into a subject/study folder tree

Exit codes: 0 success; 1 violations found (or, for compare, a significant
difference at --alpha); 2 usage error; 3 I/O, format, or protocol failure.
All randomness flows from --seed; outputs are deterministic given the flags.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from .baseline import BaselineError
from .encoding import DEFAULT_MARKERS, EncodeCounters, EncodingError, encode_text
from .experiments import (ExperimentError, compare_results, read_manifest,
                          read_results_csv, repeat_cv, summarize,
                          write_results_csv)
from .fixture import gen_fixture, write_fixture
from .pipeline import (align_corpus, load_pipeline, make_trainer, predict_text,
                       predict_with, report_metrics, save_pipeline,
                       score_corpus, train_pipeline, training_data)
from .protocol import (ProtocolConfig, ProtocolError, candidate_payload,
                       encode_record, open_session)
from .schema import SchemaError, default_schema, load_schema
from .scoring import (ScoringError, corpus_stats, pairwise_iaa, report_rows,
                      stats_rows, write_report_csv, write_stats_csv)
from .standoff import (StandoffError, iter_corpus, parse_ann, serialize_ann,
                       to_events, write_document)
from .textproc import CoverageError

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_FAILURE = 3

_ERRORS = (StandoffError, SchemaError, EncodingError, ScoringError,
           ExperimentError, BaselineError, ProtocolError, CoverageError,
           OSError, json.JSONDecodeError)


def _schema_for(arg: str | None):
    if arg in (None, "default"):
        return default_schema()
    return load_schema(Path(arg).read_text(encoding="utf-8"))


def _read_corpus(root: str):
    docs = list(iter_corpus(root))
    if not docs:
        raise StandoffError(f"{root}: no .txt documents found")
    return docs


def _endpoint_config(endpoint: str, **kw) -> ProtocolConfig:
    """host:port connects a socket; anything else is a command line."""
    host, sep, port = endpoint.rpartition(":")
    if sep and " " not in endpoint and port.isdigit():
        return ProtocolConfig(address=(host, int(port)), **kw)
    return ProtocolConfig(command=tuple(shlex.split(endpoint)), **kw)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _print_table(rows: list[dict[str, str]]) -> None:
    if not rows:
        return
    cols = list(rows[0])
    widths = [max(len(c), *(len(r[c]) for r in rows)) for c in cols]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip())
    for r in rows:
        print("  ".join(r[c].ljust(w) for c, w in zip(cols, widths)).rstrip())


# -- subcommands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    schema = _schema_for(args.schema)
    lines = []
    total = 0
    for doc in _read_corpus(args.corpus):
        _, violations = to_events(doc, schema, strict=args.strict)
        total += len(violations)
        lines.extend(f"{doc.doc_id}: {v}" for v in violations)
    lines.append(f"{total} violations")
    _emit("\n".join(lines), args.out)
    return EXIT_FINDINGS if total else EXIT_OK


def cmd_stats(args) -> int:
    schema = _schema_for(args.schema)
    stats = corpus_stats(_read_corpus(args.corpus), schema)
    _print_table(stats_rows(stats))
    if args.out:
        write_stats_csv(stats, args.out)
    return EXIT_OK


def cmd_encode(args) -> int:
    schema = _schema_for(args.schema)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    counters = EncodeCounters()
    n_sent = n_cand = 0
    with open(out / "ner.jsonl", "w", encoding="utf-8") as ner_fh, \
            open(out / "re.jsonl", "w", encoding="utf-8") as re_fh:
        for doc in _read_corpus(args.corpus):
            events, _ = to_events(doc, schema, strict=args.strict)
            sentences, c = encode_text(doc.text, events, schema,
                                       DEFAULT_MARKERS)
            counters = counters.add(c)
            for s in sentences:
                n_sent += 1
                ner_fh.write(encode_record(
                    {"kind": "ner", "doc": doc.doc_id, "sentence": s.index,
                     "tokens": list(s.tokens), "labels": list(s.labels)}))
                for cand in s.candidates:
                    n_cand += 1
                    re_fh.write(encode_record(
                        {"kind": "re", "doc": doc.doc_id,
                         **candidate_payload(cand, with_gold=True)}))
    print(f"{n_sent} sentences -> {out / 'ner.jsonl'}")
    print(f"{n_cand} candidates -> {out / 're.jsonl'}")
    print(f"counters: merges={counters.merges} "
          f"label_conflicts={counters.label_conflicts} "
          f"cross_sentence_links={counters.cross_sentence_links} "
          f"overlap_skipped={counters.overlap_skipped}")
    return EXIT_OK


def _train_over_wire(args, docs, schema) -> int:
    pairs, cands, _ = training_data(docs, schema, DEFAULT_MARKERS)
    labeled = [p for p in pairs if any(lab != "O" for lab in p[1])]
    step = 16
    ner_batches = [labeled[i:i + step] for i in range(0, len(labeled), step)]
    re_batches = [cands[i:i + step] for i in range(0, len(cands), step)]
    with open_session(_endpoint_config(args.endpoint)) as session:
        caps = session.handshake()
        if not caps.training:
            raise ProtocolError("server does not accept training")
        report = session.train_session(ner_batches, re_batches,
                                       schedule_seed=args.seed,
                                       epochs=args.epochs)
    _emit(json.dumps(report, sort_keys=True, indent=2), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    schema = _schema_for(args.schema)
    docs = _read_corpus(args.corpus)
    if args.endpoint:
        return _train_over_wire(args, docs, schema)
    if not args.model:
        print("error: train needs --model (or --endpoint)", file=sys.stderr)
        return EXIT_USAGE
    pipe = train_pipeline(docs, schema, epochs=args.epochs, seed=args.seed)
    save_pipeline(pipe, args.model)
    print(f"trained on {len(docs)} documents ({args.epochs} epochs, "
          f"seed {args.seed}) -> {args.model}")
    return EXIT_OK


def _check_roundtrip(doc, schema) -> None:
    """Predicted output must re-parse and validate cleanly; anything else
    is a bug in assembly, not user error."""
    reparsed = parse_ann(doc.doc_id, doc.text, serialize_ann(doc))
    _, violations = to_events(reparsed, schema)
    if violations:
        raise StandoffError(
            f"{doc.doc_id}: predicted annotations failed validation: "
            f"{violations[0]}")


def cmd_predict(args) -> int:
    schema = _schema_for(args.schema)
    if bool(args.model) == bool(args.endpoint):
        print("error: predict needs exactly one of --model/--endpoint",
              file=sys.stderr)
        return EXIT_USAGE
    docs = _read_corpus(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.model:
        pipe = load_pipeline(args.model)
        if args.jobs > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                preds = list(pool.map(
                    lambda d: predict_text(pipe, d.doc_id, d.text, schema),
                    docs))
        else:
            preds = [predict_text(pipe, d.doc_id, d.text, schema)
                     for d in docs]
    else:
        with open_session(_endpoint_config(args.endpoint)) as session:
            session.handshake()
            preds = [predict_with(session.tag_batch, session.rel_batch,
                                  d.doc_id, d.text, schema, DEFAULT_MARKERS)
                     for d in docs]

    for pred in preds:
        _check_roundtrip(pred, schema)
        write_document(pred, out)
    print(f"wrote {len(preds)} predicted documents -> {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    schema = _schema_for(args.schema)
    gold = _read_corpus(args.corpus)
    pred = _read_corpus(args.pred)
    violations = sum(len(to_events(doc, schema, strict=args.strict)[1])
                     for doc in gold + pred)
    report = score_corpus(gold, pred, schema)
    _print_table(report_rows(report))
    if args.out:
        write_report_csv(report, args.out)
    if violations:
        print(f"{violations} annotation violations", file=sys.stderr)
        return EXIT_FINDINGS
    return EXIT_OK


def cmd_iaa(args) -> int:
    schema = _schema_for(args.schema)
    a = align_corpus(_read_corpus(args.corpus), schema)
    b = align_corpus(_read_corpus(args.pred), schema)
    report = pairwise_iaa(a, b, schema)
    _print_table(report_rows(report))
    if args.out:
        write_report_csv(report, args.out)
    return EXIT_OK


def cmd_cv(args) -> int:
    config = {"schema": "default", "model": "baseline", "seed": "7",
              "repeats": "10", "rho": "0.125", "epochs": "5", "jobs": "1"}
    if args.manifest:
        config.update(read_manifest(args.manifest))
    if args.corpus:
        config["corpus"] = args.corpus
    for key in ("schema", "seed", "repeats", "rho", "epochs", "jobs"):
        value = getattr(args, key)
        if value is not None:
            config[key] = str(value)
    if "corpus" not in config:
        print("error: cv needs --corpus or a manifest with one",
              file=sys.stderr)
        return EXIT_USAGE

    schema = _schema_for(config["schema"])
    docs = _read_corpus(config["corpus"])
    corpus = {d.doc_id: d for d in docs}
    trainer = make_trainer(corpus, schema, epochs=int(config["epochs"]))
    results = repeat_cv(sorted(corpus), trainer,
                        n_repeats=int(config["repeats"]),
                        base_seed=int(config["seed"]),
                        jobs=int(config["jobs"]))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(results, out / "results.csv")
    # jobs is an execution detail, not part of the experiment's identity,
    # so the summary must not vary with it
    summary = {"config": {k: v for k, v in config.items() if k != "jobs"},
               "runs": len(results),
               "metrics": summarize(results)}
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    for metric, stats in summary["metrics"].items():
        print(f"{metric}: {stats['mean']:.4f} +/- {stats['ci95_half']:.4f} "
              f"(n={stats['n']})")
    print(f"results -> {out / 'results.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = read_results_csv(args.results_a)
    b = read_results_csv(args.results_b)
    metrics_a = {name for r in a for name, _ in r.scores}
    metrics_b = {name for r in b for name, _ in r.scores}
    metrics = [args.metric] if args.metric else sorted(metrics_a & metrics_b)
    if not metrics:
        raise ExperimentError("the two results files share no metrics")

    blocks = {}
    significant = False
    for metric in metrics:
        tt = compare_results(a, b, metric, rho=args.rho)
        blocks[metric] = {"k": tt.k, "mean_diff": tt.mean_diff, "t": tt.t,
                          "df": tt.df, "p": tt.p,
                          "significant": tt.significant(args.alpha)}
        significant = significant or blocks[metric]["significant"]
    out = {"alpha": args.alpha, "rho": args.rho, "tests": blocks}
    _emit(json.dumps(out, sort_keys=True, indent=2), args.out)
    return EXIT_FINDINGS if significant else EXIT_OK


def cmd_fixture(args) -> int:
    docs = gen_fixture(args.seed, args.n_docs)
    write_fixture(docs, args.out)
    print(f"wrote {len(docs)} documents -> {args.out}")
    return EXIT_OK


def cmd_export(args) -> int:
    out = Path(args.out)
    seen: dict[Path, str] = {}
    count = 0
    for doc in _read_corpus(args.corpus):
        subject, sep, study = doc.doc_id.partition("-")
        if not sep:
            subject = study = doc.doc_id
        target = out / subject[:3] / subject / f"{study}.txt"
        if target in seen:
            raise StandoffError(f"{doc.doc_id}: export path {target} "
                                f"collides with {seen[target]}")
        seen[target] = doc.doc_id
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(doc.text, encoding="utf-8")
        target.with_suffix(".ann").write_text(serialize_ann(doc),
                                              encoding="utf-8")
        count += 1
    print(f"exported {count} documents -> {out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radevents",
        description="Event-based clinical findings toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_: str, **defaults):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func, **defaults)
        return p

    def corpus_flags(p, schema_default="default"):
        p.add_argument("--corpus", required=True,
                       help="directory of <id>.txt/<id>.ann pairs")
        p.add_argument("--schema", default=schema_default,
                       help="schema config path, or 'default'")

    p = add("validate", cmd_validate, "schema-check a corpus")
    corpus_flags(p)
    p.add_argument("--strict", action="store_true",
                   help="also flag repeats of single-valued arguments")
    p.add_argument("--out", help="write the violation list to a file")

    p = add("stats", cmd_stats, "corpus statistics")
    corpus_flags(p)
    p.add_argument("--out", help="write statistics CSV here")

    p = add("encode", cmd_encode, "dump NER/relation task files")
    corpus_flags(p)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True, help="output directory")

    p = add("train", cmd_train, "train the baseline extractor")
    corpus_flags(p)
    p.add_argument("--model", help="where to save the trained model")
    p.add_argument("--endpoint",
                   help="train a protocol server instead: host:port or a "
                        "command line")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--out", help="write the wire-training report here")

    p = add("predict", cmd_predict, "annotate text with a trained model")
    corpus_flags(p)
    p.add_argument("--model", help="trained pipeline JSON")
    p.add_argument("--endpoint", help="predict via a protocol server")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output corpus directory")

    p = add("score", cmd_score, "score predictions against gold")
    corpus_flags(p)
    p.add_argument("--pred", required=True, help="predicted corpus directory")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", help="write the score report CSV here")

    p = add("iaa", cmd_iaa, "inter-annotator agreement")
    corpus_flags(p)
    p.add_argument("--pred", required=True,
                   help="the second annotator's corpus directory")
    p.add_argument("--out", help="write the agreement report CSV here")

    p = add("cv", cmd_cv, "repeated cross-validation")
    p.add_argument("--manifest", help="experiment manifest (key = value "
                                      "lines); flags override it")
    p.add_argument("--corpus")
    p.add_argument("--schema")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True, help="output directory")

    p = add("compare", cmd_compare, "t-test between two results files")
    p.add_argument("results_a", help="results CSV for system A")
    p.add_argument("results_b", help="results CSV for system B")
    p.add_argument("--metric", help="test one metric (default: all shared)")
    p.add_argument("--rho", type=float, default=0.125,
                   help="test/train size ratio of the split")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", help="write the test report JSON here")

    p = add("fixture", cmd_fixture, "generate the synthetic corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-docs", type=int, default=200)

    p = add("export", cmd_export, "mirror into a subject/study folder tree")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="root of the folder tree")

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_OK if exit_.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except _ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
