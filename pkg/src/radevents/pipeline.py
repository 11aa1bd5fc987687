"""Document-level glue: turn annotated documents into training data for the
two baseline models, run the full extraction pipeline over raw text, and
adapt a trained corpus to the cross-validation harness.

The prediction path re-derives everything from text alone — sentences are
re-tokenized, tagged, decoded back into entities, paired into relation
candidates and assembled into events — so its output is exactly what a
fresh client would get from the same models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .baseline import (BaselineError, RelModel, TaggerModel, classify,
                       model_blob, model_from_blob, train_rel, train_tagger, tag)
from .encoding import (DEFAULT_MARKERS, NO_RELATION, EncodeCounters,
                       MarkerConfig, assemble_events, bio_decode, encode_text,
                       gen_candidates, sentence_events_to_char)
from .experiments import CVTask
from .schema import EventSchema
from .scoring import AlignedDoc, ScoreReport, align_doc, score_reports
from .standoff import AnnotationDoc, from_events, to_events


@dataclass(frozen=True)
class Pipeline:
    tagger: TaggerModel
    rel: RelModel

    @property
    def markers(self) -> MarkerConfig:
        return MarkerConfig(*self.rel.markers)


TrainingData = tuple[list, list, EncodeCounters]


def training_data(docs: Sequence[AnnotationDoc], schema: EventSchema,
                  markers: MarkerConfig = DEFAULT_MARKERS) -> TrainingData:
    """(tagged sentence pairs, relation candidates, encode counters) over a
    corpus. Events the schema cannot resolve are skipped, mirroring the
    lenient reader; run validation separately to see them."""
    pairs, cands = [], []
    counters = EncodeCounters()
    for doc in docs:
        events, _ = to_events(doc, schema)
        sents, c = encode_text(doc.text, events, schema, markers)
        counters = counters.add(c)
        for s in sents:
            pairs.append((s.tokens, s.labels))
            cands.extend(s.candidates)
    return pairs, cands, counters


def train_pipeline(train_docs: Sequence[AnnotationDoc], schema: EventSchema,
                   epochs: int = 5, seed: int = 0,
                   val_docs: Sequence[AnnotationDoc] = (), patience: int = 3,
                   markers: MarkerConfig = DEFAULT_MARKERS) -> Pipeline:
    pairs, cands, _ = training_data(train_docs, schema, markers)
    val_pairs, val_cands, _ = (training_data(val_docs, schema, markers)
                               if val_docs else ([], [], None))
    tagger = train_tagger(pairs, schema, epochs=epochs, seed=seed,
                          val=val_pairs, patience=patience)
    if not cands:
        raise BaselineError("no relation candidates in the training corpus")
    rel = train_rel(cands, schema, epochs=epochs, seed=seed, val=val_cands,
                    patience=patience, markers=markers)
    return Pipeline(tagger, rel)


def predict_with(tag_batch_fn, rel_batch_fn, doc_id: str, text: str,
                 schema: EventSchema,
                 markers: MarkerConfig = DEFAULT_MARKERS) -> AnnotationDoc:
    """Extraction core with pluggable model calls, shared by the in-process
    models and the wire-protocol client so both paths produce identical
    output from identical predictions. tag_batch_fn maps a list of token
    sequences to label sequences; rel_batch_fn maps candidates to roles."""
    sents, _ = encode_text(text, [], schema, markers)
    label_seqs = tag_batch_fn([s.tokens for s in sents]) if sents else []
    staged = []
    all_cands: list = []
    for s, labels in zip(sents, label_seqs):
        entities = bio_decode(labels, schema)
        cands, _ = gen_candidates(s.tokens, entities, schema, markers,
                                  sentence_index=s.index)
        staged.append((s, entities, cands))
        all_cands.extend(cands)
    roles = rel_batch_fn(all_cands) if all_cands else []
    events = []
    at = 0
    for s, entities, cands in staged:
        relations = []
        for c in cands:
            role = roles[at]
            at += 1
            if role != NO_RELATION:
                relations.append((c.trigger_index, c.arg_index, role))
        sent_events = assemble_events(entities, relations, schema)
        events.extend(sentence_events_to_char(sent_events, s))
    return from_events(doc_id, text, events, schema)


def predict_text(pipe: Pipeline, doc_id: str, text: str,
                 schema: EventSchema) -> AnnotationDoc:
    """Extract events from raw text with a trained pipeline."""
    return predict_with(
        lambda sentences: [tag(pipe.tagger, t) for t in sentences],
        lambda cands: [classify(pipe.rel, c) for c in cands],
        doc_id, text, schema, pipe.markers)


def predict_docs(pipe: Pipeline, docs: Sequence[AnnotationDoc],
                 schema: EventSchema) -> list[AnnotationDoc]:
    return [predict_text(pipe, d.doc_id, d.text, schema) for d in docs]


# -- scoring shortcuts --------------------------------------------------------------


def align_corpus(docs: Sequence[AnnotationDoc],
                 schema: EventSchema) -> list[AlignedDoc]:
    out = []
    for d in docs:
        events, _ = to_events(d, schema)
        out.append(align_doc(d.doc_id, d.text, events, schema))
    return out


def score_corpus(gold: Sequence[AnnotationDoc], pred: Sequence[AnnotationDoc],
                 schema: EventSchema) -> ScoreReport:
    return score_reports(align_corpus(gold, schema), align_corpus(pred, schema),
                         schema)


METRIC_KEYS = ("entity_f1", "trigger_f1", "role_f1", "span_only_f1",
               "span_value_f1")


def report_metrics(report: ScoreReport) -> dict[str, float]:
    """The headline numbers the CV harness tracks per fold."""
    role_total = report.span_only + report.span_with_value
    return {"entity_f1": report.entity_overall.f1,
            "trigger_f1": report.trigger.f1,
            "role_f1": role_total.f1,
            "span_only_f1": report.span_only.f1,
            "span_value_f1": report.span_with_value.f1}


def make_trainer(corpus: Mapping[str, AnnotationDoc], schema: EventSchema,
                 epochs: int = 5,
                 markers: MarkerConfig = DEFAULT_MARKERS):
    """Adapt the baseline pipeline to the CV harness: each task trains on its
    train split (validating on val), predicts its test split from raw text
    and reports the headline F1 scores."""
    def trainer(task: CVTask) -> dict[str, float]:
        train = [corpus[i] for i in task.train]
        val = [corpus[i] for i in task.val]
        test = [corpus[i] for i in task.test]
        pipe = train_pipeline(train, schema, epochs=epochs, seed=task.seed,
                              val_docs=val, markers=markers)
        pred = predict_docs(pipe, test, schema)
        return report_metrics(score_corpus(test, pred, schema))
    return trainer


# -- persistence --------------------------------------------------------------------

_PIPELINE_FORMAT = "radevents-pipeline"
_PIPELINE_VERSION = 1


def save_pipeline(pipe: Pipeline, path: str | Path) -> None:
    blob = {"format": _PIPELINE_FORMAT, "version": _PIPELINE_VERSION,
            "tagger": model_blob(pipe.tagger), "rel": model_blob(pipe.rel)}
    Path(path).write_text(json.dumps(blob, sort_keys=True, indent=0),
                          encoding="utf-8")


def load_pipeline(path: str | Path) -> Pipeline:
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise BaselineError(f"{path}: not a pipeline file ({e})") from None
    if blob.get("format") != _PIPELINE_FORMAT:
        raise BaselineError(f"{path}: unknown pipeline format "
                            f"{blob.get('format')!r}")
    if blob.get("version") != _PIPELINE_VERSION:
        raise BaselineError(f"{path}: unsupported pipeline version "
                            f"{blob.get('version')!r}")
    tagger = model_from_blob(blob["tagger"], where=f"{path}#tagger")
    rel = model_from_blob(blob["rel"], where=f"{path}#rel")
    if not isinstance(tagger, TaggerModel) or not isinstance(rel, RelModel):
        raise BaselineError(f"{path}: component models have swapped formats")
    return Pipeline(tagger, rel)
