"""Evaluation semantics: token-level entity scoring, trigger-aligned
argument-role scoring with kind-specific equivalence, pairwise-F1 agreement,
and corpus statistics.

Both sides of a comparison are aligned to the same deterministic tokenization
of the raw text, so entity credit is counted in document-global token units.
Events are matched by trigger: candidate pairs share an event type and
overlap in at least one trigger token, and the greedy maximum-overlap
one-to-one matching (ties by smallest (gold start, pred start) character
offsets, then event order) decides. Within matched events, span-only roles
score as token-set overlap (partial spans earn partial credit) and
span-with-value roles score as value-multiset matching with spans ignored.
The matching rule is symmetric under swapping gold and prediction, which
makes pairwise agreement F1 direction-independent.
"""

from __future__ import annotations

import csv
import json
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .schema import SPAN_ONLY, SPAN_WITH_VALUE, EventSchema
from .standoff import AnnotationDoc, Event, to_events
from .textproc import cover_tokens, tokenize_document


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        if self.tp == self.fp == self.fn == 0:
            return 1.0
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        if self.tp == self.fp == self.fn == 0:
            return 1.0
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        if self.tp == self.fp == self.fn == 0:
            return 1.0
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass(frozen=True)
class AlignedEntity:
    label: str
    tokens: frozenset[int]      # document-global token ids
    value: str | None
    start: int                  # character start, used only for tie-breaks


@dataclass(frozen=True)
class AlignedEvent:
    event_type: str
    trigger: AlignedEntity
    args: tuple[tuple[str, AlignedEntity], ...]


@dataclass(frozen=True)
class AlignedDoc:
    doc_id: str
    events: tuple[AlignedEvent, ...]
    n_tokens: int


def align_doc(doc_id: str, text: str, events: Sequence[Event],
              schema: EventSchema) -> AlignedDoc:
    """Map char-space events onto the document's global token ids. Gold and
    prediction must both pass through here so token units agree."""
    sents = tokenize_document(text)
    base: list[int] = []
    acc = 0
    for s in sents:
        base.append(acc)
        acc += len(s.tokens)

    def cover(fragments) -> frozenset[int]:
        return frozenset(base[si] + ti for si, ti in cover_tokens(sents, fragments))

    out = []
    for ev in events:
        et = schema.event_type(ev.event_type)
        trig = AlignedEntity(et.trigger_label, cover(ev.trigger), None,
                             min(a for a, _ in ev.trigger))
        args = []
        for arg in ev.args:
            _, adef = schema.resolve_role(arg.role)
            value = arg.value if adef.kind == SPAN_WITH_VALUE else None
            args.append((arg.role,
                         AlignedEntity(adef.entity_label, cover(arg.fragments),
                                       value, min(a for a, _ in arg.fragments))))
        out.append(AlignedEvent(et.name, trig, tuple(args)))
    return AlignedDoc(doc_id, tuple(out), acc)


def _doc_entities(doc: AlignedDoc) -> Iterable[AlignedEntity]:
    for ev in doc.events:
        yield ev.trigger
        for _, ent in ev.args:
            yield ent


def _check_same_docs(gold: Sequence[AlignedDoc], pred: Sequence[AlignedDoc]) -> None:
    g, p = {d.doc_id for d in gold}, {d.doc_id for d in pred}
    if g != p:
        missing, extra = sorted(g - p), sorted(p - g)
        raise ScoringError(f"document sets differ: missing from prediction "
                           f"{missing}, unexpected {extra}")
    if len(g) != len(gold) or len(p) != len(pred):
        raise ScoringError("duplicate doc ids in scoring input")


# -- token-level entity scoring ---------------------------------------------------

def score_entities_token(gold: Sequence[AlignedDoc], pred: Sequence[AlignedDoc],
                         ) -> tuple[dict[str, Metrics], dict[tuple[str, str], Metrics]]:
    """Per-label token credit: tp = tokens carried by the label on both sides.
    Returns (per-label, per-(label,value) breakdown for valued entities)."""
    _check_same_docs(gold, pred)
    pred_by_id = {d.doc_id: d for d in pred}

    def collect(doc: AlignedDoc):
        by_label: dict[str, set] = {}
        by_value: dict[tuple[str, str], set] = {}
        for ent in _doc_entities(doc):
            pts = {(doc.doc_id, t) for t in ent.tokens}
            by_label.setdefault(ent.label, set()).update(pts)
            if ent.value is not None:
                by_value.setdefault((ent.label, ent.value), set()).update(pts)
        return by_label, by_value

    def merge(acc, new):
        for k, pts in new.items():
            acc.setdefault(k, set()).update(pts)

    g_label: dict[str, set] = {}
    g_value: dict[tuple[str, str], set] = {}
    p_label: dict[str, set] = {}
    p_value: dict[tuple[str, str], set] = {}
    for gdoc in gold:
        bl, bv = collect(gdoc)
        merge(g_label, bl)
        merge(g_value, bv)
        bl, bv = collect(pred_by_id[gdoc.doc_id])
        merge(p_label, bl)
        merge(p_value, bv)

    def tally(g: Mapping, p: Mapping) -> dict:
        out = {}
        for key in sorted(set(g) | set(p), key=str):
            gs, ps = g.get(key, set()), p.get(key, set())
            out[key] = Metrics(len(gs & ps), len(ps - gs), len(gs - ps))
        return out

    return tally(g_label, p_label), tally(g_value, p_value)


# -- trigger alignment and role scoring ---------------------------------------------

def align_triggers(gold_events: Sequence[AlignedEvent],
                   pred_events: Sequence[AlignedEvent]) -> list[tuple[int, int]]:
    """Greedy max-overlap one-to-one matching of same-type events whose
    triggers share at least one token. Deterministic and symmetric: running
    it with the arguments swapped yields the transposed pairs."""
    pairs = []
    for gi, g in enumerate(gold_events):
        for pi, p in enumerate(pred_events):
            if g.event_type != p.event_type:
                continue
            ov = len(g.trigger.tokens & p.trigger.tokens)
            if ov:
                pairs.append((-ov, (g.trigger.start, gi), (p.trigger.start, pi),
                              gi, pi))
    pairs.sort()
    used_g: set[int] = set()
    used_p: set[int] = set()
    out = []
    for _, _, _, gi, pi in pairs:
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
        out.append((gi, pi))
    return sorted(out)


@dataclass
class RoleScores:
    trigger_by_type: dict[str, Metrics] = field(default_factory=dict)
    roles: dict[str, Metrics] = field(default_factory=dict)
    unmatched_gold: int = 0
    unmatched_pred: int = 0

    def merge(self, other: "RoleScores") -> None:
        for k, m in other.trigger_by_type.items():
            self.trigger_by_type[k] = self.trigger_by_type.get(k, Metrics()) + m
        for k, m in other.roles.items():
            self.roles[k] = self.roles.get(k, Metrics()) + m
        self.unmatched_gold += other.unmatched_gold
        self.unmatched_pred += other.unmatched_pred


def _role_units(ev: AlignedEvent, schema: EventSchema) -> dict[str, tuple[str, object]]:
    """Scoring payload per role of one event: (kind, token set) for span-only
    roles, (kind, value multiset) for span-with-value roles."""
    units: dict[str, tuple[str, object]] = {}
    for role, ent in ev.args:
        _, adef = schema.resolve_role(role)
        if adef.kind == SPAN_ONLY:
            kind, tokens = units.get(role, (SPAN_ONLY, frozenset()))
            units[role] = (SPAN_ONLY, tokens | ent.tokens)
        else:
            kind, counts = units.get(role, (SPAN_WITH_VALUE, Counter()))
            counts = counts + Counter([ent.value])
            units[role] = (SPAN_WITH_VALUE, counts)
    return units


def score_roles(gold: AlignedDoc, pred: AlignedDoc,
                schema: EventSchema) -> RoleScores:
    out = RoleScores()
    matched = align_triggers(gold.events, pred.events)
    matched_g = {gi for gi, _ in matched}
    matched_p = {pi for _, pi in matched}

    for et in {e.event_type for e in gold.events} | {e.event_type for e in pred.events}:
        g_of_type = [i for i, e in enumerate(gold.events) if e.event_type == et]
        p_of_type = [i for i, e in enumerate(pred.events) if e.event_type == et]
        tp = sum(1 for gi, _ in matched if gold.events[gi].event_type == et)
        m = Metrics(tp, len(p_of_type) - tp, len(g_of_type) - tp)
        out.trigger_by_type[et] = out.trigger_by_type.get(et, Metrics()) + m

    def add_role(role: str, m: Metrics) -> None:
        out.roles[role] = out.roles.get(role, Metrics()) + m

    for gi, pi in matched:
        g_units = _role_units(gold.events[gi], schema)
        p_units = _role_units(pred.events[pi], schema)
        for role in set(g_units) | set(p_units):
            kind = (g_units.get(role) or p_units.get(role))[0]
            if kind == SPAN_ONLY:
                gt = g_units.get(role, (kind, frozenset()))[1]
                pt = p_units.get(role, (kind, frozenset()))[1]
                add_role(role, Metrics(len(gt & pt), len(pt - gt), len(gt - pt)))
            else:
                gc = g_units.get(role, (kind, Counter()))[1]
                pc = p_units.get(role, (kind, Counter()))[1]
                hit = sum((gc & pc).values())
                add_role(role, Metrics(hit, sum(pc.values()) - hit,
                                       sum(gc.values()) - hit))

    def unmatched(ev: AlignedEvent, gold_side: bool) -> None:
        for role, (kind, payload) in _role_units(ev, schema).items():
            n = len(payload) if kind == SPAN_ONLY else sum(payload.values())
            add_role(role, Metrics(0, 0, n) if gold_side else Metrics(0, n, 0))

    for gi, ev in enumerate(gold.events):
        if gi not in matched_g:
            out.unmatched_gold += 1
            unmatched(ev, gold_side=True)
    for pi, ev in enumerate(pred.events):
        if pi not in matched_p:
            out.unmatched_pred += 1
            unmatched(ev, gold_side=False)
    return out


# -- full report ----------------------------------------------------------------------

@dataclass
class ScoreReport:
    entity_tokens: dict[str, Metrics]
    entity_values: dict[tuple[str, str], Metrics]
    entity_overall: Metrics
    trigger_by_type: dict[str, Metrics]
    trigger: Metrics
    roles: dict[str, Metrics]
    span_only: Metrics
    span_with_value: Metrics
    diagnostics: dict[str, int]


def _sum(metrics: Iterable[Metrics]) -> Metrics:
    total = Metrics()
    for m in metrics:
        total = total + m
    return total


def score_reports(gold: Sequence[AlignedDoc], pred: Sequence[AlignedDoc],
                  schema: EventSchema) -> ScoreReport:
    _check_same_docs(gold, pred)
    pred_by_id = {d.doc_id: d for d in pred}
    per_label, per_value = score_entities_token(gold, pred)
    acc = RoleScores()
    for gdoc in gold:
        acc.merge(score_roles(gdoc, pred_by_id[gdoc.doc_id], schema))
    span_only_roles = [r for r in schema.roles()
                       if schema.resolve_role(r)[1].kind == SPAN_ONLY]
    value_roles = [r for r in schema.roles()
                   if schema.resolve_role(r)[1].kind == SPAN_WITH_VALUE]
    return ScoreReport(
        entity_tokens=per_label,
        entity_values=per_value,
        entity_overall=_sum(per_label.values()),
        trigger_by_type=dict(sorted(acc.trigger_by_type.items())),
        trigger=_sum(acc.trigger_by_type.values()),
        roles=dict(sorted(acc.roles.items())),
        span_only=_sum(acc.roles.get(r, Metrics()) for r in span_only_roles),
        span_with_value=_sum(acc.roles.get(r, Metrics()) for r in value_roles),
        diagnostics={"unmatched_gold_events": acc.unmatched_gold,
                     "unmatched_pred_events": acc.unmatched_pred})


def pairwise_iaa(a: Sequence[AlignedDoc], b: Sequence[AlignedDoc],
                 schema: EventSchema) -> ScoreReport:
    """Agreement between two annotators: one side scored as prediction
    against the other as gold. Every reported F1 is invariant under swapping
    the two annotators (precision and recall trade places)."""
    return score_reports(a, b, schema)


# -- corpus statistics -------------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    n: int
    min: float | None = None
    mean: float | None = None
    median: float | None = None
    max: float | None = None

    @classmethod
    def of(cls, values: Sequence[float]) -> "Summary":
        if not values:
            return cls(0)
        return cls(len(values), min(values), statistics.fmean(values),
                   statistics.median(values), max(values))


@dataclass
class CorpusStats:
    docs: int
    entity_counts: dict[str, int]
    role_counts: dict[str, int]
    event_counts: dict[str, int]
    words_per_report: Summary
    events_per_report: Summary
    events_per_type_per_report: dict[str, Summary]
    args_per_event: Summary


def corpus_stats(docs: Sequence[AnnotationDoc], schema: EventSchema) -> CorpusStats:
    entity_counts: dict[str, int] = {}
    role_counts: dict[str, int] = {}
    event_counts: dict[str, int] = {}
    words: list[float] = []
    events_n: list[float] = []
    per_type: dict[str, list[float]] = {et.name: [] for et in schema.event_types}
    args_per_event: list[float] = []
    for doc in docs:
        for t in doc.textbounds:
            try:
                label, _ = schema.split_value_label(t.label)
            except Exception:
                try:
                    schema.resolve_label(t.label)
                    label = t.label
                except Exception:
                    label = t.label
            entity_counts[label] = entity_counts.get(label, 0) + 1
        events, _ = to_events(doc, schema)
        words.append(sum(len(s.tokens) for s in tokenize_document(doc.text)))
        events_n.append(len(events))
        counts = {et.name: 0 for et in schema.event_types}
        for ev in events:
            counts[ev.event_type] = counts.get(ev.event_type, 0) + 1
            event_counts[ev.event_type] = event_counts.get(ev.event_type, 0) + 1
            args_per_event.append(len(ev.args))
            for arg in ev.args:
                role_counts[arg.role] = role_counts.get(arg.role, 0) + 1
        for name, c in counts.items():
            per_type.setdefault(name, []).append(c)
    return CorpusStats(
        docs=len(docs),
        entity_counts=dict(sorted(entity_counts.items())),
        role_counts=dict(sorted(role_counts.items())),
        event_counts=dict(sorted(event_counts.items())),
        words_per_report=Summary.of(words),
        events_per_report=Summary.of(events_n),
        events_per_type_per_report={k: Summary.of(v) for k, v in per_type.items()},
        args_per_event=Summary.of(args_per_event))


# -- emission ---------------------------------------------------------------------------

_CSV_COLUMNS = ("section", "name", "value", "tp", "fp", "fn",
                "precision", "recall", "f1")


def report_rows(report: ScoreReport) -> list[dict[str, str]]:
    """Flatten a ScoreReport for CSV output. Columns: section (entity |
    entity-value | trigger-type | trigger | role | rollup | diagnostic),
    name, value (categorical value for entity-value rows), integer tp/fp/fn,
    and precision/recall/f1 at 4 decimals."""
    rows: list[dict[str, str]] = []

    def add(section: str, name: str, m: Metrics, value: str = "") -> None:
        rows.append({
            "section": section, "name": name, "value": value,
            "tp": str(m.tp), "fp": str(m.fp), "fn": str(m.fn),
            "precision": f"{m.precision:.4f}", "recall": f"{m.recall:.4f}",
            "f1": f"{m.f1:.4f}"})

    for label, m in report.entity_tokens.items():
        add("entity", label, m)
    add("entity", "OVERALL", report.entity_overall)
    for (label, value), m in report.entity_values.items():
        add("entity-value", label, m, value)
    for et, m in report.trigger_by_type.items():
        add("trigger-type", et, m)
    add("trigger", "Trigger", report.trigger)
    for role, m in report.roles.items():
        add("role", role, m)
    add("rollup", "span-only", report.span_only)
    add("rollup", "span-with-value", report.span_with_value)
    for k, v in report.diagnostics.items():
        rows.append({"section": "diagnostic", "name": k, "value": str(v),
                     "tp": "", "fp": "", "fn": "",
                     "precision": "", "recall": "", "f1": ""})
    return rows


def write_report_csv(report: ScoreReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS)
        w.writeheader()
        w.writerows(report_rows(report))


def report_json(report: ScoreReport) -> dict:
    def metric(m: Metrics) -> dict:
        return {"tp": m.tp, "fp": m.fp, "fn": m.fn,
                "precision": m.precision, "recall": m.recall, "f1": m.f1}

    return {
        "entity": {k: metric(m) for k, m in report.entity_tokens.items()},
        "entity_overall": metric(report.entity_overall),
        "entity_values": {f"{k[0]}={k[1]}": metric(m)
                          for k, m in report.entity_values.items()},
        "trigger_by_type": {k: metric(m) for k, m in report.trigger_by_type.items()},
        "trigger": metric(report.trigger),
        "roles": {k: metric(m) for k, m in report.roles.items()},
        "span_only": metric(report.span_only),
        "span_with_value": metric(report.span_with_value),
        "diagnostics": dict(report.diagnostics)}


def stats_rows(stats: CorpusStats) -> list[dict[str, str]]:
    rows = [{"section": "corpus", "name": "documents", "count": str(stats.docs),
             "min": "", "mean": "", "median": "", "max": ""}]

    def counts(section: str, d: Mapping[str, int]) -> None:
        for k, v in d.items():
            rows.append({"section": section, "name": k, "count": str(v),
                         "min": "", "mean": "", "median": "", "max": ""})

    counts("entities", stats.entity_counts)
    counts("roles", stats.role_counts)
    counts("events", stats.event_counts)

    def summary(name: str, s: Summary) -> None:
        def fmt(x):
            return "" if x is None else f"{x:.4f}"
        rows.append({"section": "per-report", "name": name, "count": str(s.n),
                     "min": fmt(s.min), "mean": fmt(s.mean),
                     "median": fmt(s.median), "max": fmt(s.max)})

    summary("words", stats.words_per_report)
    summary("events", stats.events_per_report)
    for et, s in stats.events_per_type_per_report.items():
        summary(f"events[{et}]", s)
    summary("args-per-event", stats.args_per_event)
    return rows


def write_stats_csv(stats: CorpusStats, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=("section", "name", "count", "min",
                                           "mean", "median", "max"))
        w.writeheader()
        w.writerows(stats_rows(stats))
