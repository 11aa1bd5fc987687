"""Task encodings: BIO-labeled token sequences and marker-bracketed
trigger--argument relation candidates, plus event assembly from predictions.

Sentences are independent samples. A document's char-space events are aligned
to tokens (``encode_text``), yielding per-sentence gold entities, BIO labels,
relation candidates and sentence-local events. Predictions travel the other
way: BIO labels decode to entities, positive relations assemble into events,
and token runs map back to character fragments.

Bookkeeping that the encoding cannot represent is counted, never silently
dropped: multi-label token conflicts, trigger/argument marker overlaps,
cross-sentence links and sentence merges all surface in ``EncodeCounters``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .schema import SPAN_WITH_VALUE, EventSchema, SchemaError
from .standoff import Event, EventArg
from .textproc import Sentence, cover_tokens, envelope, merge_straddling, tokenize_document

NO_RELATION = "No_relation"


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class MarkerConfig:
    trigger_open: str = "[unused0]"
    trigger_close: str = "[unused1]"
    arg_open: str = "[unused2]"
    arg_close: str = "[unused3]"

    def __post_init__(self) -> None:
        four = (self.trigger_open, self.trigger_close, self.arg_open, self.arg_close)
        if len(set(four)) != 4 or not all(four):
            raise EncodingError("marker strings must be four distinct non-empty tokens")

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.trigger_open, self.trigger_close, self.arg_open, self.arg_close)


DEFAULT_MARKERS = MarkerConfig()


@dataclass(frozen=True)
class TokenEntity:
    """A token-aligned entity: base label, covered token indices (sentence-local,
    sorted, possibly with gaps for discontinuous spans) and the categorical
    value for span-with-value labels."""

    label: str
    tokens: tuple[int, ...]
    value: str | None = None

    @property
    def first(self) -> int:
        return self.tokens[0]

    @property
    def span(self) -> tuple[int, int]:
        """Token envelope [first, last+1)."""
        return (self.tokens[0], self.tokens[-1] + 1)

    def tag_label(self) -> str:
        return self.label if self.value is None else f"{self.label}-{self.value}"


@dataclass(frozen=True)
class SentenceEvent:
    event_type: str
    trigger: TokenEntity
    args: tuple[tuple[str, TokenEntity], ...] = ()

    def normalized(self) -> "SentenceEvent":
        return SentenceEvent(self.event_type, self.trigger,
                             tuple(sorted(self.args,
                                          key=lambda ra: (ra[1].tokens, ra[0],
                                                          ra[1].value or ""))))


@dataclass(frozen=True)
class RelationCandidate:
    sentence_index: int
    event_type: str
    trigger_index: int                  # positions in the sentence entity list
    arg_index: int
    trigger_tokens: tuple[int, int]     # token envelope, sentence-local
    arg_tokens: tuple[int, int]
    arg_label: str
    arg_value: str | None
    marked_tokens: tuple[str, ...]
    gold_role: str = NO_RELATION
    allowed_roles: tuple[str, ...] = (NO_RELATION,)


@dataclass
class EncodeCounters:
    merges: int = 0
    label_conflicts: int = 0
    cross_sentence_links: int = 0
    overlap_skipped: int = 0

    def add(self, other: "EncodeCounters") -> "EncodeCounters":
        return EncodeCounters(
            self.merges + other.merges,
            self.label_conflicts + other.label_conflicts,
            self.cross_sentence_links + other.cross_sentence_links,
            self.overlap_skipped + other.overlap_skipped)


@dataclass(frozen=True)
class EncodedSentence:
    index: int
    start: int
    end: int
    tokens: tuple[str, ...]
    token_ranges: tuple[tuple[int, int], ...]
    entities: tuple[TokenEntity, ...]
    labels: tuple[str, ...]
    events: tuple[SentenceEvent, ...]
    candidates: tuple[RelationCandidate, ...]


# -- BIO ------------------------------------------------------------------------

def bio_encode(n_tokens: int, entities: Sequence[TokenEntity],
               schema: EventSchema) -> tuple[list[str], int]:
    """Label every token; the first token of an entity gets B-, the rest I-.
    A token claimed by several entities keeps the highest-precedence one
    (triggers beat arguments, then schema declaration order, then earlier
    entity in the list); the number of contested tokens is returned."""
    rank: dict[str, tuple[int, int, int]] = {}
    for ei, et in enumerate(schema.event_types):
        rank[et.trigger_label] = (0, ei, 0)
        for ai, a in enumerate(et.arguments):
            rank[a.entity_label] = (1, ei, ai)
    claims: dict[int, list[tuple[tuple[int, int, int], int, TokenEntity]]] = {}
    for order, ent in enumerate(entities):
        if ent.label not in rank:
            raise EncodingError(f"entity label {ent.label!r} not in schema")
        for t in ent.tokens:
            if not 0 <= t < n_tokens:
                raise EncodingError(f"token index {t} outside sentence of "
                                    f"{n_tokens} tokens")
            claims.setdefault(t, []).append((rank[ent.label], order, ent))
    labels = ["O"] * n_tokens
    conflicts = 0
    for t, claimants in claims.items():
        if len(claimants) > 1:
            conflicts += 1
        _, _, winner = min(claimants)
        prefix = "B-" if t == winner.first else "I-"
        labels[t] = prefix + winner.tag_label()
    return labels, conflicts


def bio_decode(labels: Sequence[str], schema: EventSchema) -> list[TokenEntity]:
    """Maximal B/I runs become entities; a stray I-X with no live X run acts
    as B-X; value suffixes parse back into categorical values. Raises
    EncodingError on a label outside the schema's BIO universe."""
    out: list[TokenEntity] = []
    run_tag: str | None = None
    run_tokens: list[int] = []

    def close() -> None:
        nonlocal run_tag, run_tokens
        if run_tag is not None:
            label, value = schema.split_value_label(run_tag)
            out.append(TokenEntity(label, tuple(run_tokens), value))
        run_tag, run_tokens = None, []

    for i, lab in enumerate(labels):
        if lab == "O":
            close()
            continue
        if len(lab) < 3 or lab[1] != "-" or lab[0] not in "BI":
            raise EncodingError(f"malformed BIO label {lab!r}")
        prefix, tag = lab[0], lab[2:]
        try:
            schema.split_value_label(tag)
        except SchemaError as e:
            raise EncodingError(str(e)) from None
        if prefix == "B" or tag != run_tag:
            close()
            run_tag = tag
        run_tokens.append(i)
    close()
    return out


# -- relation candidates ---------------------------------------------------------

def mark_tokens(tokens: Sequence[str], trigger_span: tuple[int, int],
                arg_span: tuple[int, int],
                markers: MarkerConfig = DEFAULT_MARKERS) -> tuple[str, ...]:
    """Insert trigger markers around trigger_span and argument markers around
    arg_span (disjoint token ranges). Original token offsets are untouched;
    markers exist only in the returned sequence."""
    (ts, te), (as_, ae) = trigger_span, arg_span
    if max(ts, as_) < min(te, ae):
        raise EncodingError("trigger and argument token ranges overlap")
    inserts: dict[int, list[str]] = {}
    inserts.setdefault(ts, []).append(markers.trigger_open)
    inserts.setdefault(as_, []).append(markers.arg_open)
    closes: dict[int, list[str]] = {}
    closes.setdefault(te, []).append(markers.trigger_close)
    closes.setdefault(ae, []).append(markers.arg_close)
    out: list[str] = []
    for i in range(len(tokens) + 1):
        out.extend(closes.get(i, ()))
        out.extend(inserts.get(i, ()))
        if i < len(tokens):
            out.append(tokens[i])
    return tuple(out)


def gen_candidates(tokens: Sequence[str], entities: Sequence[TokenEntity],
                   schema: EventSchema,
                   markers: MarkerConfig = DEFAULT_MARKERS,
                   gold_events: Sequence[SentenceEvent] = (),
                   sentence_index: int = 0,
                   ) -> tuple[list[RelationCandidate], int]:
    """One candidate per (trigger entity, compatible argument entity) pair.
    Pairs whose token envelopes overlap are skipped and counted. With gold
    events given, gold_role carries the linked role, else NO_RELATION."""
    for m in markers.as_tuple():
        if m in tokens:
            raise EncodingError(f"marker {m!r} occurs in the sentence text")
    gold: dict[tuple[TokenEntity, TokenEntity], str] = {}
    for ev in gold_events:
        for role, arg in ev.args:
            gold.setdefault((ev.trigger, arg), role)
    out: list[RelationCandidate] = []
    skipped = 0
    for ti, trig in enumerate(entities):
        try:
            et, tdef = schema.resolve_label(trig.label)
        except SchemaError as e:
            raise EncodingError(str(e)) from None
        if tdef is not None:
            continue
        for ai, arg in enumerate(entities):
            if ai == ti:
                continue
            roles = schema.roles_for(et.name, arg.label)
            if not roles:
                continue
            tspan, aspan = trig.span, arg.span
            if max(tspan[0], aspan[0]) < min(tspan[1], aspan[1]):
                skipped += 1
                continue
            out.append(RelationCandidate(
                sentence_index=sentence_index,
                event_type=et.name,
                trigger_index=ti,
                arg_index=ai,
                trigger_tokens=tspan,
                arg_tokens=aspan,
                arg_label=arg.label,
                arg_value=arg.value,
                marked_tokens=mark_tokens(tokens, tspan, aspan, markers),
                gold_role=gold.get((trig, arg), NO_RELATION),
                allowed_roles=roles + (NO_RELATION,)))
    return out, skipped


def assemble_events(entities: Sequence[TokenEntity],
                    relations: Iterable[tuple[int, int, str]],
                    schema: EventSchema) -> list[SentenceEvent]:
    """Build one event per trigger entity from positive (trigger index,
    argument index, role) relations. Triggers without relations become
    argument-free events; an argument referenced by k triggers lands in k
    events. A relation headed by a non-trigger entity is an error."""
    trigger_args: dict[int, list[tuple[str, TokenEntity]]] = {}
    types: dict[int, str] = {}
    for i, ent in enumerate(entities):
        et, adef = schema.resolve_label(ent.label)
        if adef is None:
            trigger_args[i] = []
            types[i] = et.name
    for ti, ai, role in relations:
        if ti not in trigger_args:
            raise EncodingError(f"relation head {ti} is not a trigger entity")
        if role == NO_RELATION:
            raise EncodingError("NO_RELATION passed as a positive relation")
        role_et, _ = schema.resolve_role(role)
        if role_et.name != types[ti]:
            raise EncodingError(f"role {role!r} does not belong to event type "
                                f"{types[ti]!r}")
        trigger_args[ti].append((role, entities[ai]))
    return [SentenceEvent(types[i], entities[i], tuple(args)).normalized()
            for i, args in trigger_args.items()]


# -- document-level alignment ------------------------------------------------------

def _token_runs(tokens: Sequence[int]) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    for t in tokens:
        if runs and t == runs[-1][1]:
            runs[-1] = (runs[-1][0], t + 1)
        else:
            runs.append((t, t + 1))
    return runs


def entity_fragments(ent: TokenEntity, sentence: EncodedSentence) -> tuple[tuple[int, int], ...]:
    """Character fragments of a token-aligned entity: one fragment per
    consecutive token run, spanning from the run's first token start to its
    last token end."""
    ranges = sentence.token_ranges
    return tuple((ranges[a][0], ranges[b - 1][1]) for a, b in _token_runs(ent.tokens))


def sentence_events_to_char(events: Sequence[SentenceEvent],
                            sentence: EncodedSentence) -> list[Event]:
    out = []
    for ev in events:
        out.append(Event(
            ev.event_type,
            entity_fragments(ev.trigger, sentence),
            tuple(EventArg(role, entity_fragments(arg, sentence), arg.value)
                  for role, arg in ev.args)))
    return out


def encode_text(text: str, events: Sequence[Event], schema: EventSchema,
                markers: MarkerConfig = DEFAULT_MARKERS,
                ) -> tuple[list[EncodedSentence], EncodeCounters]:
    """Align char-space events to tokens and produce the full per-sentence
    task encoding. Sentences an entity straddles are merged first; links
    whose trigger and argument end up in different sentences are counted and
    dropped. Events sharing one trigger span are folded together, since the
    relational decomposition cannot tell them apart."""
    base = tokenize_document(text)
    envelopes = []
    for ev in events:
        envelopes.append(envelope(ev.trigger))
        envelopes.extend(envelope(a.fragments) for a in ev.args)
    sents, merges = merge_straddling(base, envelopes)
    counters = EncodeCounters(merges=merges)

    interned: list[dict[tuple, TokenEntity]] = [{} for _ in sents]

    def intern(si: int, label: str, tokens: tuple[int, ...],
               value: str | None) -> TokenEntity:
        key = (label, tokens, value)
        ent = interned[si].get(key)
        if ent is None:
            ent = TokenEntity(label, tokens, value)
            interned[si][key] = ent
        return ent

    def locate(fragments) -> tuple[int, tuple[int, ...]]:
        pairs = cover_tokens(sents, fragments)
        sis = {si for si, _ in pairs}
        if len(sis) != 1:  # merging guarantees one sentence per entity
            raise EncodingError(f"entity spans sentences {sorted(sis)} after merging")
        (si,) = sis
        return si, tuple(ti for _, ti in pairs)

    sentence_events: list[dict[TokenEntity, tuple[str, list[tuple[str, TokenEntity]]]]] = \
        [{} for _ in sents]
    for ev in events:
        et = schema.event_type(ev.event_type)
        si, toks = locate(ev.trigger)
        trig = intern(si, et.trigger_label, toks, None)
        etype, args = sentence_events[si].setdefault(trig, (et.name, []))
        for arg in ev.args:
            _, adef = schema.resolve_role(arg.role)
            asi, atoks = locate(arg.fragments)
            value = arg.value if adef.kind == SPAN_WITH_VALUE else None
            ent = intern(asi, adef.entity_label, atoks, value)
            if asi != si:
                counters.cross_sentence_links += 1
                continue
            args.append((arg.role, ent))

    out: list[EncodedSentence] = []
    for si, sent in enumerate(sents):
        entities = sorted(interned[si].values(),
                          key=lambda e: (e.tokens, e.label, e.value or ""))
        sevents = tuple(SentenceEvent(etype, trig, tuple(args)).normalized()
                        for trig, (etype, args) in sentence_events[si].items())
        tokens = tuple(t.text for t in sent.tokens)
        labels, conflicts = bio_encode(len(tokens), entities, schema)
        counters.label_conflicts += conflicts
        candidates, skipped = gen_candidates(tokens, entities, schema, markers,
                                             gold_events=sevents,
                                             sentence_index=si)
        counters.overlap_skipped += skipped
        out.append(EncodedSentence(
            index=si, start=sent.start, end=sent.end,
            tokens=tokens,
            token_ranges=tuple((t.start, t.end) for t in sent.tokens),
            entities=tuple(entities),
            labels=tuple(labels),
            events=sevents,
            candidates=tuple(candidates)))
    return out, counters
