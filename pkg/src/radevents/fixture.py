"""Synthetic radiology-style corpus generator for tests and experiments.

Documents are built from a small set of sentence templates with controlled
vocabularies, so the corpus is (a) fully annotated with known-good events,
(b) deterministic per seed byte-for-byte, and (c) learnable by simple
lexical models: trigger words, anatomy phrases, characteristic adjectives,
count words, size expressions, and assertion/trend cue words are drawn from
disjoint vocabularies.

A per-document rotation forces coverage: every schema label, role, and
categorical value occurs many times in a 200-document corpus, including
multi-argument events, arguments shared between two triggers (one anatomy
entity serving two findings), and sentences with two finding/anatomy pairs
that supply negative relation candidates.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import Sequence

from .schema import EventSchema, default_schema
from .standoff import AnnotationDoc, Event, EventArg, from_events, write_document

LESION_TRIGGERS = ("mass", "nodule", "lesion", "cyst", "opacity")
LESION_PLURALS = {"mass": "masses", "nodule": "nodules", "lesion": "lesions",
                  "cyst": "cysts", "opacity": "opacities"}
PROBLEM_TRIGGERS = ("effusion", "fracture", "pneumothorax", "edema",
                    "consolidation")
ANATOMY = ("liver", "spleen", "pancreas", "right kidney", "left kidney",
           "right lower lobe", "left upper lobe", "gallbladder")
# problem sentences draw anatomy from their own pool so the two anatomy
# labels stay separable by surface form alone
PROBLEM_ANATOMY = ("pleural space", "mediastinum", "pericardium",
                   "right hemithorax", "left hemithorax", "lung bases")
CHARACTERISTICS = ("hypodense", "calcified", "cystic", "enhancing",
                   "ill-defined")
COUNT_WORDS = ("Two", "Three", "Multiple", "Several")
SIZES = ("0.8", "1.2", "2.5", "3.0", "4.1", "5.6")
PRESENT_CUES = ("seen", "noted", "identified")
POSSIBLE_CUES = ("Possible", "Questionable")
TREND_WORDS = {"increasing": ("increased", "enlarged"),
               "decreasing": ("decreased",),
               "no-change": ("unchanged", "stable"),
               "new": ("new",)}
FILLERS = ("Comparison was made to the prior study",
           "The remaining examination is unremarkable",
           "Technique and positioning are standard",
           "Clinical correlation is recommended")

ASSERTION_VALUES = ("present", "absent", "possible")
TREND_VALUES = ("new", "increasing", "decreasing", "no-change")


def _article(word: str, capital: bool = False) -> str:
    art = "an" if word[0].lower() in "aeiou" else "a"
    return art.capitalize() if capital else art


class _SentenceBuilder:
    """Accumulates space-joined chunks and hands back their char spans."""

    def __init__(self) -> None:
        self._chunks: list[str] = []
        self._len = 0

    def add(self, phrase: str) -> tuple[int, int]:
        start = self._len + 1 if self._chunks else 0
        self._chunks.append(phrase)
        self._len = start + len(phrase)
        return start, self._len

    @property
    def text(self) -> str:
        return " ".join(self._chunks) + "."


def _sent_lesion(rng: random.Random, assertion: str):
    sb = _SentenceBuilder()
    trig_word = rng.choice(LESION_TRIGGERS)
    anat = rng.choice(ANATOMY)
    args = []
    if assertion == "present":
        char_word = rng.choice(CHARACTERISTICS)
        sb.add(_article(char_word, capital=True))
        args.append(EventArg("Lesion-Characteristic", (sb.add(char_word),)))
        trig = sb.add(trig_word)
        sb.add("is")
        cue = sb.add(rng.choice(PRESENT_CUES))
        sb.add("in the")
        args.append(EventArg("Lesion-Assertion", (cue,), "present"))
        args.append(EventArg("Lesion-Anatomy", (sb.add(anat),)))
        if rng.random() < 0.5:
            sb.add("measuring")
            args.append(EventArg("Lesion-Size-Present",
                                 (sb.add(f"{rng.choice(SIZES)} cm"),)))
    elif assertion == "absent":
        cue = sb.add("No")
        trig = sb.add(trig_word)
        sb.add("in the")
        args.append(EventArg("Lesion-Assertion", (cue,), "absent"))
        args.append(EventArg("Lesion-Anatomy", (sb.add(anat),)))
    else:
        cue = sb.add(rng.choice(POSSIBLE_CUES))
        trig = sb.add(trig_word)
        sb.add("in the")
        args.append(EventArg("Lesion-Assertion", (cue,), "possible"))
        args.append(EventArg("Lesion-Anatomy", (sb.add(anat),)))
    return sb.text, [Event("Lesion", (trig,), tuple(args))]


def _sent_trend(rng: random.Random, value: str):
    sb = _SentenceBuilder()
    args = []
    if value == "new":
        sb.add("A")
        word = sb.add("new")
        trig = sb.add(rng.choice(LESION_TRIGGERS))
        sb.add("is")
        cue = sb.add(rng.choice(PRESENT_CUES))
        sb.add("in the")
        args.append(EventArg("Lesion-Assertion", (cue,), "present"))
    else:
        sb.add("The")
        trig = sb.add(rng.choice(LESION_TRIGGERS))
        sb.add("in the")
        anat = sb.add(rng.choice(ANATOMY))
        sb.add("has" if value in ("increasing", "decreasing") else "is")
        word = sb.add(rng.choice(TREND_WORDS[value]))
        if value in ("increasing", "decreasing"):
            sb.add("in size")
        args.append(EventArg("Lesion-Anatomy", (anat,)))
        args.append(EventArg("Lesion-Size-Trend", (word,), value))
        return sb.text, [Event("Lesion", (trig,), tuple(args))]
    args.append(EventArg("Lesion-Anatomy", (sb.add(rng.choice(ANATOMY)),)))
    args.append(EventArg("Lesion-Size-Trend", (word,), "new"))
    return sb.text, [Event("Lesion", (trig,), tuple(args))]


def _sent_sizes(rng: random.Random):
    sb = _SentenceBuilder()
    sb.add("The")
    trig = sb.add(rng.choice(LESION_TRIGGERS))
    sb.add("in the")
    anat = sb.add(rng.choice(ANATOMY))
    sb.add("measures")
    now = sb.add(f"{rng.choice(SIZES)} cm")
    sb.add("previously")
    past = sb.add(f"{rng.choice(SIZES)} cm")
    return sb.text, [Event("Lesion", (trig,), (
        EventArg("Lesion-Anatomy", (anat,)),
        EventArg("Lesion-Size-Present", (now,)),
        EventArg("Lesion-Size-Past", (past,))))]


def _sent_count(rng: random.Random):
    sb = _SentenceBuilder()
    count = sb.add(rng.choice(COUNT_WORDS))
    args = [EventArg("Lesion-Count", (count,))]
    if rng.random() < 0.5:
        args.append(EventArg("Lesion-Characteristic",
                             (sb.add(rng.choice(CHARACTERISTICS)),)))
    trig = sb.add(LESION_PLURALS[rng.choice(LESION_TRIGGERS)])
    sb.add("are")
    cue = sb.add(rng.choice(PRESENT_CUES))
    sb.add("in the")
    args.append(EventArg("Lesion-Assertion", (cue,), "present"))
    args.append(EventArg("Lesion-Anatomy", (sb.add(rng.choice(ANATOMY)),)))
    return sb.text, [Event("Lesion", (trig,), tuple(args))]


def _sent_shared_args(rng: random.Random):
    # two findings sharing one anatomy entity and one assertion cue
    sb = _SentenceBuilder()
    t1_word, t2_word = rng.sample(LESION_TRIGGERS, 2)
    sb.add(_article(t1_word, capital=True))
    t1 = sb.add(t1_word)
    sb.add(f"and {_article(t2_word)}")
    t2 = sb.add(t2_word)
    sb.add("are")
    cue = sb.add(rng.choice(PRESENT_CUES))
    sb.add("in the")
    anat = sb.add(rng.choice(ANATOMY))
    shared = (EventArg("Lesion-Assertion", (cue,), "present"),
              EventArg("Lesion-Anatomy", (anat,)))
    return sb.text, [Event("Lesion", (t1,), shared),
                     Event("Lesion", (t2,), shared)]


def _sent_two_anatomies(rng: random.Random):
    # two finding/anatomy pairs in one sentence: the crossed combinations
    # become negative relation candidates
    sb = _SentenceBuilder()
    a1_word, a2_word = rng.sample(ANATOMY, 2)
    t1_word = rng.choice(LESION_TRIGGERS)
    t2_word = rng.choice(LESION_TRIGGERS)
    sb.add(_article(t1_word, capital=True))
    t1 = sb.add(t1_word)
    sb.add("in the")
    a1 = sb.add(a1_word)
    sb.add(f"and {_article(t2_word)}")
    t2 = sb.add(t2_word)
    sb.add("in the")
    a2 = sb.add(a2_word)
    return sb.text, [
        Event("Lesion", (t1,), (EventArg("Lesion-Anatomy", (a1,)),)),
        Event("Lesion", (t2,), (EventArg("Lesion-Anatomy", (a2,)),))]


def _sent_problem(rng: random.Random, assertion: str):
    sb = _SentenceBuilder()
    word = rng.choice(PROBLEM_TRIGGERS)
    args = []
    if assertion == "present":
        trig = sb.add(word.capitalize())
        sb.add("is")
        cue = sb.add(rng.choice(PRESENT_CUES))
        sb.add("in the")
        args.append(EventArg("Medical-Assertion", (cue,), "present"))
    elif assertion == "absent":
        cue = sb.add("No")
        trig = sb.add(word)
        sb.add("in the")
        args.append(EventArg("Medical-Assertion", (cue,), "absent"))
    else:
        cue = sb.add(rng.choice(POSSIBLE_CUES))
        trig = sb.add(word)
        sb.add("in the")
        args.append(EventArg("Medical-Assertion", (cue,), "possible"))
    args.append(EventArg("Medical-Anatomy",
                         (sb.add(rng.choice(PROBLEM_ANATOMY)),)))
    return sb.text, [Event("Medical-Problem", (trig,), tuple(args))]


def _sent_filler(rng: random.Random):
    return rng.choice(FILLERS) + ".", []


def _shift_events(events: Sequence[Event], delta: int) -> list[Event]:
    def move(fragments):
        return tuple((a + delta, b + delta) for a, b in fragments)

    return [Event(ev.event_type, move(ev.trigger),
                  tuple(EventArg(a.role, move(a.fragments), a.value)
                        for a in ev.args))
            for ev in events]


def build_document(rng: random.Random, index: int,
                   schema: EventSchema) -> AnnotationDoc:
    sentences = [
        _sent_lesion(rng, ASSERTION_VALUES[index % 3]),
        _sent_trend(rng, TREND_VALUES[index % 4]),
    ]
    if index % 2 == 0:
        sentences.append(_sent_sizes(rng))
    if index % 3 == 0:
        sentences.append(_sent_count(rng))
    if index % 4 == 0:
        sentences.append(_sent_shared_args(rng))
    if index % 4 == 2:
        sentences.append(_sent_two_anatomies(rng))
    sentences.append(_sent_problem(rng, ASSERTION_VALUES[(index + 1) % 3]))
    if rng.random() < 0.5:
        sentences.append(_sent_filler(rng))
    rng.shuffle(sentences)

    parts: list[str] = []
    events: list[Event] = []
    at = 0
    if index % 7 == 0:
        parts.append("FINDINGS:\n")
        at = len(parts[0])
    for i, (text, evs) in enumerate(sentences):
        if i:
            sep = "\n" if rng.random() < 0.25 else " "
            parts.append(sep)
            at += len(sep)
        parts.append(text)
        events.extend(_shift_events(evs, at))
        at += len(text)
    doc_id = f"p{10000 + index:05d}-s{50000 + index:05d}"
    return from_events(doc_id, "".join(parts), events, schema)


def gen_fixture(seed: int, n_docs: int,
                schema: EventSchema | None = None) -> list[AnnotationDoc]:
    """Deterministic corpus of n_docs annotated documents."""
    if n_docs < 1:
        raise ValueError(f"n_docs must be >= 1, got {n_docs}")
    schema = schema or default_schema()
    rng = random.Random(seed)
    return [build_document(rng, i, schema) for i in range(n_docs)]


def write_fixture(docs: Sequence[AnnotationDoc], root: str | Path) -> None:
    for doc in docs:
        write_document(doc, root)
