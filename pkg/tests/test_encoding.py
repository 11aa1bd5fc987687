import pytest
from hypothesis import given, strategies as st

from radevents.encoding import (
    DEFAULT_MARKERS,
    NO_RELATION,
    EncodeCounters,
    EncodingError,
    MarkerConfig,
    RelationCandidate,
    SentenceEvent,
    TokenEntity,
    assemble_events,
    bio_decode,
    bio_encode,
    encode_text,
    entity_fragments,
    gen_candidates,
    mark_tokens,
    sentence_events_to_char,
)
from radevents.schema import default_schema
from radevents.standoff import Event, EventArg

SCHEMA = default_schema()


def ent(label, *tokens, value=None):
    return TokenEntity(label, tokens, value)


class TestBioEncode:
    def test_assertion_and_trigger_example(self):
        # "Probable malignant pancreatic mass with no evidence of vascular encasement"
        entities = [ent("Lesion-Assertion", 0, value="possible"),
                    ent("Lesion-Description", 3)]
        labels, conflicts = bio_encode(10, entities, SCHEMA)
        assert conflicts == 0
        assert labels[0] == "B-Lesion-Assertion-possible"
        assert labels[3] == "B-Lesion-Description"
        assert all(l == "O" for i, l in enumerate(labels) if i not in (0, 3))

    def test_multi_token_anatomy(self):
        labels, _ = bio_encode(4, [ent("Lesion-Anatomy", 1, 2, 3)], SCHEMA)
        assert labels == ["O", "B-Lesion-Anatomy", "I-Lesion-Anatomy",
                          "I-Lesion-Anatomy"]

    def test_no_entities_all_o(self):
        labels, conflicts = bio_encode(5, [], SCHEMA)
        assert labels == ["O"] * 5 and conflicts == 0

    def test_trigger_beats_argument(self):
        entities = [ent("Lesion-Anatomy", 1, 2), ent("Lesion-Description", 2)]
        labels, conflicts = bio_encode(3, entities, SCHEMA)
        assert labels[2] == "B-Lesion-Description"
        assert conflicts == 1

    def test_declaration_order_breaks_argument_ties(self):
        # Anatomy is declared before Characteristic in the Lesion type
        entities = [ent("Lesion-Characteristic", 0), ent("Lesion-Anatomy", 0)]
        labels, conflicts = bio_encode(1, entities, SCHEMA)
        assert labels == ["B-Lesion-Anatomy"] and conflicts == 1

    def test_unknown_label_rejected(self):
        with pytest.raises(EncodingError, match="not in schema"):
            bio_encode(1, [ent("Bogus", 0)], SCHEMA)

    def test_token_out_of_range_rejected(self):
        with pytest.raises(EncodingError, match="outside sentence"):
            bio_encode(2, [ent("Lesion-Anatomy", 5)], SCHEMA)


class TestBioDecode:
    def test_two_token_entity(self):
        got = bio_decode(["B-Lesion-Anatomy", "I-Lesion-Anatomy", "O"], SCHEMA)
        assert got == [ent("Lesion-Anatomy", 0, 1)]

    def test_stray_i_repaired_to_b(self):
        got = bio_decode(["O", "I-Lesion-Anatomy"], SCHEMA)
        assert got == [ent("Lesion-Anatomy", 1)]

    def test_i_after_other_tag_starts_new_entity(self):
        got = bio_decode(["B-Lesion-Anatomy", "I-Lesion-Description"], SCHEMA)
        assert got == [ent("Lesion-Anatomy", 0), ent("Lesion-Description", 1)]

    def test_b_always_starts_new_entity(self):
        got = bio_decode(["B-Lesion-Anatomy", "B-Lesion-Anatomy"], SCHEMA)
        assert got == [ent("Lesion-Anatomy", 0), ent("Lesion-Anatomy", 1)]

    def test_value_suffix_parsed(self):
        got = bio_decode(["B-Lesion-Size-Trend-no-change",
                          "I-Lesion-Size-Trend-no-change"], SCHEMA)
        assert got == [ent("Lesion-Size-Trend", 0, 1, value="no-change")]

    def test_unknown_label_raises(self):
        with pytest.raises(EncodingError):
            bio_decode(["B-Whatever"], SCHEMA)
        with pytest.raises(EncodingError, match="malformed"):
            bio_decode(["Q-Lesion-Anatomy"], SCHEMA)


FIG_TOKENS = ("Probable", "malignant", "pancreatic", "mass", "with", "no",
              "evidence", "of", "vascular", "encasement")


class TestMarkTokens:
    def test_marker_insertion_around_trigger_and_argument(self):
        marked = mark_tokens(FIG_TOKENS, (3, 4), (0, 1))
        s = " ".join(marked)
        assert "[unused0] mass [unused1]" in s
        assert "[unused2] Probable [unused3]" in s
        assert len(marked) == len(FIG_TOKENS) + 4

    def test_adjacent_spans_close_before_open(self):
        marked = mark_tokens(("a", "b"), (0, 1), (1, 2))
        assert marked == ("[unused0]", "a", "[unused1]", "[unused2]", "b",
                          "[unused3]")

    def test_overlap_rejected(self):
        with pytest.raises(EncodingError, match="overlap"):
            mark_tokens(FIG_TOKENS, (0, 2), (1, 3))

    def test_custom_markers(self):
        mk = MarkerConfig("<t>", "</t>", "<a>", "</a>")
        marked = mark_tokens(("x", "y"), (0, 1), (1, 2), mk)
        assert marked == ("<t>", "x", "</t>", "<a>", "y", "</a>")

    def test_markers_must_be_distinct(self):
        with pytest.raises(EncodingError, match="distinct"):
            MarkerConfig("<m>", "<m>", "<a>", "</a>")


class TestGenCandidates:
    ENTITIES = [ent("Lesion-Assertion", 0, value="possible"),
                ent("Lesion-Characteristic", 1),
                ent("Lesion-Anatomy", 2),
                ent("Lesion-Description", 3),
                ent("Medical-Assertion", 5, value="absent"),
                ent("Medical-Problem", 8, 9)]
    GOLD = [SentenceEvent("Lesion", ENTITIES[3],
                          (("Lesion-Assertion", ENTITIES[0]),
                           ("Lesion-Characteristic", ENTITIES[1]),
                           ("Lesion-Anatomy", ENTITIES[2]))),
            SentenceEvent("Medical-Problem", ENTITIES[5],
                          (("Medical-Assertion", ENTITIES[4]),))]

    def test_schema_compatible_pairs_only(self):
        cands, skipped = gen_candidates(FIG_TOKENS, self.ENTITIES, SCHEMA,
                                        gold_events=self.GOLD)
        assert skipped == 0
        assert len(cands) == 4
        got = {(c.event_type, c.arg_label): c.gold_role for c in cands}
        assert got == {
            ("Lesion", "Lesion-Assertion"): "Lesion-Assertion",
            ("Lesion", "Lesion-Characteristic"): "Lesion-Characteristic",
            ("Lesion", "Lesion-Anatomy"): "Lesion-Anatomy",
            ("Medical-Problem", "Medical-Assertion"): "Medical-Assertion"}

    def test_without_gold_all_no_relation(self):
        cands, _ = gen_candidates(FIG_TOKENS, self.ENTITIES, SCHEMA)
        assert {c.gold_role for c in cands} == {NO_RELATION}

    def test_trigger_without_arguments_yields_nothing(self):
        cands, _ = gen_candidates(("mass",), [ent("Lesion-Description", 0)], SCHEMA)
        assert cands == []

    def test_one_of_two_anatomies_linked(self):
        entities = [ent("Lesion-Description", 0),
                    ent("Lesion-Anatomy", 2),
                    ent("Lesion-Anatomy", 4)]
        gold = [SentenceEvent("Lesion", entities[0],
                              (("Lesion-Anatomy", entities[1]),))]
        cands, _ = gen_candidates(("m", "in", "liver", "near", "spleen"),
                                  entities, SCHEMA, gold_events=gold)
        assert [c.gold_role for c in cands] == ["Lesion-Anatomy", NO_RELATION]

    def test_allowed_roles_from_schema(self):
        entities = [ent("Lesion-Description", 0), ent("Lesion-Size", 2)]
        cands, _ = gen_candidates(("m", "x", "4.1"), entities, SCHEMA)
        assert cands[0].allowed_roles == ("Lesion-Size-Present",
                                          "Lesion-Size-Past", NO_RELATION)

    def test_overlapping_pair_skipped_and_counted(self):
        entities = [ent("Lesion-Description", 0, 1), ent("Lesion-Anatomy", 1)]
        cands, skipped = gen_candidates(("liver", "mass"), entities, SCHEMA)
        assert cands == [] and skipped == 1

    def test_candidate_count_formula(self):
        cands, skipped = gen_candidates(FIG_TOKENS, self.ENTITIES, SCHEMA)
        per_trigger = {"Lesion-Description": 3, "Medical-Problem": 1}
        assert len(cands) == sum(per_trigger.values()) - skipped

    def test_marker_collision_with_text_rejected(self):
        with pytest.raises(EncodingError, match="occurs in the sentence"):
            gen_candidates(("[unused0]", "mass"),
                           [ent("Lesion-Description", 1)], SCHEMA)

    def test_indices_point_into_entity_list(self):
        cands, _ = gen_candidates(FIG_TOKENS, self.ENTITIES, SCHEMA)
        for c in cands:
            assert self.ENTITIES[c.trigger_index].span == c.trigger_tokens
            assert self.ENTITIES[c.arg_index].span == c.arg_tokens


class TestAssemble:
    def test_bare_trigger(self):
        got = assemble_events([ent("Lesion-Description", 0)], [], SCHEMA)
        assert got == [SentenceEvent("Lesion", ent("Lesion-Description", 0))]

    def test_argument_shared_by_two_triggers(self):
        entities = [ent("Medical-Problem", 0), ent("Medical-Problem", 4),
                    ent("Medical-Anatomy", 2)]
        rels = [(0, 2, "Medical-Anatomy"), (1, 2, "Medical-Anatomy")]
        got = assemble_events(entities, rels, SCHEMA)
        assert len(got) == 2
        assert all(e.args == (("Medical-Anatomy", entities[2]),) for e in got)

    def test_value_travels_from_entity(self):
        entities = [ent("Lesion-Description", 0),
                    ent("Lesion-Assertion", 1, value="absent")]
        got = assemble_events(entities, [(0, 1, "Lesion-Assertion")], SCHEMA)
        assert got[0].args[0][1].value == "absent"

    def test_non_trigger_head_rejected(self):
        entities = [ent("Lesion-Anatomy", 0), ent("Lesion-Description", 1)]
        with pytest.raises(EncodingError, match="not a trigger"):
            assemble_events(entities, [(0, 1, "Lesion-Anatomy")], SCHEMA)

    def test_no_relation_rejected_as_positive(self):
        entities = [ent("Lesion-Description", 0), ent("Lesion-Anatomy", 1)]
        with pytest.raises(EncodingError, match="positive"):
            assemble_events(entities, [(0, 1, NO_RELATION)], SCHEMA)

    def test_role_of_wrong_event_type_rejected(self):
        entities = [ent("Lesion-Description", 0), ent("Medical-Anatomy", 1)]
        with pytest.raises(EncodingError, match="does not belong"):
            assemble_events(entities, [(0, 1, "Medical-Anatomy")], SCHEMA)


DOC = ("Probable malignant pancreatic mass with no evidence of vascular "
       "encasement.\nStable liver lesion vs prior exam.")


def sp(needle, occurrence=0):
    pos = -1
    for _ in range(occurrence + 1):
        pos = DOC.index(needle, pos + 1)
    return ((pos, pos + len(needle)),)


DOC_EVENTS = [
    Event("Lesion", sp("mass"), (
        EventArg("Lesion-Assertion", sp("Probable"), "possible"),
        EventArg("Lesion-Characteristic", sp("malignant")),
        EventArg("Lesion-Anatomy", sp("pancreatic")))),
    Event("Medical-Problem", sp("vascular encasement"), (
        EventArg("Medical-Assertion", sp("no"), "absent"),)),
    Event("Lesion", sp("lesion"), (
        EventArg("Lesion-Size-Trend", sp("Stable"), "no-change"),
        EventArg("Lesion-Anatomy", sp("liver")))),
]


class TestEncodeText:
    def test_sentences_and_counters(self):
        sentences, counters = encode_text(DOC, DOC_EVENTS, SCHEMA)
        assert len(sentences) == 2
        assert counters == EncodeCounters(0, 0, 0, 0)
        assert len(sentences[0].entities) == 6
        assert len(sentences[0].events) == 2
        assert len(sentences[1].entities) == 3

    def test_bio_labels(self):
        sentences, _ = encode_text(DOC, DOC_EVENTS, SCHEMA)
        s0 = sentences[0]
        by_token = dict(zip(s0.tokens, s0.labels))
        assert by_token["Probable"] == "B-Lesion-Assertion-possible"
        assert by_token["mass"] == "B-Lesion-Description"
        assert by_token["vascular"] == "B-Medical-Problem"
        assert by_token["encasement"] == "I-Medical-Problem"
        assert by_token["no"] == "B-Medical-Assertion-absent"
        assert by_token["."] == "O"
        s1 = sentences[1]
        assert s1.labels[0] == "B-Lesion-Size-Trend-no-change"

    def test_candidates_and_gold_roles(self):
        sentences, _ = encode_text(DOC, DOC_EVENTS, SCHEMA)
        cands = sentences[0].candidates
        assert len(cands) == 4
        assert all(c.gold_role != NO_RELATION for c in cands)
        marked = " ".join(next(c for c in cands
                               if c.arg_label == "Lesion-Assertion").marked_tokens)
        assert "[unused0] mass [unused1]" in marked
        assert "[unused2] Probable [unused3]" in marked

    def test_decompose_assemble_inverse(self):
        sentences, _ = encode_text(DOC, DOC_EVENTS, SCHEMA)
        for s in sentences:
            rels = [(c.trigger_index, c.arg_index, c.gold_role)
                    for c in s.candidates if c.gold_role != NO_RELATION]
            got = assemble_events(list(s.entities), rels, SCHEMA)
            key = lambda e: e.trigger.tokens
            assert sorted(got, key=key) == sorted(s.events, key=key)

    def test_entity_straddling_newline_merges(self):
        text = "Large irregular\nmass in liver."
        a = text.index("irregular")
        events = [Event("Lesion", ((a, text.index("mass") + 4),),
                        (EventArg("Lesion-Anatomy",
                                  ((text.index("liver"), text.index("liver") + 5),)),))]
        sentences, counters = encode_text(text, events, SCHEMA)
        assert counters.merges == 1
        assert len(sentences) == 1
        trig = sentences[0].events[0].trigger
        assert [sentences[0].tokens[i] for i in trig.tokens] == ["irregular", "mass"]

    def test_cross_sentence_link_dropped_and_counted(self):
        text = "Mass is here.\nIt involves the liver."
        lv = text.index("liver")
        events = [Event("Lesion", ((0, 4),),
                        (EventArg("Lesion-Anatomy", ((lv, lv + 5),)),))]
        sentences, counters = encode_text(text, events, SCHEMA)
        assert counters.cross_sentence_links == 1
        assert len(sentences) == 2
        assert sentences[0].events[0].args == ()
        # the argument entity still exists and is tagged in its own sentence
        assert any(e.label == "Lesion-Anatomy" for e in sentences[1].entities)
        assert "B-Lesion-Anatomy" in sentences[1].labels

    def test_shared_trigger_events_folded(self):
        text = "Mass in liver and spleen."
        events = [
            Event("Lesion", ((0, 4),),
                  (EventArg("Lesion-Anatomy", ((8, 13),)),)),
            Event("Lesion", ((0, 4),),
                  (EventArg("Lesion-Anatomy", ((18, 24),)),)),
        ]
        sentences, _ = encode_text(text, events, SCHEMA)
        assert len(sentences[0].events) == 1
        assert len(sentences[0].events[0].args) == 2

    def test_entity_fragments_round_trip(self):
        sentences, _ = encode_text(DOC, DOC_EVENTS, SCHEMA)
        s0 = sentences[0]
        trig = s0.events[1].trigger  # vascular encasement, two tokens
        frags = entity_fragments(trig, s0)
        assert len(frags) == 1
        a, b = frags[0]
        assert DOC[a:b] == "vascular encasement"

    def test_entity_fragments_discontinuous(self):
        sentences, _ = encode_text(DOC, DOC_EVENTS, SCHEMA)
        s0 = sentences[0]
        fake = TokenEntity("Lesion-Anatomy", (0, 2))
        frags = entity_fragments(fake, s0)
        assert [DOC[a:b] for a, b in frags] == ["Probable", "pancreatic"]

    def test_sentence_events_to_char(self):
        sentences, _ = encode_text(DOC, DOC_EVENTS, SCHEMA)
        back = sentence_events_to_char(sentences[0].events, sentences[0])
        assert back[0].event_type == "Lesion"
        assert DOC[slice(*back[0].trigger[0])] == "mass"
        roles = {a.role: DOC[slice(*a.fragments[0])] for a in back[0].args}
        assert roles == {"Lesion-Assertion": "Probable",
                         "Lesion-Characteristic": "malignant",
                         "Lesion-Anatomy": "pancreatic"}


# -- properties ---------------------------------------------------------------

@st.composite
def _sentence_entities(draw):
    n_tokens = draw(st.integers(1, 12))
    cuts = sorted(draw(st.lists(st.integers(0, n_tokens), unique=True,
                                min_size=0, max_size=8)))
    ents = []
    for a, b in zip(cuts, cuts[1:]):
        if draw(st.booleans()):
            continue
        tag = draw(st.sampled_from(SCHEMA.tag_labels))
        label, value = SCHEMA.split_value_label(tag)
        ents.append(TokenEntity(label, tuple(range(a, b)), value))
    return n_tokens, ents


@given(_sentence_entities())
def test_bio_round_trip(case):
    n_tokens, ents = case
    labels, conflicts = bio_encode(n_tokens, ents, SCHEMA)
    assert conflicts == 0
    assert bio_decode(labels, SCHEMA) == sorted(ents, key=lambda e: e.tokens)


@given(st.lists(st.sampled_from(default_schema().bio_labels()), max_size=15))
def test_decode_encode_normalizes(labels):
    ents = bio_decode(labels, SCHEMA)
    normalized, conflicts = bio_encode(len(labels), ents, SCHEMA)
    assert conflicts == 0
    assert bio_decode(normalized, SCHEMA) == ents
    again, _ = bio_encode(len(labels), bio_decode(normalized, SCHEMA), SCHEMA)
    assert again == normalized


@st.composite
def _gold_sentences(draw):
    n_tokens, ents = draw(_sentence_entities())
    events = []
    for i, trig in enumerate(ents):
        et, adef = SCHEMA.resolve_label(trig.label)
        if adef is not None:
            continue
        args = []
        for j, other in enumerate(ents):
            if j == i:
                continue
            roles = SCHEMA.roles_for(et.name, other.label)
            if roles and draw(st.booleans()):
                args.append((draw(st.sampled_from(roles)), other))
        events.append(SentenceEvent(et.name, trig, tuple(args)).normalized())
    return n_tokens, ents, events


@given(_gold_sentences())
def test_decompose_assemble_inverse_property(case):
    n_tokens, ents, events = case
    tokens = tuple(f"w{k}" for k in range(n_tokens))
    cands, skipped = gen_candidates(tokens, ents, SCHEMA, gold_events=events)
    assert skipped == 0
    rels = [(c.trigger_index, c.arg_index, c.gold_role)
            for c in cands if c.gold_role != NO_RELATION]
    got = assemble_events(ents, rels, SCHEMA)
    key = lambda e: (e.trigger.tokens, e.trigger.label)
    assert sorted(got, key=key) == sorted(events, key=key)


@given(_sentence_entities())
def test_marking_never_perturbs_tokens(case):
    n_tokens, ents = case
    tokens = tuple(f"w{k}" for k in range(n_tokens))
    cands, _ = gen_candidates(tokens, ents, SCHEMA)
    for c in cands:
        stripped = tuple(t for t in c.marked_tokens
                         if t not in DEFAULT_MARKERS.as_tuple())
        assert stripped == tokens
