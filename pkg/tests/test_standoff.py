import pytest
from hypothesis import given, strategies as st

from radevents.schema import default_schema
from radevents.standoff import (
    AnnotationDoc,
    AttributeLine,
    Event,
    EventArg,
    EventLine,
    StandoffError,
    TextBound,
    from_events,
    iter_corpus,
    parse_ann,
    read_document,
    serialize_ann,
    to_events,
    write_document,
)

SCHEMA = default_schema()
TEXT = "Reports a mass in the liver. No nodule in the spleen."
#       0123456789...
# "mass" at [10,14), "liver" at [22,27), "No" at [29,31), "nodule" at [32,38),
# "spleen" at [46,52)


def bspan(text, needle, occurrence=0):
    """Byte offsets of the nth occurrence of needle."""
    pos = -1
    for _ in range(occurrence + 1):
        pos = text.index(needle, pos + 1)
    return len(text[:pos].encode()), len(text[:pos + len(needle)].encode())


class TestParse:
    def test_single_textbound(self):
        doc = parse_ann("d", TEXT, "T1\tLesion-Description 10 14\tmass\n")
        assert len(doc.textbounds) == 1
        t = doc.textbounds[0]
        assert t.id == "T1" and t.label == "Lesion-Description"
        assert t.fragments == ((10, 14),)
        assert t.surface == "mass"

    def test_discontinuous_fragments(self):
        ann = "T2\tMedical-Anatomy 22 27;46 52\tliver spleen\n"
        doc = parse_ann("d", TEXT, ann)
        assert doc.textbounds[0].fragments == ((22, 27), (46, 52))

    def test_offset_out_of_bounds_names_line(self):
        with pytest.raises(StandoffError, match="d:2.*out of bounds"):
            parse_ann("d", TEXT, "T1\tLesion-Description 10 14\tmass\n"
                                 "T2\tLesion-Anatomy 22 999\tliver\n")

    def test_surface_mismatch_is_error(self):
        with pytest.raises(StandoffError, match="surface mismatch"):
            parse_ann("d", TEXT, "T1\tLesion-Description 10 14\tnodule\n")

    def test_byte_offsets_with_multibyte_text(self):
        text = "éléphant mass"
        a, b = bspan(text, "mass")
        assert (a, b) != (9, 13)  # really byte offsets
        doc = parse_ann("d", text, f"T1\tLesion-Description {a} {b}\tmass\n")
        assert doc.textbounds[0].fragments == ((9, 13),)  # character range

    def test_offset_inside_multibyte_char_rejected(self):
        text = "é mass"
        with pytest.raises(StandoffError, match="character boundary"):
            parse_ann("d", text, "T1\tLesion-Description 1 7\t mass\n")

    def test_newline_in_fragment_written_as_space(self):
        text = "big\nmass here"
        doc = parse_ann("d", text, "T1\tLesion-Description 0 8\tbig mass\n")
        assert doc.textbounds[0].fragments == ((0, 8),)

    def test_event_and_attribute(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "T2\tLesion-Anatomy 22 27\tliver\n"
               "E1\tLesion-Description:T1 Lesion-Anatomy:T2\n"
               "A1\tLesion-AssertionVal T2 absent\n")
        doc = parse_ann("d", TEXT, ann)
        e = doc.events[0]
        assert e.type_label == "Lesion-Description" and e.trigger == "T1"
        assert e.args == (("Lesion-Anatomy", "T2"),)
        a = doc.attributes[0]
        assert (a.name, a.target, a.value) == ("Lesion-AssertionVal", "T2", "absent")

    def test_binary_attribute_without_value(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "A1\tConclusive T1\n")
        doc = parse_ann("d", TEXT, ann)
        assert doc.attributes[0].value is None

    def test_passthrough_kinds_kept(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "# annotator note\n"
               "R1\tModifies Arg1:T1 Arg2:T1\n"
               "N1\tReference T1 UMLS:C000 Concept\n")
        doc = parse_ann("d", TEXT, ann)
        assert [raw for _, raw in doc.passthrough] == [
            "# annotator note",
            "R1\tModifies Arg1:T1 Arg2:T1",
            "N1\tReference T1 UMLS:C000 Concept"]

    @pytest.mark.parametrize("ann,msg", [
        ("T1\tLesion-Description 10\tmass\n", "bad fragment"),
        ("T1\tLesion-Description ten 14\tmass\n", "non-integer"),
        ("T1\tLesion-Description 14 10\tmass\n", "out of bounds"),
        ("T1\tLesion-Description 10 14\n", "3 tab-separated"),
        ("T1\tLesion-Description 22 27;10 14\tliver mass\n", "out of order"),
        ("E1\t\n", "no trigger"),
        ("E1\tLesion:T1 oops\n", "bad role:target"),
        ("A1\tName\n", "at most one value"),
        ("A1\tName T1 big value\n", "at most one value"),
        ("T1\tLesion-Description 10 14\tmass\nT1\tLesion-Anatomy 22 27\tliver\n",
         "duplicate id"),
        ("E1\tLesion-Description:T9\n", "unknown textbound"),
        ("A1\tLesion-AssertionVal T9 absent\n", "unknown target"),
    ])
    def test_malformed_lines(self, ann, msg):
        with pytest.raises(StandoffError, match=msg):
            parse_ann("d", TEXT, ann)

    def test_empty_ann(self):
        doc = parse_ann("d", TEXT, "")
        assert doc.textbounds == () and doc.passthrough == ()


FULL_ANN = ("T1\tLesion-Description 10 14\tmass\n"
            "# reviewed 2021-03-04\n"
            "T2\tLesion-Anatomy 22 27\tliver\n"
            "A1\tLesion-AssertionVal T3 absent\n"
            "T3\tLesion-Assertion 29 31\tNo\n"
            "E1\tLesion-Description:T1 Lesion-Anatomy:T2 Lesion-Assertion:T3\n"
            "R1\tCustom Arg1:T1 Arg2:T2\n")


class TestSerialize:
    def test_byte_identical_round_trip(self):
        doc = parse_ann("d", TEXT, FULL_ANN)
        assert serialize_ann(doc) == FULL_ANN

    def test_empty_doc(self):
        assert serialize_ann(AnnotationDoc("d", TEXT)) == ""

    def test_canonicalize_renumbers(self):
        ann = ("T7\tLesion-Description 10 14\tmass\n"
               "E4\tLesion-Description:T7\n")
        out = serialize_ann(parse_ann("d", TEXT, ann), canonicalize=True)
        assert out == ("T1\tLesion-Description 10 14\tmass\n"
                       "E1\tLesion-Description:T1\n")

    def test_multibyte_written_back_as_bytes(self):
        text = "éléphant mass"
        a, b = bspan(text, "mass")
        ann = f"T1\tLesion-Description {a} {b}\tmass\n"
        assert serialize_ann(parse_ann("d", text, ann)) == ann

    def test_unresolvable_reference_rejected(self):
        doc = AnnotationDoc("d", TEXT, events=(
            EventLine("E1", "Lesion-Description", "T1", ()),))
        with pytest.raises(StandoffError, match="unknown textbound"):
            serialize_ann(doc)


class TestToEvents:
    def test_attribute_supplies_value(self):
        doc = parse_ann("d", TEXT, FULL_ANN)
        events, violations = to_events(doc, SCHEMA)
        assert violations == []
        (ev,) = events
        assert ev.event_type == "Lesion"
        assert ev.trigger == ((10, 14),)
        assert ev.args == (
            EventArg("Lesion-Anatomy", ((22, 27),), None),
            EventArg("Lesion-Assertion", ((29, 31),), "absent"))

    def test_missing_attribute_uses_default(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "T2\tLesion-Assertion 29 31\tNo\n"
               "E1\tLesion-Description:T1 Lesion-Assertion:T2\n")
        events, violations = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        assert violations == []
        assert events[0].args[0].value == "present"

    def test_value_suffixed_label_dialect(self):
        ann = ("T1\tMedical-Problem 32 38\tnodule\n"
               "T2\tMedical-Assertion-absent 29 31\tNo\n"
               "E1\tMedical-Problem:T1 Medical-Assertion:T2\n")
        events, violations = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        assert violations == []
        assert events[0].args[0].value == "absent"

    def test_attribute_beats_label_suffix(self):
        ann = ("T1\tMedical-Problem 32 38\tnodule\n"
               "T2\tMedical-Assertion-absent 29 31\tNo\n"
               "E1\tMedical-Problem:T1 Medical-Assertion:T2\n"
               "A1\tMedical-AssertionVal T2 possible\n")
        events, _ = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        assert events[0].args[0].value == "possible"

    def test_shared_textbound_two_events(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "T2\tMedical-Problem 32 38\tnodule\n"
               "T3\tLesion-Anatomy 22 27\tliver\n"
               "E1\tLesion-Description:T1 Lesion-Anatomy:T3\n"
               "E2\tMedical-Problem:T2\n")
        events, violations = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        assert len(events) == 2
        assert events[0].args[0].fragments == ((22, 27),)

    def test_role_numeric_suffix_stripped(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "T2\tLesion-Anatomy 22 27\tliver\n"
               "T3\tLesion-Anatomy 46 52\tspleen\n"
               "E1\tLesion-Description:T1 Lesion-Anatomy:T2 Lesion-Anatomy2:T3\n")
        events, violations = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        assert violations == []
        assert [a.role for a in events[0].args] == ["Lesion-Anatomy", "Lesion-Anatomy"]

    def test_unknown_event_type_skipped_with_violation(self):
        ann = ("T1\tWeird 10 14\tmass\n"
               "E1\tWeird:T1\n")
        events, violations = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        assert events == []
        assert [v.code for v in violations] == ["unknown_event_type"]

    def test_unknown_role_reported_not_fatal(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "T2\tLesion-Anatomy 22 27\tliver\n"
               "E1\tLesion-Description:T1 Wrong-Role:T2\n")
        events, violations = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        assert len(events) == 1
        assert "unknown_role" in [v.code for v in violations]

    def test_event_type_name_accepted_as_type_label(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "E1\tLesion:T1\n")
        events, violations = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        assert events[0].event_type == "Lesion" and violations == []

    def test_strict_passthrough(self):
        ann = ("T1\tLesion-Description 10 14\tmass\n"
               "T2\tLesion-Count 29 31\tNo\n"
               "T3\tLesion-Count 32 38\tnodule\n"
               "E1\tLesion-Description:T1 Lesion-Count:T2 Lesion-Count2:T3\n")
        _, loose = to_events(parse_ann("d", TEXT, ann), SCHEMA)
        _, strict = to_events(parse_ann("d", TEXT, ann), SCHEMA, strict=True)
        assert loose == []
        assert [v.code for v in strict] == ["duplicate_argument_strict"]


class TestFromEvents:
    def test_empty(self):
        doc = from_events("d", TEXT, [], SCHEMA)
        assert doc.textbounds == () and doc.events == () and doc.attributes == ()
        assert serialize_ann(doc) == ""

    def test_trigger_only_event(self):
        ev = Event("Lesion", ((10, 14),))
        doc = from_events("d", TEXT, [ev], SCHEMA)
        assert len(doc.textbounds) == 1 and len(doc.events) == 1
        assert doc.attributes == ()
        assert serialize_ann(doc) == ("T1\tLesion-Description 10 14\tmass\n"
                                      "E1\tLesion-Description:T1\n")

    def test_assertion_value_gets_attribute_line(self):
        ev = Event("Lesion", ((10, 14),),
                   (EventArg("Lesion-Assertion", ((29, 31),), "possible"),))
        doc = from_events("d", TEXT, [ev], SCHEMA)
        (a,) = doc.attributes
        assert a.name == "Lesion-AssertionVal" and a.value == "possible"
        assert a.target == doc.events[0].args[0][1]

    def test_textbound_shared_across_events(self):
        anat = EventArg("Lesion-Anatomy", ((22, 27),))
        evs = [Event("Lesion", ((10, 14),), (anat,)),
               Event("Lesion", ((32, 38),), (anat,))]
        doc = from_events("d", TEXT, evs, SCHEMA)
        assert len(doc.textbounds) == 3  # two triggers + one shared anatomy
        assert doc.events[0].args[0][1] == doc.events[1].args[0][1]

    def test_same_span_different_value_not_shared(self):
        evs = [Event("Lesion", ((10, 14),),
                     (EventArg("Lesion-Assertion", ((29, 31),), "absent"),)),
               Event("Lesion", ((32, 38),),
                     (EventArg("Lesion-Assertion", ((29, 31),), "possible"),))]
        doc = from_events("d", TEXT, evs, SCHEMA)
        assertion_tids = {args[1] for e in doc.events for args in e.args}
        assert len(assertion_tids) == 2
        assert len(doc.attributes) == 2

    def test_repeated_role_suffixed_from_2(self):
        ev = Event("Lesion", ((10, 14),),
                   (EventArg("Lesion-Anatomy", ((22, 27),)),
                    EventArg("Lesion-Anatomy", ((46, 52),))))
        doc = from_events("d", TEXT, [ev], SCHEMA)
        roles = [r for r, _ in doc.events[0].args]
        assert roles == ["Lesion-Anatomy", "Lesion-Anatomy2"]

    def test_span_outside_text_rejected(self):
        with pytest.raises(StandoffError, match="outside text"):
            from_events("d", TEXT, [Event("Lesion", ((0, 999),))], SCHEMA)

    def test_unknown_role_rejected(self):
        ev = Event("Lesion", ((10, 14),), (EventArg("Nope", ((22, 27),)),))
        with pytest.raises(StandoffError, match="unknown role"):
            from_events("d", TEXT, [ev], SCHEMA)

    def test_unknown_event_type_rejected(self):
        with pytest.raises(StandoffError, match="unknown event type"):
            from_events("d", TEXT, [Event("Tumor", ((10, 14),))], SCHEMA)


class TestFiles:
    def test_write_read_round_trip(self, tmp_path):
        ev = Event("Lesion", ((10, 14),),
                   (EventArg("Lesion-Assertion", ((29, 31),), "absent"),))
        doc = from_events("p1/s3", TEXT, [ev], SCHEMA)
        txt, ann = write_document(doc, tmp_path)
        assert txt == tmp_path / "p1" / "s3.txt"
        docs = list(iter_corpus(tmp_path))
        assert [d.doc_id for d in docs] == ["p1/s3"]
        events, violations = to_events(docs[0], SCHEMA)
        assert events == [ev] and violations == []

    def test_missing_ann_treated_as_empty(self, tmp_path):
        (tmp_path / "r.txt").write_text(TEXT, encoding="utf-8")
        doc = read_document(tmp_path / "r.txt")
        assert doc.doc_id == "r" and doc.textbounds == ()

    def test_corpus_sorted_by_path(self, tmp_path):
        for name in ("b", "a", "c"):
            (tmp_path / f"{name}.txt").write_text("x", encoding="utf-8")
            (tmp_path / f"{name}.ann").write_text("", encoding="utf-8")
        assert [d.doc_id for d in iter_corpus(tmp_path)] == ["a", "b", "c"]


# -- properties ---------------------------------------------------------------

PROP_TEXT = "Lots of liver mass text here with a nodule and an effusion seen today."

_frag = st.lists(st.integers(0, len(PROP_TEXT) - 1), min_size=2, max_size=4,
                 unique=True).map(lambda pts: _to_frags(sorted(pts)))


def _to_frags(pts):
    if len(pts) % 2:
        pts = pts[:-1]
    return tuple((pts[i], pts[i + 1]) for i in range(0, len(pts), 2))


@st.composite
def _events(draw):
    out = []
    for _ in range(draw(st.integers(0, 4))):
        et = draw(st.sampled_from(SCHEMA.event_types))
        args = []
        for _ in range(draw(st.integers(0, 3))):
            adef = draw(st.sampled_from(et.arguments))
            role = draw(st.sampled_from(adef.roles))
            value = draw(st.sampled_from(adef.values)) if adef.values else None
            args.append(EventArg(role, draw(_frag), value))
        out.append(Event(et.name, draw(_frag), tuple(args)))
    return out


@given(_events())
def test_round_trip_through_files(events):
    doc = from_events("d", PROP_TEXT, events, SCHEMA)
    reparsed = parse_ann("d", PROP_TEXT, serialize_ann(doc))
    got, violations = to_events(reparsed, SCHEMA)
    assert got == events
    assert [v for v in violations if v.code != "duplicate_argument_strict"] == []


@given(_events())
def test_serialize_parse_serialize_fixpoint(events):
    doc = from_events("d", PROP_TEXT, events, SCHEMA)
    once = serialize_ann(doc)
    assert serialize_ann(parse_ann("d", PROP_TEXT, once)) == once
