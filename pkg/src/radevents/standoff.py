"""Reader/writer for BRAT standoff annotation (.txt + .ann) and conversion
to/from normalized finding events.

Offsets on disk are byte offsets into the UTF-8 encoded report text (the
convention of the annotation tool); in memory everything is character ranges.
The parser validates that byte offsets fall on character boundaries, that
fragments are sorted and non-overlapping, and that the surface column matches
the fragment substrings joined by single spaces (newlines written as spaces).
Relation/normalization/comment lines are preserved verbatim and written back
byte-identical.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .schema import SPAN_WITH_VALUE, EventSchema, SchemaError, Violation, validate_events

Fragments = tuple[tuple[int, int], ...]

_STRUCTURED_RE = re.compile(r"^([TEA])(\d+)\b")


class StandoffError(ValueError):
    """Malformed standoff input or an unserializable document."""


# -- raw annotation lines ----------------------------------------------------

@dataclass(frozen=True)
class TextBound:
    id: str
    label: str
    fragments: Fragments            # character ranges into the document text
    surface: str                    # as written on the .ann line
    line: int | None = None         # original 0-based line index, for byte-faithful output


@dataclass(frozen=True)
class EventLine:
    id: str
    type_label: str
    trigger: str                    # TextBound id
    args: tuple[tuple[str, str], ...]  # (role as written, TextBound id)
    line: int | None = None


@dataclass(frozen=True)
class AttributeLine:
    id: str
    name: str
    target: str
    value: str | None = None
    line: int | None = None


@dataclass(frozen=True)
class AnnotationDoc:
    doc_id: str
    text: str
    textbounds: tuple[TextBound, ...] = ()
    events: tuple[EventLine, ...] = ()
    attributes: tuple[AttributeLine, ...] = ()
    passthrough: tuple[tuple[int, str], ...] = ()   # (line index, raw line)

    def textbound(self, tid: str) -> TextBound:
        for t in self.textbounds:
            if t.id == tid:
                return t
        raise StandoffError(f"{self.doc_id}: dangling reference {tid!r}")


# -- normalized events -------------------------------------------------------

@dataclass(frozen=True)
class EventArg:
    role: str
    fragments: Fragments
    value: str | None = None


@dataclass(frozen=True)
class Event:
    event_type: str
    trigger: Fragments
    args: tuple[EventArg, ...] = ()


# -- byte/char offset conversion ---------------------------------------------

def _offset_maps(text: str) -> tuple[list[int], dict[int, int]]:
    """char->byte table (length len(text)+1) and byte->char dict of valid boundaries."""
    c2b = [0] * (len(text) + 1)
    pos = 0
    for i, ch in enumerate(text):
        c2b[i] = pos
        pos += len(ch.encode("utf-8"))
    c2b[len(text)] = pos
    return c2b, {b: c for c, b in enumerate(c2b)}


def _surface_of(text: str, fragments: Fragments) -> str:
    return " ".join(text[a:b] for a, b in fragments).replace("\n", " ")


# -- parsing ------------------------------------------------------------------

def parse_ann(doc_id: str, text: str, ann: str) -> AnnotationDoc:
    """Parse an .ann file against its report text. Raises StandoffError with
    the doc id and 1-based line number on any malformed or inconsistent line."""
    c2b, b2c = _offset_maps(text)
    nbytes = c2b[len(text)]
    textbounds: list[TextBound] = []
    events: list[EventLine] = []
    attributes: list[AttributeLine] = []
    passthrough: list[tuple[int, str]] = []
    ids_seen: dict[str, set[str]] = {"T": set(), "E": set(), "A": set()}

    def err(lineno: int, msg: str) -> StandoffError:
        return StandoffError(f"{doc_id}:{lineno}: {msg}")

    lines = ann.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for idx, raw in enumerate(lines):
        lineno = idx + 1
        m = _STRUCTURED_RE.match(raw)
        if not m:
            passthrough.append((idx, raw))
            continue
        kind, ident = m.group(1), m.group(0)
        if ident in ids_seen[kind]:
            raise err(lineno, f"duplicate id {ident}")
        ids_seen[kind].add(ident)
        cols = raw.split("\t")
        if kind == "T":
            if len(cols) < 3:
                raise err(lineno, "textbound needs 3 tab-separated columns")
            header, surface = cols[1], "\t".join(cols[2:])
            label, _, frag_text = header.partition(" ")
            if not label or not frag_text:
                raise err(lineno, "textbound header needs a label and offsets")
            frags: list[tuple[int, int]] = []
            for piece in frag_text.split(";"):
                parts = piece.split()
                if len(parts) != 2:
                    raise err(lineno, f"bad fragment {piece!r}")
                try:
                    b_start, b_end = int(parts[0]), int(parts[1])
                except ValueError:
                    raise err(lineno, f"non-integer offset in {piece!r}") from None
                if not 0 <= b_start < b_end <= nbytes:
                    raise err(lineno, f"offsets {b_start} {b_end} out of bounds "
                                       f"(text is {nbytes} bytes)")
                if b_start not in b2c or b_end not in b2c:
                    raise err(lineno, f"offset in {piece!r} not on a character boundary")
                frags.append((b2c[b_start], b2c[b_end]))
            for (a1, b1), (a2, b2) in zip(frags, frags[1:]):
                if a2 < b1:
                    raise err(lineno, "fragments overlap or are out of order")
            expected = _surface_of(text, tuple(frags))
            if surface != expected:
                raise err(lineno, f"surface mismatch: annotation says {surface!r}, "
                                   f"text has {expected!r}")
            textbounds.append(TextBound(ident, label, tuple(frags), surface, line=idx))
        elif kind == "E":
            if len(cols) != 2:
                raise err(lineno, "event line needs 2 tab-separated columns")
            items = cols[1].split()
            if not items:
                raise err(lineno, "event line has no trigger")
            pairs = []
            for item in items:
                role, sep, target = item.partition(":")
                if not sep or not role or not target:
                    raise err(lineno, f"bad role:target item {item!r}")
                pairs.append((role, target))
            type_label, trigger = pairs[0]
            events.append(EventLine(ident, type_label, trigger,
                                    tuple(pairs[1:]), line=idx))
        else:  # A
            if len(cols) != 2:
                raise err(lineno, "attribute line needs 2 tab-separated columns")
            items = cols[1].split()
            if len(items) not in (2, 3):
                raise err(lineno, "attribute needs a name, a target and at most one value")
            value = items[2] if len(items) == 3 else None
            attributes.append(AttributeLine(ident, items[0], items[1], value, line=idx))

    doc = AnnotationDoc(doc_id, text, tuple(textbounds), tuple(events),
                        tuple(attributes), tuple(passthrough))
    _check_references(doc)
    return doc


def _check_references(doc: AnnotationDoc) -> None:
    tids = {t.id for t in doc.textbounds}
    eids = {e.id for e in doc.events}
    for e in doc.events:
        for _, target in ((e.type_label, e.trigger),) + e.args:
            if target not in tids:
                raise StandoffError(f"{doc.doc_id}: event {e.id} references "
                                    f"unknown textbound {target!r}")
    for a in doc.attributes:
        if a.target not in tids and a.target not in eids:
            raise StandoffError(f"{doc.doc_id}: attribute {a.id} references "
                                f"unknown target {a.target!r}")


# -- serialization -------------------------------------------------------------

def serialize_ann(doc: AnnotationDoc, canonicalize: bool = False) -> str:
    """Write the .ann text. Lines parsed from a file come back in their
    original positions; programmatically added lines are appended in T, E, A
    order. ``canonicalize`` renumbers ids sequentially per kind."""
    _check_references(doc)
    c2b, _ = _offset_maps(doc.text)
    rename: dict[str, str] = {}
    if canonicalize:
        for prefix, items in (("T", doc.textbounds), ("E", doc.events),
                              ("A", doc.attributes)):
            for n, item in enumerate(items, start=1):
                rename[item.id] = f"{prefix}{n}"

    def rid(ident: str) -> str:
        return rename.get(ident, ident)

    entries: list[tuple[float, str]] = []
    fallback = len(doc.passthrough) + len(doc.textbounds) + len(doc.events) \
        + len(doc.attributes)

    def pos(item_line: int | None, order: int) -> float:
        return float(item_line) if item_line is not None else float(fallback + order)

    order = 0
    for t in doc.textbounds:
        frag_text = ";".join(f"{c2b[a]} {c2b[b]}" for a, b in t.fragments)
        entries.append((pos(t.line, order), f"{rid(t.id)}\t{t.label} {frag_text}\t{t.surface}"))
        order += 1
    for e in doc.events:
        items = " ".join(f"{role}:{rid(target)}"
                         for role, target in ((e.type_label, e.trigger),) + e.args)
        entries.append((pos(e.line, order), f"{rid(e.id)}\t{items}"))
        order += 1
    for a in doc.attributes:
        tail = f" {a.value}" if a.value is not None else ""
        entries.append((pos(a.line, order), f"{rid(a.id)}\t{a.name} {rid(a.target)}{tail}"))
        order += 1
    for idx, raw in doc.passthrough:
        entries.append((float(idx), raw))
    entries.sort(key=lambda kv: kv[0])
    if not entries:
        return ""
    return "\n".join(line for _, line in entries) + "\n"


# -- conversion to and from normalized events ----------------------------------

def _resolve_event_type(schema: EventSchema, label: str) -> str | None:
    try:
        return schema.event_type(label).name
    except SchemaError:
        pass
    try:
        et, arg = schema.resolve_label(label)
        if arg is None:
            return et.name
    except SchemaError:
        pass
    return None


def _strip_role_suffix(schema: EventSchema, role: str) -> str:
    if role in schema.roles():
        return role
    base = re.sub(r"\d+$", "", role)
    return base if base in schema.roles() else role


def to_events(doc: AnnotationDoc, schema: EventSchema,
              strict: bool = False) -> tuple[list[Event], list[Violation]]:
    """Resolve annotation lines into normalized events.

    Nothing here is fatal: events that cannot be typed are skipped and every
    problem is returned as a Violation (indexed by event-line position).
    Values for span-with-value arguments come from the attribute on the
    argument textbound, else from a value-suffixed entity label (fallback
    input dialect), else from the schema default.
    """
    tb = {t.id: t for t in doc.textbounds}
    attr_value: dict[tuple[str, str], str] = {}
    for a in doc.attributes:
        if a.value is not None:
            attr_value[(a.name, a.target)] = a.value

    events: list[Event] = []
    violations: list[Violation] = []
    kept_index: list[int] = []
    for i, el in enumerate(doc.events):
        trigger_tb = tb[el.trigger]
        et_name = _resolve_event_type(schema, el.type_label) \
            or _resolve_event_type(schema, trigger_tb.label)
        if et_name is None:
            violations.append(Violation(
                "unknown_event_type",
                f"event {el.id}: cannot type {el.type_label!r} "
                f"(trigger label {trigger_tb.label!r})", i))
            continue
        et = schema.event_type(et_name)
        if trigger_tb.label != et.trigger_label and \
                _resolve_event_type(schema, trigger_tb.label) != et_name:
            violations.append(Violation(
                "trigger_label",
                f"event {el.id}: trigger labeled {trigger_tb.label!r}, "
                f"expected {et.trigger_label!r}", i))
        args: list[EventArg] = []
        for raw_role, tid in el.args:
            role = _strip_role_suffix(schema, raw_role)
            t = tb[tid]
            label_value: str | None = None
            base_label: str | None = None
            try:
                schema.resolve_label(t.label)
                base_label = t.label
            except SchemaError:
                try:
                    base_label, label_value = schema.split_value_label(t.label)
                except SchemaError:
                    violations.append(Violation(
                        "unknown_label", f"event {el.id}: argument {tid} has "
                        f"unknown label {t.label!r}", i))
            value: str | None = None
            adef = None
            try:
                _, adef = schema.resolve_role(role)
            except SchemaError:
                pass
            if adef is not None:
                if base_label is not None and base_label != adef.entity_label:
                    violations.append(Violation(
                        "arg_label", f"event {el.id}: role {role} filled by "
                        f"{t.label!r}, expected {adef.entity_label!r}", i))
                if adef.kind == SPAN_WITH_VALUE:
                    value = attr_value.get((adef.attribute_name, tid))
                    if value is None:
                        value = label_value
                    if value is None:
                        value = adef.default_value
            args.append(EventArg(role, t.fragments, value))
        events.append(Event(et_name, trigger_tb.fragments, tuple(args)))
        kept_index.append(i)
    checked = validate_events(schema, events, strict=strict)
    violations.extend(replace(v, event_index=kept_index[v.event_index])
                      if v.event_index is not None else v for v in checked)
    violations.sort(key=lambda v: (v.event_index if v.event_index is not None else -1))
    return events, violations


def from_events(doc_id: str, text: str, events: Sequence[Event],
                schema: EventSchema,
                passthrough: Iterable[tuple[int, str]] = ()) -> AnnotationDoc:
    """Emit standoff lines for normalized events (the output path for
    predictions). Textbounds are shared between events when label, fragments
    and value all agree; repeated roles within an event get numeric suffixes
    starting at 2. Raises StandoffError on spans outside the text or roles
    unknown to the schema."""
    tb_ids: dict[tuple[str, Fragments, str | None], str] = {}
    textbounds: list[TextBound] = []
    attributes: list[AttributeLine] = []

    def check_fragments(frags: Fragments, what: str) -> None:
        if not frags:
            raise StandoffError(f"{doc_id}: {what} has no fragments")
        prev = 0
        for a, b in frags:
            if not 0 <= a < b <= len(text):
                raise StandoffError(f"{doc_id}: {what} span [{a},{b}) outside text "
                                    f"of length {len(text)}")
            if a < prev:
                raise StandoffError(f"{doc_id}: {what} fragments overlap or unsorted")
            prev = b

    def intern_tb(label: str, frags: Fragments, value: str | None,
                  attr_name: str | None) -> str:
        key = (label, frags, value)
        if key in tb_ids:
            return tb_ids[key]
        tid = f"T{len(textbounds) + 1}"
        tb_ids[key] = tid
        textbounds.append(TextBound(tid, label, frags, _surface_of(text, frags)))
        if value is not None and attr_name is not None:
            attributes.append(AttributeLine(f"A{len(attributes) + 1}",
                                            attr_name, tid, value))
        return tid

    event_lines: list[EventLine] = []
    for ev in events:
        try:
            et = schema.event_type(ev.event_type)
        except SchemaError as e:
            raise StandoffError(f"{doc_id}: {e}") from None
        check_fragments(ev.trigger, f"trigger of {ev.event_type}")
        trig_id = intern_tb(et.trigger_label, ev.trigger, None, None)
        role_counts: dict[str, int] = {}
        pairs: list[tuple[str, str]] = []
        for arg in ev.args:
            try:
                _, adef = schema.resolve_role(arg.role)
            except SchemaError as e:
                raise StandoffError(f"{doc_id}: {e}") from None
            check_fragments(arg.fragments, f"argument {arg.role}")
            attr_name = adef.attribute_name if adef.kind == SPAN_WITH_VALUE else None
            tid = intern_tb(adef.entity_label, arg.fragments,
                            arg.value if adef.kind == SPAN_WITH_VALUE else None,
                            attr_name)
            n = role_counts.get(arg.role, 0) + 1
            role_counts[arg.role] = n
            pairs.append((arg.role if n == 1 else f"{arg.role}{n}", tid))
        event_lines.append(EventLine(f"E{len(event_lines) + 1}", et.trigger_label,
                                     trig_id, tuple(pairs)))
    return AnnotationDoc(doc_id, text, tuple(textbounds), tuple(event_lines),
                         tuple(attributes), tuple(passthrough))


# -- corpus file IO -------------------------------------------------------------

def read_document(txt_path: str | Path, ann_path: str | Path | None = None,
                  doc_id: str | None = None) -> AnnotationDoc:
    txt_path = Path(txt_path)
    if ann_path is None:
        ann_path = txt_path.with_suffix(".ann")
    if doc_id is None:
        doc_id = txt_path.stem
    text = txt_path.read_text(encoding="utf-8")
    ann = Path(ann_path).read_text(encoding="utf-8") if Path(ann_path).exists() else ""
    return parse_ann(doc_id, text, ann)


def write_document(doc: AnnotationDoc, out_dir: str | Path,
                   canonicalize: bool = False) -> tuple[Path, Path]:
    """Write <doc_id>.txt and <doc_id>.ann under out_dir; doc ids may contain
    slashes, producing a folder structure."""
    out_dir = Path(out_dir)
    txt_path = out_dir / f"{doc.doc_id}.txt"
    txt_path.parent.mkdir(parents=True, exist_ok=True)
    ann_path = txt_path.with_suffix(".ann")
    txt_path.write_text(doc.text, encoding="utf-8")
    ann_path.write_text(serialize_ann(doc, canonicalize=canonicalize), encoding="utf-8")
    return txt_path, ann_path


def iter_corpus(root: str | Path) -> Iterator[AnnotationDoc]:
    """Yield documents under root (recursively, sorted by relative path).
    Doc ids are relative paths without the .txt suffix."""
    root = Path(root)
    for txt_path in sorted(root.rglob("*.txt")):
        doc_id = txt_path.relative_to(root).with_suffix("").as_posix()
        yield read_document(txt_path, doc_id=doc_id)
