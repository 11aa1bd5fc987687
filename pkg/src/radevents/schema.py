"""Finding-event schema: event types, triggers, argument kinds, categorical labels, roles.

The schema is loaded from a small line-oriented config (see ``load_schema``)
or built in code via ``default_schema``. Every other stage of the pipeline
(standoff conversion, task encoding, scoring) is parameterized by an
``EventSchema`` instance. Schemas are immutable after construction and safe
to share across threads and processes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

SPAN_ONLY = "span"
SPAN_WITH_VALUE = "value"

_IDENT_RE = re.compile(r"^[^\s()|=,]+$")


class SchemaError(ValueError):
    """Schema config could not be parsed, or the schema violates an invariant."""


def _check_ident(name: str, what: str, line: int | None = None) -> None:
    if not _IDENT_RE.match(name):
        where = f"line {line}: " if line is not None else ""
        raise SchemaError(f"{where}invalid {what} {name!r} (must be a single token "
                          f"without whitespace or parentheses)")


@dataclass(frozen=True)
class ArgumentDef:
    """One argument slot of an event type.

    ``kind`` is ``span`` (payload is the text span) or ``value`` (payload is a
    categorical label from ``values``). ``roles`` are the link names used in
    standoff event lines; most arguments carry a single role named after their
    entity label. ``strict_single`` marks arguments whose repetition within
    one event is only flagged in strict validation mode.
    """

    name: str
    entity_label: str
    kind: str
    values: tuple[str, ...] = ()
    default_value: str | None = None
    roles: tuple[str, ...] = ()
    repeatable: bool = True
    strict_single: bool = False
    attribute: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in (SPAN_ONLY, SPAN_WITH_VALUE):
            raise SchemaError(f"argument {self.name}: unknown kind {self.kind!r}")
        if (self.kind == SPAN_WITH_VALUE) != bool(self.values):
            raise SchemaError(f"argument {self.name}: kind={self.kind} requires "
                              f"{'a nonempty' if self.kind == SPAN_WITH_VALUE else 'an empty'} value set")
        if self.default_value is not None and self.default_value not in self.values:
            raise SchemaError(f"argument {self.name}: default {self.default_value!r} "
                              f"not in values {list(self.values)}")
        if not self.roles:
            object.__setattr__(self, "roles", (self.entity_label,))

    @property
    def attribute_name(self) -> str:
        """Standoff attribute name carrying this argument's categorical value."""
        return self.attribute or (self.entity_label + "Val")


@dataclass(frozen=True)
class EventTypeDef:
    name: str
    trigger_label: str
    arguments: tuple[ArgumentDef, ...]

    def argument(self, name: str) -> ArgumentDef:
        for a in self.arguments:
            if a.name == name:
                return a
        raise SchemaError(f"event type {self.name} has no argument {name!r}")


@dataclass(frozen=True)
class Violation:
    """One schema violation found in an event. Violations are data, not errors."""

    code: str
    message: str
    event_index: int | None = None

    def __str__(self) -> str:
        at = f" (event {self.event_index})" if self.event_index is not None else ""
        return f"{self.code}{at}: {self.message}"


@dataclass(frozen=True)
class EventSchema:
    event_types: tuple[EventTypeDef, ...]

    def __post_init__(self) -> None:
        seen_labels: dict[str, str] = {}
        seen_roles: dict[str, str] = {}
        for et in self.event_types:
            for label, origin in [(et.trigger_label, f"trigger of {et.name}")] + [
                (a.entity_label, f"argument {et.name}.{a.name}") for a in et.arguments
            ]:
                if label in seen_labels:
                    raise SchemaError(f"duplicate entity label {label!r} "
                                      f"({seen_labels[label]} and {origin})")
                seen_labels[label] = origin
            for a in et.arguments:
                for role in a.roles:
                    if role in seen_roles:
                        raise SchemaError(f"duplicate role {role!r} "
                                          f"({seen_roles[role]} and {et.name}.{a.name})")
                    seen_roles[role] = f"{et.name}.{a.name}"

    # -- lookups ----------------------------------------------------------

    @cached_property
    def _by_label(self) -> dict[str, tuple[EventTypeDef, ArgumentDef | None]]:
        out: dict[str, tuple[EventTypeDef, ArgumentDef | None]] = {}
        for et in self.event_types:
            out[et.trigger_label] = (et, None)
            for a in et.arguments:
                out[a.entity_label] = (et, a)
        return out

    @cached_property
    def _by_role(self) -> dict[str, tuple[EventTypeDef, ArgumentDef]]:
        return {role: (et, a)
                for et in self.event_types
                for a in et.arguments
                for role in a.roles}

    def event_type(self, name: str) -> EventTypeDef:
        for et in self.event_types:
            if et.name == name:
                return et
        raise SchemaError(f"unknown event type {name!r}")

    def resolve_label(self, label: str) -> tuple[EventTypeDef, ArgumentDef | None]:
        """Map an entity label to its (event type, argument); argument is None for triggers."""
        try:
            return self._by_label[label]
        except KeyError:
            raise SchemaError(f"unknown entity label {label!r}") from None

    def resolve_role(self, role: str) -> tuple[EventTypeDef, ArgumentDef]:
        try:
            return self._by_role[role]
        except KeyError:
            raise SchemaError(f"unknown role {role!r}") from None

    def is_trigger_label(self, label: str) -> bool:
        et, arg = self.resolve_label(label)
        return arg is None

    def roles_for(self, event_type: str, entity_label: str) -> tuple[str, ...]:
        """Roles that may link an entity of ``entity_label`` to a trigger of ``event_type``."""
        et, arg = self.resolve_label(entity_label)
        if arg is None or et.name != event_type:
            return ()
        return arg.roles

    def entity_labels(self) -> tuple[str, ...]:
        return tuple(self._by_label)

    def trigger_labels(self) -> tuple[str, ...]:
        return tuple(et.trigger_label for et in self.event_types)

    def roles(self) -> tuple[str, ...]:
        return tuple(self._by_role)

    def attribute_name(self, arg: ArgumentDef) -> str:
        return arg.attribute_name

    @cached_property
    def _by_attribute(self) -> dict[str, tuple[EventTypeDef, ArgumentDef]]:
        return {a.attribute_name: (et, a)
                for et in self.event_types
                for a in et.arguments
                if a.kind == SPAN_WITH_VALUE}

    def argument_for_attribute(self, attr_name: str) -> tuple[EventTypeDef, ArgumentDef] | None:
        return self._by_attribute.get(attr_name)

    # -- task label space --------------------------------------------------

    @cached_property
    def tag_labels(self) -> tuple[str, ...]:
        """Entity labels as they appear in BIO tags: span-with-value labels carry
        a ``-<value>`` suffix, one per categorical value."""
        out: list[str] = []
        for et in self.event_types:
            out.append(et.trigger_label)
            for a in et.arguments:
                if a.kind == SPAN_WITH_VALUE:
                    out.extend(f"{a.entity_label}-{v}" for v in a.values)
                else:
                    out.append(a.entity_label)
        return tuple(out)

    def bio_labels(self) -> tuple[str, ...]:
        out = ["O"]
        for lab in self.tag_labels:
            out.append("B-" + lab)
            out.append("I-" + lab)
        return tuple(out)

    def split_value_label(self, tag_label: str) -> tuple[str, str | None]:
        """Split a tag label into (entity label, categorical value).

        Matches the longest known entity label prefix, so value suffixes never
        collide with hyphens inside label names. Raises for unknown labels.
        """
        if tag_label in self._by_label:
            et, arg = self._by_label[tag_label]
            if arg is not None and arg.kind == SPAN_WITH_VALUE:
                raise SchemaError(f"label {tag_label!r} requires a value suffix")
            return tag_label, None
        best: tuple[str, str] | None = None
        for label, (et, arg) in self._by_label.items():
            if arg is None or arg.kind != SPAN_WITH_VALUE:
                continue
            prefix = label + "-"
            if tag_label.startswith(prefix):
                value = tag_label[len(prefix):]
                if value in arg.values and (best is None or len(label) > len(best[0])):
                    best = (label, value)
        if best is None:
            raise SchemaError(f"unknown tag label {tag_label!r}")
        return best


# -- config grammar --------------------------------------------------------

DEFAULT_CONFIG = """\
# Lesion / Medical Problem finding schema
event Lesion
  trigger Lesion-Description
  arg Anatomy label=Lesion-Anatomy kind=span
  arg Assertion label=Lesion-Assertion kind=value values=present|absent|possible default=present repeat=strict
  arg Characteristic label=Lesion-Characteristic kind=span
  arg Count label=Lesion-Count kind=span repeat=strict
  arg Size label=Lesion-Size kind=span roles=Lesion-Size-Present|Lesion-Size-Past repeat=strict
  arg Size-Trend label=Lesion-Size-Trend kind=value values=new|increasing|decreasing|no-change repeat=strict

event Medical-Problem
  trigger Medical-Problem
  arg Anatomy label=Medical-Anatomy kind=span
  arg Assertion label=Medical-Assertion kind=value values=present|absent|possible default=present repeat=strict
"""

_ARG_KEYS = ("label", "kind", "values", "default", "roles", "attr", "repeat")


def load_schema(config_text: str) -> EventSchema:
    """Parse the line-oriented schema config grammar.

    Grammar (one directive per line, ``#`` starts a comment)::

        event <Name>
          trigger <EntityLabel>
          arg <Name> label=<L> kind=span|value [values=v1|v2|...] [default=v]
              [roles=r1|r2|...] [attr=<AttrName>] [repeat=yes|no|strict]

    Omitted ``roles=`` defaults to a single role named after the entity label.
    """
    events: list[tuple[str, str | None, list[ArgumentDef], int]] = []
    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kw = fields[0]
        if kw == "event":
            if len(fields) != 2:
                raise SchemaError(f"line {lineno}: expected 'event <Name>'")
            _check_ident(fields[1], "event type name", lineno)
            events.append((fields[1], None, [], lineno))
        elif kw == "trigger":
            if not events:
                raise SchemaError(f"line {lineno}: 'trigger' before any 'event'")
            if len(fields) != 2:
                raise SchemaError(f"line {lineno}: expected 'trigger <EntityLabel>'")
            name, trig, args, at = events[-1]
            if trig is not None:
                raise SchemaError(f"line {lineno}: event {name} already has a trigger")
            _check_ident(fields[1], "trigger label", lineno)
            events[-1] = (name, fields[1], args, at)
        elif kw == "arg":
            if not events:
                raise SchemaError(f"line {lineno}: 'arg' before any 'event'")
            if len(fields) < 2:
                raise SchemaError(f"line {lineno}: expected 'arg <Name> key=value ...'")
            arg_name = fields[1]
            _check_ident(arg_name, "argument name", lineno)
            kv: dict[str, str] = {}
            for item in fields[2:]:
                if "=" not in item:
                    raise SchemaError(f"line {lineno}: expected key=value, got {item!r}")
                k, v = item.split("=", 1)
                if k not in _ARG_KEYS:
                    raise SchemaError(f"line {lineno}: unknown key {k!r}")
                if k in kv:
                    raise SchemaError(f"line {lineno}: duplicate key {k!r}")
                kv[k] = v
            if "label" not in kv or "kind" not in kv:
                raise SchemaError(f"line {lineno}: arg requires label= and kind=")
            if kv["kind"] not in (SPAN_ONLY, SPAN_WITH_VALUE):
                raise SchemaError(f"line {lineno}: kind must be span or value")
            repeat = kv.get("repeat", "yes")
            if repeat not in ("yes", "no", "strict"):
                raise SchemaError(f"line {lineno}: repeat must be yes, no or strict")
            values = tuple(v for v in kv.get("values", "").split("|") if v)
            roles = tuple(r for r in kv.get("roles", "").split("|") if r)
            for r in roles:
                _check_ident(r, "role", lineno)
            _check_ident(kv["label"], "entity label", lineno)
            try:
                arg = ArgumentDef(
                    name=arg_name,
                    entity_label=kv["label"],
                    kind=kv["kind"],
                    values=values,
                    default_value=kv.get("default"),
                    roles=roles,
                    repeatable=repeat != "no",
                    strict_single=repeat == "strict",
                    attribute=kv.get("attr"),
                )
            except SchemaError as e:
                raise SchemaError(f"line {lineno}: {e}") from None
            name, trig, args, at = events[-1]
            if any(a.name == arg_name for a in args):
                raise SchemaError(f"line {lineno}: duplicate argument name {arg_name!r} "
                                  f"in event {name}")
            args.append(arg)
        else:
            raise SchemaError(f"line {lineno}: unknown directive {kw!r}")

    if not events:
        raise SchemaError("no event types")
    defs = []
    for name, trig, args, at in events:
        if trig is None:
            raise SchemaError(f"line {at}: event {name} has no trigger")
        defs.append(EventTypeDef(name=name, trigger_label=trig, arguments=tuple(args)))
    return EventSchema(event_types=tuple(defs))


def serialize_schema(schema: EventSchema) -> str:
    """Emit the config grammar; ``load_schema`` reconstructs the schema exactly."""
    lines: list[str] = []
    for et in schema.event_types:
        if lines:
            lines.append("")
        lines.append(f"event {et.name}")
        lines.append(f"  trigger {et.trigger_label}")
        for a in et.arguments:
            parts = [f"arg {a.name}", f"label={a.entity_label}", f"kind={a.kind}"]
            if a.values:
                parts.append("values=" + "|".join(a.values))
            if a.default_value is not None:
                parts.append(f"default={a.default_value}")
            parts.append("roles=" + "|".join(a.roles))
            if a.attribute is not None:
                parts.append(f"attr={a.attribute}")
            if not a.repeatable:
                parts.append("repeat=no")
            elif a.strict_single:
                parts.append("repeat=strict")
            lines.append("  " + " ".join(parts))
    return "\n".join(lines) + "\n"


def default_schema() -> EventSchema:
    """The built-in Lesion / Medical Problem schema."""
    return load_schema(DEFAULT_CONFIG)


def validate_events(schema: EventSchema, events: Sequence, strict: bool = False) -> list[Violation]:
    """Check events against the schema. Returns every violation found; an empty
    list means the events are valid. Violations never raise."""
    out: list[Violation] = []
    for i, ev in enumerate(events):
        try:
            et = schema.event_type(ev.event_type)
        except SchemaError:
            out.append(Violation("unknown_event_type", f"{ev.event_type!r}", i))
            continue
        per_arg_count: dict[str, int] = {}
        for arg in ev.args:
            try:
                role_et, adef = schema.resolve_role(arg.role)
            except SchemaError:
                out.append(Violation("unknown_role", f"role {arg.role!r}", i))
                continue
            if role_et.name != et.name:
                out.append(Violation(
                    "role_event_type",
                    f"role {arg.role!r} belongs to {role_et.name}, not {et.name}", i))
                continue
            per_arg_count[adef.name] = per_arg_count.get(adef.name, 0) + 1
            if adef.kind == SPAN_WITH_VALUE:
                if arg.value is None:
                    out.append(Violation("missing_value",
                                         f"{arg.role} requires a categorical value", i))
                elif arg.value not in adef.values:
                    out.append(Violation(
                        "bad_value",
                        f"{arg.role} value {arg.value!r} not in {list(adef.values)}", i))
            elif arg.value is not None:
                out.append(Violation("unexpected_value",
                                     f"{arg.role} is span-only but carries {arg.value!r}", i))
        for name, n in per_arg_count.items():
            if n <= 1:
                continue
            adef = et.argument(name)
            if not adef.repeatable:
                out.append(Violation("duplicate_argument",
                                     f"{et.name}.{name} appears {n} times", i))
            elif strict and adef.strict_single:
                out.append(Violation("duplicate_argument_strict",
                                     f"{et.name}.{name} appears {n} times", i))
    return out


def to_annotation_conf(schema: EventSchema) -> str:
    """Render a BRAT annotation.conf for the schema (convenience emitter)."""
    ent = [a.entity_label for et in schema.event_types for a in et.arguments]
    ev_lines = []
    for et in schema.event_types:
        specs = ", ".join(f"{r}*:{a.entity_label}" for a in et.arguments for r in a.roles)
        ev_lines.append(f"{et.trigger_label}\t{specs}")
    attrs = [f"{a.attribute_name}\tArg:{a.entity_label}, Value:" + "|".join(a.values)
             for et in schema.event_types for a in et.arguments
             if a.kind == SPAN_WITH_VALUE]
    return ("[entities]\n" + "\n".join(dict.fromkeys(ent)) +
            "\n\n[events]\n" + "\n".join(ev_lines) +
            "\n\n[attributes]\n" + "\n".join(attrs) +
            "\n\n[relations]\n")
