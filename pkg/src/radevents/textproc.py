"""Offset-preserving sentence segmentation and tokenization.

Radiology reports are heavily line-structured, so a newline is always a hard
sentence boundary. Within a line, ``.``/``?``/``!`` followed by whitespace and
an uppercase letter or digit ends a sentence, unless the preceding token is a
single letter (an initial) or a known abbreviation. Tokens are whitespace
chunks with leading/trailing punctuation detached; interior punctuation stays
put, which keeps measurements like ``4.1`` and hyphenated words whole.

Every token records exact character offsets into the original document, so
downstream task encodings and scorers never re-join text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

ABBREVIATIONS = frozenset({"Dr", "Mr", "St", "vs", "approx"})

_TERMINATORS = ".?!"
_CHUNK_RE = re.compile(r"\S+")


class CoverageError(ValueError):
    """An entity span covers no tokens (whitespace-only or empty span)."""


@dataclass(frozen=True)
class Token:
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class Sentence:
    start: int
    end: int
    tokens: tuple[Token, ...]

    @property
    def text_range(self) -> tuple[int, int]:
        return (self.start, self.end)


def _preceding_token(text: str, period_at: int, line_start: int) -> str:
    """The whitespace-delimited chunk right before ``period_at``, with leading
    punctuation stripped — i.e. what the tokenizer would emit as the last word."""
    i = period_at
    while i > line_start and not text[i - 1].isspace():
        i -= 1
    chunk = text[i:period_at]
    return chunk.lstrip("".join(c for c in set(chunk) if not c.isalnum()))


def _trim(text: str, start: int, end: int) -> tuple[int, int] | None:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return (start, end) if start < end else None


def segment(text: str) -> list[tuple[int, int]]:
    """Sentence character ranges, sorted and disjoint, covering every
    non-whitespace character. Deterministic; no trailing whitespace included."""
    spans: list[tuple[int, int]] = []
    line_start = 0
    n = len(text)
    for line_end in [m.start() for m in re.finditer(r"\n", text)] + [n]:
        start = line_start
        i = line_start
        while i < line_end:
            c = text[i]
            if c in _TERMINATORS and i + 1 < line_end and text[i + 1].isspace():
                j = i + 1
                while j < line_end and text[j].isspace():
                    j += 1
                nxt = text[j] if j < line_end else ""
                if nxt and (nxt.isupper() or nxt.isdigit()):
                    prev = _preceding_token(text, i, line_start)
                    initial = len(prev) == 1 and prev.isalpha()
                    if not initial and prev not in ABBREVIATIONS:
                        spans.append((start, i + 1))
                        start = i = j
                        continue
            i += 1
        spans.append((start, line_end))
        line_start = line_end + 1
    out = []
    for s, e in spans:
        trimmed = _trim(text, s, e)
        if trimmed is not None:
            out.append(trimmed)
    return out


def tokenize(text: str, base: int = 0) -> list[Token]:
    """Tokenize one sentence's text; offsets are shifted by ``base`` so they
    index into the containing document."""
    tokens: list[Token] = []
    for m in _CHUNK_RE.finditer(text):
        chunk, s = m.group(), m.start()
        i, j = 0, len(chunk)
        lead: list[tuple[int, int]] = []
        while i < j and not chunk[i].isalnum():
            lead.append((s + i, s + i + 1))
            i += 1
        trail: list[tuple[int, int]] = []
        while j > i and not chunk[j - 1].isalnum():
            trail.append((s + j - 1, s + j))
            j -= 1
        spans = lead + ([(s + i, s + j)] if j > i else []) + trail[::-1]
        for a, b in spans:
            tokens.append(Token(base + a, base + b, text[a:b]))
    return tokens


def tokenize_document(text: str) -> list[Sentence]:
    return [Sentence(s, e, tuple(tokenize(text[s:e], base=s)))
            for s, e in segment(text)]


def merge_straddling(sentences: Sequence[Sentence],
                     envelopes: Iterable[tuple[int, int]]) -> tuple[list[Sentence], int]:
    """Merge consecutive sentences so each envelope range lies inside a single
    sentence. Returns (sentences, boundaries_removed). Token offsets are
    untouched; a merged sentence simply concatenates token tuples."""
    sentences = list(sentences)
    if not sentences:
        return [], 0
    keep_boundary = [True] * (len(sentences) - 1)
    for a, b in envelopes:
        touching = [i for i, s in enumerate(sentences)
                    if max(a, s.start) < min(b, s.end)]
        for i in range(touching[0], touching[-1]) if touching else []:
            keep_boundary[i] = False
    merged: list[Sentence] = []
    run = [sentences[0]]
    for i, s in enumerate(sentences[1:]):
        if keep_boundary[i]:
            merged.append(_merge_run(run))
            run = [s]
        else:
            run.append(s)
    merged.append(_merge_run(run))
    return merged, keep_boundary.count(False)


def _merge_run(run: list[Sentence]) -> Sentence:
    if len(run) == 1:
        return run[0]
    return Sentence(run[0].start, run[-1].end,
                    tuple(t for s in run for t in s.tokens))


def envelope(fragments: Iterable[tuple[int, int]]) -> tuple[int, int]:
    frs = list(fragments)
    return (min(a for a, _ in frs), max(b for _, b in frs))


def cover_tokens(sentences: Sequence[Sentence],
                 fragments: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    """(sentence index, token index) pairs of every token overlapping any
    fragment. A partially covered token is included whole. Raises
    CoverageError if nothing is covered."""
    frs = sorted(fragments)
    out: list[tuple[int, int]] = []
    for si, sent in enumerate(sentences):
        if not any(max(a, sent.start) < min(b, sent.end) for a, b in frs):
            continue
        for ti, tok in enumerate(sent.tokens):
            if any(max(a, tok.start) < min(b, tok.end) for a, b in frs):
                out.append((si, ti))
    if not out:
        raise CoverageError(f"span fragments {frs} cover no tokens")
    return out
