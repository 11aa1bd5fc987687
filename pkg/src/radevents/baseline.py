"""Dependency-free trainable models for the two pipeline slots: an
averaged-perceptron BIO tagger decoded with Viterbi under a hard
well-formedness constraint, and an averaged-perceptron relation classifier
over marker-aware features.

Both models are exactly reproducible: training visits examples in a seeded
shuffle order, all arithmetic is plain float addition in fixed order, and
unseen features score zero. The feature templates below are normative —
changing them changes every trained model.

Tagger features per token (plus first-order label transitions):
  w=<lower>            lowercased word
  shape=<shape>        character-class shape, runs collapsed (Xx, d.d, ...)
  p1=..p4=, s1=..s4=   lowercased prefixes/suffixes of length 1-4
  w-2=, w-1=, w+1=, w+2=  lowercased window words, <s>/</s> at boundaries

Relation features per candidate:
  bias; et=<event type>; al=<argument label>; et+al=<both>; av=<value>
  tw=<w> / aw=<w>      lowercased trigger / argument span words
  dir=fwd|rev          argument after / before the trigger
  dist=<bucket>        token gap between spans: 0..5, 6-10, 11+
  bw=<w>               bag of lowercased between-span words
  tm-2=..tm+2=, am-2=..am+2=  lowercased words around the trigger/argument
                       marker pairs in the marked sequence

Persistence is a versioned JSON dump (sorted keys): {"format":
"radevents-tagger"|"radevents-rel", "version": 1, ...weights...}; loading a
saved model reproduces it exactly.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, Sequence

from .encoding import DEFAULT_MARKERS, NO_RELATION, MarkerConfig, RelationCandidate
from .schema import EventSchema

START = "<s>"


class BaselineError(ValueError):
    pass


# -- feature extraction ------------------------------------------------------------


def _shape(word: str) -> str:
    out = []
    for ch in word:
        if ch.isupper():
            cls = "X"
        elif ch.islower():
            cls = "x"
        elif ch.isdigit():
            cls = "d"
        else:
            cls = ch
        if not out or out[-1] != cls:
            out.append(cls)
    return "".join(out)


def token_features(tokens: Sequence[str], i: int) -> tuple[str, ...]:
    word = tokens[i]
    low = word.lower()
    feats = [f"w={low}", f"shape={_shape(word)}"]
    for k in range(1, 5):
        if k <= len(low):
            feats.append(f"p{k}={low[:k]}")
            feats.append(f"s{k}={low[-k:]}")
    for off in (-2, -1, 1, 2):
        j = i + off
        if j < 0:
            ctx = START
        elif j >= len(tokens):
            ctx = "</s>"
        else:
            ctx = tokens[j].lower()
        feats.append(f"w{off:+d}={ctx}")
    return tuple(feats)


def _dist_bucket(gap: int) -> str:
    if gap <= 5:
        return str(gap)
    return "6-10" if gap <= 10 else "11+"


def _marker_window(marked: Sequence[str], open_i: int, close_i: int,
                   prefix: str) -> list[str]:
    feats = []
    for off in (-2, -1):
        j = open_i + off
        feats.append(f"{prefix}{off:+d}={marked[j].lower() if j >= 0 else START}")
    for off in (1, 2):
        j = close_i + off
        feats.append(f"{prefix}{off:+d}="
                     f"{marked[j].lower() if j < len(marked) else '</s>'}")
    return feats


def rel_features(cand: RelationCandidate,
                 markers: MarkerConfig = DEFAULT_MARKERS) -> tuple[str, ...]:
    marked = cand.marked_tokens
    t_open = marked.index(markers.trigger_open)
    t_close = marked.index(markers.trigger_close)
    a_open = marked.index(markers.arg_open)
    a_close = marked.index(markers.arg_close)
    feats = ["bias", f"et={cand.event_type}", f"al={cand.arg_label}",
             f"et+al={cand.event_type}|{cand.arg_label}"]
    if cand.arg_value is not None:
        feats.append(f"av={cand.arg_value}")
    for w in marked[t_open + 1:t_close]:
        feats.append(f"tw={w.lower()}")
    for w in marked[a_open + 1:a_close]:
        feats.append(f"aw={w.lower()}")
    (ts, te), (as_, ae) = cand.trigger_tokens, cand.arg_tokens
    if as_ >= te:
        feats.append("dir=fwd")
        feats.append(f"dist={_dist_bucket(as_ - te)}")
        lo, hi = t_close, a_open
    else:
        feats.append("dir=rev")
        feats.append(f"dist={_dist_bucket(ts - ae)}")
        lo, hi = a_close, t_open
    marker_set = set(markers.as_tuple())
    for w in marked[lo + 1:hi]:
        if w not in marker_set:
            feats.append(f"bw={w.lower()}")
    feats.extend(_marker_window(marked, t_open, t_close, "tm"))
    feats.extend(_marker_window(marked, a_open, a_close, "am"))
    return tuple(feats)


# -- Viterbi machinery (shared by decoding and training) ----------------------------


@lru_cache(maxsize=8)
def _allowed_prev(labels: tuple[str, ...]) -> tuple[tuple[tuple[int, ...], bool], ...]:
    """Per label: (real predecessor ids, whether sentence start is allowed).
    I-X may only follow B-X or I-X; every other label may follow anything."""
    ids = {lab: i for i, lab in enumerate(labels)}
    out = []
    for j, lab in enumerate(labels):
        if lab.startswith("I-"):
            out.append(((ids["B-" + lab[2:]], j), False))
        else:
            out.append((tuple(range(len(labels))), True))
    return tuple(out)


def _emission_scores(emit_rows, feats_seq, n_labels: int) -> list[list[float]]:
    emits = []
    for token_feats in feats_seq:
        scores = [0.0] * n_labels
        for f in token_feats:
            row = emit_rows.get(f)
            if row:
                for j, w in row.items():
                    scores[j] += w
        emits.append(scores)
    return emits


def _trans_matrix(trans_rows, n_labels: int) -> list[list[float]]:
    """Dense (n_labels+1) x n_labels matrix; the extra row is sentence start."""
    matrix = [[0.0] * n_labels for _ in range(n_labels + 1)]
    for p, row in trans_rows.items():
        mp = matrix[p]
        for j, w in row.items():
            mp[j] = w
    return matrix


def _viterbi(emits: list[list[float]], trans: list[list[float]],
             allowed: Sequence[tuple[tuple[int, ...], bool]]) -> list[int]:
    """Best label-id path. Ties everywhere resolve to the lowest label id
    (strict > scans), so an all-zero model yields all O."""
    n_labels = len(allowed)
    neg = float("-inf")
    start_row = trans[n_labels]
    dp = [emits[0][j] + start_row[j] if allowed[j][1] else neg
          for j in range(n_labels)]
    back: list[list[int]] = []
    for emit in emits[1:]:
        ndp = [neg] * n_labels
        nbp = [0] * n_labels
        for j in range(n_labels):
            best, best_p = neg, 0
            for p in allowed[j][0]:
                score = dp[p] + trans[p][j]
                if score > best:
                    best, best_p = score, p
            ndp[j] = best + emit[j]
            nbp[j] = best_p
        dp = ndp
        back.append(nbp)
    best, best_j = neg, 0
    for j in range(n_labels):
        if dp[j] > best:
            best, best_j = dp[j], j
    path = [best_j]
    for nbp in reversed(back):
        path.append(nbp[path[-1]])
    path.reverse()
    return path


# -- BIO tagger -------------------------------------------------------------------


@dataclass(frozen=True)
class TaggerModel:
    labels: tuple[str, ...]                       # "O" first
    emission: dict[str, dict[str, float]]         # feature -> label -> weight
    transition: dict[str, dict[str, float]]       # prev label (or <s>) -> label
    seed: int

    @cached_property
    def _ids(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    @cached_property
    def _emit_rows(self) -> dict[str, dict[int, float]]:
        ids = self._ids
        return {feat: {ids[lab]: w for lab, w in row.items()}
                for feat, row in self.emission.items()}

    @cached_property
    def _trans(self) -> list[list[float]]:
        n = len(self.labels)
        ids = self._ids
        rows = {(n if prev == START else ids[prev]):
                {ids[cur]: w for cur, w in row.items()}
                for prev, row in self.transition.items()}
        return _trans_matrix(rows, n)


def tag(model: TaggerModel, tokens: Sequence[str]) -> list[str]:
    """Viterbi-optimal BIO sequence; always well-formed; an untrained model
    tags everything O (ties prefer the earliest label, which is O)."""
    if not tokens:
        return []
    feats = [token_features(tokens, i) for i in range(len(tokens))]
    n = len(model.labels)
    emits = _emission_scores(model._emit_rows, feats, n)
    path = _viterbi(emits, model._trans, _allowed_prev(model.labels))
    return [model.labels[j] for j in path]


TaggedSentence = tuple[Sequence[str], Sequence[str]]


def _token_f1(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> float:
    tp = fp = fn = 0
    for gold, pred in pairs:
        for g, p in zip(gold, pred):
            if g == p:
                if g != "O":
                    tp += 1
            else:
                if p != "O":
                    fp += 1
                if g != "O":
                    fn += 1
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


class _Averaged:
    """Sparse weights with the lazy averaging trick: an update applied while
    the example counter reads c also accumulates c * delta, so the average
    over all example steps falls out as w - u/c_final without storing
    per-step snapshots. Exact zeros are dropped from the averaged dump."""

    def __init__(self) -> None:
        self.w: dict = {}
        self.u: dict = {}
        self.c = 0

    def update(self, key, lab, delta: float) -> None:
        row = self.w.setdefault(key, {})
        row[lab] = row.get(lab, 0.0) + delta
        urow = self.u.setdefault(key, {})
        urow[lab] = urow.get(lab, 0.0) + self.c * delta

    def averaged(self) -> dict:
        if self.c == 0:
            return {k: dict(row) for k, row in self.w.items()}
        out: dict = {}
        for key, row in self.w.items():
            urow = self.u.get(key, {})
            new = {lab: w - urow.get(lab, 0.0) / self.c
                   for lab, w in row.items()}
            new = {lab: w for lab, w in new.items() if w != 0.0}
            if new:
                out[key] = new
        return out


def _finalize_tagger(labels: tuple[str, ...], emit: _Averaged,
                     trans: _Averaged, seed: int) -> TaggerModel:
    n = len(labels)
    emission = {f: {labels[j]: w for j, w in sorted(row.items())}
                for f, row in sorted(emit.averaged().items())}
    transition = {(START if p == n else labels[p]):
                  {labels[j]: w for j, w in sorted(row.items())}
                  for p, row in sorted(trans.averaged().items())}
    return TaggerModel(labels, emission, transition, seed)


def train_tagger(corpus: Sequence[TaggedSentence], schema: EventSchema,
                 epochs: int = 5, seed: int = 0,
                 val: Sequence[TaggedSentence] = (),
                 patience: int = 3) -> TaggerModel:
    """Structured averaged perceptron against Viterbi predictions.

    With a validation set, stops once its token F1 has not improved for
    `patience` consecutive epochs and returns the best epoch's model;
    otherwise runs all epochs.
    """
    if not corpus:
        raise BaselineError("empty training corpus")
    if epochs < 1:
        raise BaselineError(f"epochs must be >= 1, got {epochs}")
    labels = schema.bio_labels()
    label_ids = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    for tokens, golds in corpus:
        if len(tokens) != len(golds):
            raise BaselineError("token/label length mismatch in training data")
        for g in golds:
            if g not in label_ids:
                raise BaselineError(f"label {g!r} not in the schema label set")

    featured = [([token_features(t, i) for i in range(len(t))],
                 [label_ids[g] for g in golds])
                for t, golds in corpus]
    allowed = _allowed_prev(labels)
    emit, trans = _Averaged(), _Averaged()
    rng = random.Random(seed)
    order = list(range(len(featured)))

    best_score, best_model, since_best = -1.0, None, 0
    for _epoch in range(epochs):
        rng.shuffle(order)
        for si in order:
            feats, golds = featured[si]
            if feats:
                emits = _emission_scores(emit.w, feats, n)
                pred = _viterbi(emits, _trans_matrix(trans.w, n), allowed)
                if pred != golds:
                    prev_g = prev_p = n
                    for i, (gi, pi) in enumerate(zip(golds, pred)):
                        if gi != pi:
                            for f in feats[i]:
                                emit.update(f, gi, 1.0)
                                emit.update(f, pi, -1.0)
                        if (prev_g, gi) != (prev_p, pi):
                            trans.update(prev_g, gi, 1.0)
                            trans.update(prev_p, pi, -1.0)
                        prev_g, prev_p = gi, pi
            emit.c += 1
            trans.c = emit.c
        if val:
            candidate = _finalize_tagger(labels, emit, trans, seed)
            score = _token_f1((g, tag(candidate, t)) for t, g in val)
            if score > best_score:
                best_score, best_model, since_best = score, candidate, 0
            else:
                since_best += 1
                if since_best >= patience:
                    break
    if val and best_model is not None:
        return best_model
    return _finalize_tagger(labels, emit, trans, seed)


# -- relation classifier ---------------------------------------------------------


@dataclass(frozen=True)
class RelModel:
    roles: tuple[str, ...]                   # schema roles + No_relation
    weights: dict[str, dict[str, float]]     # feature -> role -> weight
    markers: tuple[str, str, str, str]
    seed: int


def _score_roles(weights: dict[str, dict[str, float]], feats: Sequence[str],
                 roles: Sequence[str]) -> dict[str, float]:
    scores = {r: 0.0 for r in roles}
    for f in feats:
        row = weights.get(f)
        if row:
            for r, w in row.items():
                if r in scores:
                    scores[r] += w
    return scores


def _pick_role(scores: dict[str, float], allowed: Sequence[str]) -> str:
    """Argmax restricted to allowed; ties prefer No_relation, then the order
    in which the candidate lists its roles (schema order)."""
    ordering = ([NO_RELATION] if NO_RELATION in scores else []) + \
        [r for r in allowed if r != NO_RELATION]
    best_role, best = ordering[0], float("-inf")
    for r in ordering:
        if scores[r] > best:
            best_role, best = r, scores[r]
    return best_role


def classify(model: RelModel, cand: RelationCandidate) -> str:
    markers = MarkerConfig(*model.markers)
    feats = rel_features(cand, markers)
    scores = _score_roles(model.weights, feats, cand.allowed_roles)
    return _pick_role(scores, cand.allowed_roles)


def train_rel(candidates: Sequence[RelationCandidate], schema: EventSchema,
              epochs: int = 5, seed: int = 0,
              val: Sequence[RelationCandidate] = (), patience: int = 3,
              markers: MarkerConfig = DEFAULT_MARKERS) -> RelModel:
    """Multiclass averaged perceptron over each candidate's allowed roles."""
    if not candidates:
        raise BaselineError("empty relation training set")
    if epochs < 1:
        raise BaselineError(f"epochs must be >= 1, got {epochs}")
    roles = tuple(schema.roles()) + (NO_RELATION,)
    role_set = set(roles)
    for cand in candidates:
        if cand.gold_role not in role_set:
            raise BaselineError(f"gold role {cand.gold_role!r} is not in the "
                                f"schema role set")

    featured = [(rel_features(c, markers), c.gold_role, c.allowed_roles)
                for c in candidates]
    acc = _Averaged()
    rng = random.Random(seed)
    order = list(range(len(featured)))

    def finalize() -> RelModel:
        weights = {f: dict(sorted(row.items()))
                   for f, row in sorted(acc.averaged().items())}
        return RelModel(roles, weights, markers.as_tuple(), seed)

    def accuracy(model: RelModel, cands: Sequence[RelationCandidate]) -> float:
        hits = sum(1 for c in cands if classify(model, c) == c.gold_role)
        return hits / len(cands)

    best_score, best_model, since_best = -1.0, None, 0
    for _epoch in range(epochs):
        rng.shuffle(order)
        for ci in order:
            feats, gold, allowed = featured[ci]
            scores = _score_roles(acc.w, feats, allowed)
            pred = _pick_role(scores, allowed)
            if pred != gold:
                for f in feats:
                    acc.update(f, gold, 1.0)
                    acc.update(f, pred, -1.0)
            acc.c += 1
        if val:
            candidate_model = finalize()
            score = accuracy(candidate_model, val)
            if score > best_score:
                best_score, best_model, since_best = score, candidate_model, 0
            else:
                since_best += 1
                if since_best >= patience:
                    break
    if val and best_model is not None:
        return best_model
    return finalize()


# -- persistence --------------------------------------------------------------------

_TAGGER_FORMAT = "radevents-tagger"
_REL_FORMAT = "radevents-rel"
_VERSION = 1


def model_blob(model: TaggerModel | RelModel) -> dict:
    if isinstance(model, TaggerModel):
        return {"format": _TAGGER_FORMAT, "version": _VERSION,
                "seed": model.seed, "labels": list(model.labels),
                "emission": model.emission, "transition": model.transition}
    if isinstance(model, RelModel):
        return {"format": _REL_FORMAT, "version": _VERSION,
                "seed": model.seed, "roles": list(model.roles),
                "markers": list(model.markers), "weights": model.weights}
    raise BaselineError(f"cannot save object of type {type(model).__name__}")


def model_from_blob(blob: dict, where: str = "model") -> TaggerModel | RelModel:
    fmt, version = blob.get("format"), blob.get("version")
    if version != _VERSION:
        raise BaselineError(f"{where}: unsupported model version {version!r}")
    try:
        if fmt == _TAGGER_FORMAT:
            return TaggerModel(tuple(blob["labels"]), blob["emission"],
                               blob["transition"], blob["seed"])
        if fmt == _REL_FORMAT:
            return RelModel(tuple(blob["roles"]), blob["weights"],
                            tuple(blob["markers"]), blob["seed"])
    except KeyError as e:
        raise BaselineError(f"{where}: missing field {e}") from None
    raise BaselineError(f"{where}: unknown model format {fmt!r}")


def save_model(model: TaggerModel | RelModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_blob(model), sort_keys=True,
                                     indent=0), encoding="utf-8")


def load_model(path: str | Path) -> TaggerModel | RelModel:
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise BaselineError(f"{path}: not a model file ({e})") from None
    return model_from_blob(blob, where=str(path))
