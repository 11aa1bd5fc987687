"""Wire protocol for serving the NER and RE model slots from another
process (or machine), so neural models in any language can plug into the
pipeline.

Transport is UTF-8 JSON Lines: each record is one JSON object on one line.
A session speaks over a child process's stdin/stdout (default) or a TCP
socket. Every request carries a monotonically increasing integer ``id``;
the server answers each request with exactly one response echoing that id,
in order. Record kinds:

  hello          request {kind, id, version} ->
                 response {kind, id, version, tasks, ner_labels, re_roles,
                 training}
  tag_request    {kind, id, tokens} -> tag_response {kind, id, labels},
                 one label per word token: any sub-tokenization (and its
                 continuation-label bookkeeping) stays server-side
  rel_request    {kind, id, ...candidate fields...} -> rel_response
                 {kind, id, role} with role in the candidate's allowed_roles
  train_begin    {kind, id, hyperparams, schedule_seed, epochs, n_ner, n_re}
                 -> {kind, id}
  train_example  {kind, id, task: ner|re|eval, epoch, examples|score} ->
                 {kind, id, stop?, metrics?}
  train_end      {kind, id, reason} -> {kind, id, report}
  error          {kind, id|null, message} in place of any response

The exact field schemas are documented in PROTOCOL.md; tests treat that
document as normative.
"""

from __future__ import annotations

import json
import queue
import random
import socket
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .encoding import DEFAULT_MARKERS, MarkerConfig, RelationCandidate

PROTOCOL_VERSION = 1

RECORD_KINDS = frozenset({
    "hello", "tag_request", "tag_response", "rel_request", "rel_response",
    "train_begin", "train_example", "train_end", "error"})


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    """How to reach a model server. Exactly one of `command` (argv of a
    child process speaking the protocol on its stdio) or `address`
    ((host, port) of a listening server) must be set."""

    command: tuple[str, ...] | None = None
    address: tuple[str, int] | None = None
    markers: MarkerConfig = DEFAULT_MARKERS
    timeout: float = 30.0
    batch_size: int = 32
    hyperparams: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if (self.command is None) == (self.address is None):
            raise ProtocolError("exactly one of command/address must be set")
        if not self.timeout > 0:
            raise ProtocolError(f"timeout must be positive, got {self.timeout}")
        if self.batch_size < 1:
            raise ProtocolError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ServerCapabilities:
    version: int
    tasks: frozenset[str]
    ner_labels: tuple[str, ...]
    re_roles: tuple[str, ...]
    training: bool


def encode_record(record: Mapping) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


def decode_record(line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"undecodable record: {e}") from None
    if not isinstance(record, dict) or "kind" not in record:
        raise ProtocolError(f"record is not an object with a kind: {line!r}")
    return record


def candidate_payload(cand: RelationCandidate,
                      with_gold: bool = False) -> dict:
    payload = {
        "sentence_index": cand.sentence_index,
        "event_type": cand.event_type,
        "trigger_index": cand.trigger_index,
        "arg_index": cand.arg_index,
        "trigger_tokens": list(cand.trigger_tokens),
        "arg_tokens": list(cand.arg_tokens),
        "arg_label": cand.arg_label,
        "arg_value": cand.arg_value,
        "marked_tokens": list(cand.marked_tokens),
        "allowed_roles": list(cand.allowed_roles),
    }
    if with_gold:
        payload["gold_role"] = cand.gold_role
    return payload


def candidate_from_payload(payload: Mapping) -> RelationCandidate:
    try:
        return RelationCandidate(
            sentence_index=payload["sentence_index"],
            event_type=payload["event_type"],
            trigger_index=payload["trigger_index"],
            arg_index=payload["arg_index"],
            trigger_tokens=tuple(payload["trigger_tokens"]),
            arg_tokens=tuple(payload["arg_tokens"]),
            arg_label=payload["arg_label"],
            arg_value=payload["arg_value"],
            marked_tokens=tuple(payload["marked_tokens"]),
            gold_role=payload.get("gold_role", "No_relation"),
            allowed_roles=tuple(payload["allowed_roles"]))
    except KeyError as e:
        raise ProtocolError(f"candidate payload missing field {e}") from None


def interleave_schedule(n_ner: int, n_re: int, seed: int,
                        epochs: int = 1) -> list[list[str]]:
    """Per-epoch task order: the multiset of pending batches shuffled with a
    seeded RNG, so NER and RE alternate randomly but proportionally to their
    batch counts, and identically for identical seeds."""
    rng = random.Random(seed)
    out = []
    for _ in range(epochs):
        tasks = ["ner"] * n_ner + ["re"] * n_re
        rng.shuffle(tasks)
        out.append(tasks)
    return out


class _LineReader:
    """Background thread draining a text stream into a queue so reads can
    time out without platform-specific pipe tricks."""

    _EOF = object()

    def __init__(self, stream) -> None:
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,),
                                        daemon=True)
        self._thread.start()

    def _pump(self, stream) -> None:
        try:
            for line in stream:
                self._queue.put(line)
        except (OSError, ValueError):
            pass
        self._queue.put(self._EOF)

    def readline(self, timeout: float) -> str:
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError(f"no response within {timeout} s") from None
        if item is self._EOF:
            raise ProtocolError("server closed the connection")
        return item


class ModelSession:
    """One serialized request stream against one server process/socket."""

    def __init__(self, config: ProtocolConfig) -> None:
        self.config = config
        self.violations = 0
        self._next_id = 1
        self._proc = None
        self._sock = None
        if config.command is not None:
            self._proc = subprocess.Popen(
                list(config.command), stdin=subprocess.PIPE,
                stdout=subprocess.PIPE, text=True, encoding="utf-8")
            self._writer = self._proc.stdin
            self._reader = _LineReader(self._proc.stdout)
        else:
            try:
                self._sock = socket.create_connection(config.address,
                                                      timeout=config.timeout)
            except OSError as e:
                raise ProtocolError(
                    f"cannot reach {config.address}: {e}") from None
            self._writer = self._sock.makefile("w", encoding="utf-8")
            self._reader = _LineReader(self._sock.makefile("r",
                                                           encoding="utf-8"))

    # -- plumbing ---------------------------------------------------------------

    def _send(self, record: Mapping) -> None:
        try:
            self._writer.write(encode_record(record))
            self._writer.flush()
        except (OSError, BrokenPipeError, ValueError) as e:
            raise ProtocolError(f"cannot write to server: {e}") from None

    def _request(self, kind: str, **payload) -> int:
        rid = self._next_id
        self._next_id += 1
        self._send({"kind": kind, "id": rid, **payload})
        return rid

    def _recv(self) -> dict:
        line = self._reader.readline(self.config.timeout)
        record = decode_record(line)
        if record["kind"] not in RECORD_KINDS:
            self.close()
            raise ProtocolError(f"unknown record kind {record['kind']!r}; "
                                f"connection closed")
        return record

    def _expect(self, rid: int, kind: str) -> dict:
        record = self._recv()
        if record["kind"] == "error":
            raise ProtocolError(
                f"server error for id {record.get('id')}: "
                f"{record.get('message', '(no message)')}")
        if record.get("id") != rid:
            self.close()
            raise ProtocolError(f"response id {record.get('id')!r} does not "
                                f"match request id {rid}")
        if record["kind"] != kind:
            self.close()
            raise ProtocolError(f"expected {kind}, got {record['kind']!r}")
        return record

    def close(self) -> None:
        if self._proc is not None:
            for stream in (self._proc.stdin, self._proc.stdout):
                try:
                    stream.close()
                except OSError:
                    pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            self._proc = None
        if self._sock is not None:
            # the makefile wrappers hold io refs, so sock.close() alone
            # would not send FIN; shutdown makes the server see EOF now
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            for stream in (self._writer, self._sock):
                try:
                    stream.close()
                except OSError:
                    pass
            self._sock = None

    def __enter__(self) -> "ModelSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- operations --------------------------------------------------------------

    def handshake(self) -> ServerCapabilities:
        rid = self._request("hello", version=PROTOCOL_VERSION)
        record = self._expect(rid, "hello")
        version = record.get("version")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"server speaks protocol version {version!r}, "
                                f"client speaks {PROTOCOL_VERSION}")
        tasks = record.get("tasks")
        if (not isinstance(tasks, list) or not tasks
                or not set(tasks) <= {"ner", "re"}):
            raise ProtocolError(f"malformed hello: tasks={tasks!r}")
        return ServerCapabilities(
            version=version,
            tasks=frozenset(tasks),
            ner_labels=tuple(record.get("ner_labels", ())),
            re_roles=tuple(record.get("re_roles", ())),
            training=bool(record.get("training", False)))

    def tag_batch(self, sentences: Sequence[Sequence[str]]) -> list[list[str]]:
        """One BIO label per word token for each sentence. An empty batch
        costs no round-trip."""
        out: list[list[str]] = []
        for start in range(0, len(sentences), self.config.batch_size):
            chunk = sentences[start:start + self.config.batch_size]
            rids = [self._request("tag_request", tokens=list(s))
                    for s in chunk]
            for rid, tokens in zip(rids, chunk):
                record = self._expect(rid, "tag_response")
                labels = record.get("labels")
                if not isinstance(labels, list) or len(labels) != len(tokens):
                    self.violations += 1
                    raise ProtocolError(
                        f"tag_response {rid}: {0 if labels is None else len(labels)} "
                        f"labels for {len(tokens)} tokens")
                out.append([str(lab) for lab in labels])
        return out

    def rel_batch(self, candidates: Sequence[RelationCandidate]) -> list[str]:
        """One role per candidate, each restricted to that candidate's
        allowed_roles; anything else is a protocol violation."""
        out: list[str] = []
        for start in range(0, len(candidates), self.config.batch_size):
            chunk = candidates[start:start + self.config.batch_size]
            rids = [self._request("rel_request", **candidate_payload(c))
                    for c in chunk]
            for rid, cand in zip(rids, chunk):
                record = self._expect(rid, "rel_response")
                role = record.get("role")
                if role not in cand.allowed_roles:
                    self.violations += 1
                    raise ProtocolError(
                        f"rel_response {rid}: role {role!r} outside "
                        f"allowed_roles {cand.allowed_roles}")
                out.append(role)
        return out

    def train_session(self, ner_batches: Sequence, re_batches: Sequence,
                      schedule_seed: int, epochs: int = 1,
                      eval_fn: Callable[[int], float] | None = None) -> dict:
        """Drive a training run: per epoch, send NER/RE batches in a seeded
        random interleaving, then forward the validation score (if an eval_fn
        is given) and honor a server stop request. Returns the completion
        report from train_end."""
        rid = self._request(
            "train_begin",
            hyperparams=dict(self.config.hyperparams),
            schedule_seed=schedule_seed, epochs=epochs,
            n_ner=len(ner_batches), n_re=len(re_batches))
        self._expect(rid, "train_begin")

        schedule = interleave_schedule(len(ner_batches), len(re_batches),
                                       schedule_seed, epochs)
        stop_reason = "completed"
        epochs_run = 0
        for epoch, tasks in enumerate(schedule):
            ner_iter, re_iter = iter(ner_batches), iter(re_batches)
            for task in tasks:
                if task == "ner":
                    examples = [{"tokens": list(t), "labels": list(l)}
                                for t, l in next(ner_iter)]
                else:
                    examples = [candidate_payload(c, with_gold=True)
                                for c in next(re_iter)]
                rid = self._request("train_example", task=task, epoch=epoch,
                                    examples=examples)
                self._expect(rid, "train_example")
            epochs_run = epoch + 1
            if eval_fn is not None:
                rid = self._request("train_example", task="eval", epoch=epoch,
                                    score=float(eval_fn(epoch)))
                ack = self._expect(rid, "train_example")
                if ack.get("stop"):
                    stop_reason = "early_stop"
                    break

        rid = self._request("train_end", reason=stop_reason)
        record = self._expect(rid, "train_end")
        report = dict(record.get("report") or {})
        report.setdefault("epochs", epochs_run)
        report.setdefault("stop_reason", stop_reason)
        return report


def open_session(config: ProtocolConfig) -> ModelSession:
    return ModelSession(config)


# -- conformance ---------------------------------------------------------------------


def conformance_failures(config: ProtocolConfig) -> list[str]:
    """Exercise a server against the protocol contract and list every
    failure (empty list = conformant). Covers the handshake, the tag length
    contract, the rel allowed_roles contract, empty batches, error
    responses for garbage requests, and session survival after an error."""
    failures: list[str] = []

    def check(name: str, fn) -> object:
        try:
            return fn()
        except ProtocolError as e:
            failures.append(f"{name}: {e}")
            return None

    with open_session(config) as session:
        caps = check("handshake", session.handshake)
        if caps is None:
            return failures
        if caps.version != PROTOCOL_VERSION:
            failures.append(f"handshake: bad version {caps.version}")
        if not caps.tasks:
            failures.append("handshake: no tasks")

        if "ner" in caps.tasks:
            sentences = [["No", "pneumothorax", "."],
                         ["Stable", "appearance", "of", "the", "chest", "."]]
            labels = check("tag_batch", lambda: session.tag_batch(sentences))
            if labels is not None:
                if [len(l) for l in labels] != [len(s) for s in sentences]:
                    failures.append("tag_batch: length contract broken")
                if caps.ner_labels:
                    stray = {l for seq in labels for l in seq} \
                        - set(caps.ner_labels)
                    if stray:
                        failures.append(f"tag_batch: labels outside the "
                                        f"advertised set: {sorted(stray)}")
            if session.tag_batch([]) != []:
                failures.append("tag_batch: empty batch must yield []")

        if "re" in caps.tasks:
            cand = RelationCandidate(
                sentence_index=0, event_type="Lesion", trigger_index=0,
                arg_index=1, trigger_tokens=(0, 1), arg_tokens=(3, 4),
                arg_label="Lesion-Anatomy", arg_value=None,
                marked_tokens=("[unused0]", "mass", "[unused1]", "in", "the",
                               "[unused2]", "liver", "[unused3]"),
                allowed_roles=("Lesion-Anatomy", "No_relation"))
            roles = check("rel_batch", lambda: session.rel_batch([cand]))
            if roles is not None and roles[0] not in cand.allowed_roles:
                failures.append(f"rel_batch: role {roles[0]!r} not allowed")
            if session.rel_batch([]) != []:
                failures.append("rel_batch: empty batch must yield []")

        # a garbage request must produce an error record, not silence or exit
        rid = session._request("frobnicate")
        try:
            record = session._recv()
        except ProtocolError as e:
            failures.append(f"error handling: no reply to unknown kind ({e})")
        else:
            if record.get("kind") != "error":
                failures.append(f"error handling: expected an error record, "
                                f"got {record.get('kind')!r}")
            elif record.get("id") != rid:
                failures.append("error handling: error record must echo the "
                                "request id")

        # ... and the session must still be usable afterwards
        if "ner" in caps.tasks:
            check("post-error tag_batch",
                  lambda: session.tag_batch([["still", "alive"]]))
    return failures
