"""Serve the built-in baseline models over the wire protocol.

    python3 -m radevents.baseline_server --model pipeline.json
    python3 -m radevents.baseline_server              # untrained models
    python3 -m radevents.baseline_server --tcp 0      # socket transport

Speaks JSON Lines on stdin/stdout by default; with --tcp it prints
"LISTENING <port>" and serves one connection. Without --model it serves
zero-weight models for the default schema (every tag O, every role
No_relation), which is enough to satisfy the protocol contract. Training
records update an online averaged perceptron, so a session can build a
model from scratch; --out persists it at train_end.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path
from typing import Mapping

from .baseline import (RelModel, TaggerModel, _Averaged, _allowed_prev,
                       _emission_scores, _finalize_tagger, _pick_role,
                       _score_roles, _trans_matrix, _viterbi, classify,
                       rel_features, tag, token_features)
from .encoding import DEFAULT_MARKERS, NO_RELATION, MarkerConfig
from .pipeline import Pipeline, load_pipeline, save_pipeline
from .protocol import (PROTOCOL_VERSION, ProtocolError, candidate_from_payload,
                       decode_record, encode_record)
from .schema import default_schema, load_schema


class _TrainState:
    """Online structured-perceptron state fed by train_example records."""

    def __init__(self, pipe: Pipeline, hyperparams: Mapping) -> None:
        self.labels = pipe.tagger.labels
        self.label_ids = {lab: i for i, lab in enumerate(self.labels)}
        self.allowed = _allowed_prev(self.labels)
        self.roles = pipe.rel.roles
        self.markers = MarkerConfig(*pipe.rel.markers)
        self.emit, self.trans = _Averaged(), _Averaged()
        self.rel = _Averaged()
        self.rel_count = 0
        self.patience = int(hyperparams.get("patience", 3))
        self.best_score = -1.0
        self.since_best = 0
        self.epochs = 0
        self.ner_examples = 0
        self.re_examples = 0

    def ner_batch(self, examples) -> None:
        n = len(self.labels)
        for ex in examples:
            tokens, labels = ex["tokens"], ex["labels"]
            if len(tokens) != len(labels):
                raise ProtocolError("ner example: token/label length mismatch")
            try:
                golds = [self.label_ids[lab] for lab in labels]
            except KeyError as e:
                raise ProtocolError(f"ner example: unknown label {e}") from None
            if tokens:
                feats = [token_features(tokens, i) for i in range(len(tokens))]
                emits = _emission_scores(self.emit.w, feats, n)
                pred = _viterbi(emits, _trans_matrix(self.trans.w, n),
                                self.allowed)
                if pred != golds:
                    prev_g = prev_p = n
                    for i, (gi, pi) in enumerate(zip(golds, pred)):
                        if gi != pi:
                            for f in feats[i]:
                                self.emit.update(f, gi, 1.0)
                                self.emit.update(f, pi, -1.0)
                        if (prev_g, gi) != (prev_p, pi):
                            self.trans.update(prev_g, gi, 1.0)
                            self.trans.update(prev_p, pi, -1.0)
                        prev_g, prev_p = gi, pi
            self.emit.c += 1
            self.trans.c = self.emit.c
            self.ner_examples += 1

    def re_batch(self, examples) -> None:
        for payload in examples:
            cand = candidate_from_payload(payload)
            if cand.gold_role not in self.roles:
                raise ProtocolError(f"re example: unknown gold role "
                                    f"{cand.gold_role!r}")
            feats = rel_features(cand, self.markers)
            scores = _score_roles(self.rel.w, feats, cand.allowed_roles)
            pred = _pick_role(scores, cand.allowed_roles)
            if pred != cand.gold_role:
                for f in feats:
                    self.rel.update(f, cand.gold_role, 1.0)
                    self.rel.update(f, pred, -1.0)
            self.rel.c += 1
            self.re_examples += 1

    def eval_score(self, score: float) -> bool:
        """Track forwarded validation scores; True = request early stop."""
        if score > self.best_score:
            self.best_score, self.since_best = score, 0
            return False
        self.since_best += 1
        return self.since_best >= self.patience

    def finalize(self, seed: int = 0) -> Pipeline:
        tagger = _finalize_tagger(self.labels, self.emit, self.trans, seed)
        weights = {f: dict(sorted(row.items()))
                   for f, row in sorted(self.rel.averaged().items())}
        rel = RelModel(self.roles, weights, self.markers.as_tuple(), seed)
        return Pipeline(tagger, rel)


class BaselineServer:
    def __init__(self, pipe: Pipeline, out_path: str | None = None) -> None:
        self.pipe = pipe
        self.out_path = out_path
        self.state: _TrainState | None = None

    def handle(self, record: dict) -> dict:
        kind = record.get("kind")
        rid = record.get("id")
        handler = getattr(self, f"_on_{kind}", None) if kind else None
        if handler is None:
            return {"kind": "error", "id": rid,
                    "message": f"unsupported record kind {kind!r}"}
        try:
            return {"id": rid, **handler(record)}
        except (ProtocolError, KeyError, TypeError, ValueError) as e:
            return {"kind": "error", "id": rid, "message": str(e)}

    def _on_hello(self, record: dict) -> dict:
        return {"kind": "hello", "version": PROTOCOL_VERSION,
                "tasks": ["ner", "re"],
                "ner_labels": list(self.pipe.tagger.labels),
                "re_roles": list(self.pipe.rel.roles),
                "training": True}

    def _on_tag_request(self, record: dict) -> dict:
        tokens = record["tokens"]
        if not isinstance(tokens, list):
            raise ProtocolError("tag_request: tokens must be a list")
        return {"kind": "tag_response",
                "labels": tag(self.pipe.tagger, tokens)}

    def _on_rel_request(self, record: dict) -> dict:
        cand = candidate_from_payload(record)
        return {"kind": "rel_response",
                "role": classify(self.pipe.rel, cand)}

    def _on_train_begin(self, record: dict) -> dict:
        self.state = _TrainState(self.pipe, record.get("hyperparams") or {})
        return {"kind": "train_begin"}

    def _on_train_example(self, record: dict) -> dict:
        if self.state is None:
            raise ProtocolError("train_example before train_begin")
        task = record.get("task")
        self.state.epochs = max(self.state.epochs,
                                int(record.get("epoch", 0)) + 1)
        if task == "ner":
            self.state.ner_batch(record["examples"])
            return {"kind": "train_example"}
        if task == "re":
            self.state.re_batch(record["examples"])
            return {"kind": "train_example"}
        if task == "eval":
            stop = self.state.eval_score(float(record["score"]))
            return {"kind": "train_example", "stop": stop}
        raise ProtocolError(f"train_example: unknown task {task!r}")

    def _on_train_end(self, record: dict) -> dict:
        if self.state is None:
            raise ProtocolError("train_end before train_begin")
        state = self.state
        self.state = None
        self.pipe = state.finalize()
        if self.out_path:
            save_pipeline(self.pipe, self.out_path)
        return {"kind": "train_end",
                "report": {"epochs": state.epochs,
                           "stop_reason": record.get("reason", "completed"),
                           "ner_examples": state.ner_examples,
                           "re_examples": state.re_examples}}

    def serve(self, reader, writer) -> None:
        while True:
            line = reader.readline()
            if not line:
                break
            if not line.strip():
                continue
            try:
                record = decode_record(line)
            except ProtocolError as e:
                response = {"kind": "error", "id": None, "message": str(e)}
            else:
                response = self.handle(record)
            writer.write(encode_record(response))
            writer.flush()


def untrained_pipeline(schema) -> Pipeline:
    tagger = TaggerModel(schema.bio_labels(), {}, {}, 0)
    rel = RelModel(tuple(schema.roles()) + (NO_RELATION,), {},
                   DEFAULT_MARKERS.as_tuple(), 0)
    return Pipeline(tagger, rel)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="radevents-baseline-server", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--model", help="trained pipeline JSON to serve")
    parser.add_argument("--schema", help="schema config for untrained mode")
    parser.add_argument("--out", help="where train_end saves the new model")
    parser.add_argument("--tcp", type=int, default=None, metavar="PORT",
                        help="listen on a TCP port (0 = ephemeral) instead "
                             "of stdio")
    args = parser.parse_args(argv)

    if args.model:
        pipe = load_pipeline(args.model)
    else:
        schema = (load_schema(Path(args.schema).read_text(encoding="utf-8"))
                  if args.schema else default_schema())
        pipe = untrained_pipeline(schema)
    server = BaselineServer(pipe, out_path=args.out)

    if args.tcp is None:
        server.serve(sys.stdin, sys.stdout)
        return 0

    import socket
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(("127.0.0.1", args.tcp))
        sock.listen(1)
        print(f"LISTENING {sock.getsockname()[1]}", flush=True)
        conn, _ = sock.accept()
        with conn:
            reader = conn.makefile("r", encoding="utf-8")
            writer = conn.makefile("w", encoding="utf-8")
            server.serve(reader, writer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
