"""Serving a saved adapter over the wire. Answers must match in-process
calls on the same model, and the offline dump files written by the
pipeline package must feed straight into fine-tuning."""

import json
import subprocess
import sys

from conftest import NER5, RE3
from radevents.cli import run as radevents_run
from radevents.encoding import RelationCandidate
from radevents.protocol import (ProtocolConfig, conformance_failures,
                                open_session)
from reference_adapter import Adapter


def serve_cmd(model_dir):
    return (sys.executable, "-m", "reference_adapter",
            "serve", "--model", str(model_dir))


def as_candidate(payload):
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
        allowed_roles=tuple(payload["allowed_roles"]))


class TestServing:
    def test_trained_server_is_conformant(self, trained_dir):
        assert conformance_failures(
            ProtocolConfig(command=serve_cmd(trained_dir))) == []

    def test_handshake_advertises_the_saved_label_spaces(self, trained_dir):
        adapter = Adapter.load(trained_dir)
        config = ProtocolConfig(command=serve_cmd(trained_dir))
        with open_session(config) as session:
            caps = session.handshake()
        assert caps.ner_labels == tuple(adapter.ner_labels)
        assert caps.re_roles == tuple(adapter.re_roles)
        assert not caps.training

    def test_wire_answers_match_in_process_answers(self, trained_dir):
        adapter = Adapter.load(trained_dir)
        sentences = [list(tokens) for tokens, _ in NER5]
        candidates = [as_candidate(c) for c in RE3]
        config = ProtocolConfig(command=serve_cmd(trained_dir))
        with open_session(config) as session:
            session.handshake()
            wire_tags = session.tag_batch(sentences)
            wire_roles = session.rel_batch(candidates)
        assert wire_tags == adapter.tag_batch(sentences)
        assert wire_roles == adapter.classify_batch(RE3)

    def test_tcp_serving(self, trained_dir):
        server = subprocess.Popen([*serve_cmd(trained_dir), "--tcp", "0"],
                                  stdout=subprocess.PIPE, text=True)
        try:
            banner = server.stdout.readline().split()
            assert banner[0] == "LISTENING"
            config = ProtocolConfig(address=("127.0.0.1", int(banner[1])))
            with open_session(config) as session:
                session.handshake()
                assert session.tag_batch([["the", "exam", "is", "normal"]]) \
                    == [["O", "O", "O", "O"]]
        finally:
            assert server.wait(timeout=30) == 0

    def test_missing_model_reports_on_the_wire_before_exiting(self, tmp_path):
        proc = subprocess.run(serve_cmd(tmp_path / "nope"),
                              input="", capture_output=True, text=True,
                              timeout=60)
        assert proc.returncode == 3
        record = json.loads(proc.stdout.splitlines()[0])
        assert record["kind"] == "error"
        assert record["id"] is None
        assert "model load failure" in record["message"]

    def test_training_requests_are_rejected_but_not_fatal(self, trained_dir):
        lines = ['{"kind": "hello", "id": 0, "version": 1}',
                 '{"kind": "train_begin", "id": 1, "hyperparams": {}, '
                 '"schedule_seed": 7, "epochs": 1, "n_ner": 0, "n_re": 0}',
                 '{"kind": "tag_request", "id": 2, "tokens": ["normal"]}']
        proc = subprocess.run(serve_cmd(trained_dir),
                              input="".join(l + "\n" for l in lines),
                              capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        records = [json.loads(l) for l in proc.stdout.splitlines()]
        assert [r["kind"] for r in records] == ["hello", "error",
                                                "tag_response"]
        assert records[1]["id"] == 1


class TestDumpInterop:
    def test_pipeline_dumps_feed_the_fine_tune_command(self, base_model,
                                                       tmp_path):
        corpus = tmp_path / "corpus"
        dumps = tmp_path / "dumps"
        assert radevents_run(["fixture", "--out", str(corpus),
                              "--n-docs", "2", "--seed", "7"]) == 0
        assert radevents_run(["encode", "--corpus", str(corpus),
                              "--out", str(dumps)]) == 0

        out = tmp_path / "adapter"
        proc = subprocess.run(
            [sys.executable, "-m", "reference_adapter", "fine-tune",
             "--base", base_model, "--ner", str(dumps / "ner.jsonl"),
             "--re", str(dumps / "re.jsonl"), "--out", str(out),
             "--epochs", "1", "--max-steps", "2", "--dropout", "0.0"],
            capture_output=True, text=True, timeout=300)
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert report["steps"] == 2
        assert report["stop_reason"] == "max_steps"

        adapter = Adapter.load(out)
        labels = adapter.tag_batch([["no", "change", "."]])
        assert len(labels[0]) == 3
