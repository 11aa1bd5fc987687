"""The model-free echo mode must be a fully conformant protocol server.
Conformance is checked with the pipeline package's own client-side suite,
talking to this package purely over the wire."""

import json
import subprocess
import sys

from radevents.protocol import (ProtocolConfig, conformance_failures,
                                open_session)

ECHO = (sys.executable, "-m", "reference_adapter", "--echo")


def raw_session(lines):
    proc = subprocess.run(ECHO, input="".join(l + "\n" for l in lines),
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0, proc.stderr
    return [json.loads(l) for l in proc.stdout.splitlines() if l.strip()]


class TestConformance:
    def test_echo_passes_the_full_conformance_suite(self):
        assert conformance_failures(ProtocolConfig(command=ECHO)) == []

    def test_echo_over_tcp(self):
        server = subprocess.Popen(
            [*ECHO, "--tcp", "0"], stdout=subprocess.PIPE, text=True)
        try:
            banner = server.stdout.readline().split()
            assert banner[0] == "LISTENING"
            address = ("127.0.0.1", int(banner[1]))
            assert conformance_failures(
                ProtocolConfig(address=address)) == []
        finally:
            assert server.wait(timeout=10) == 0

    def test_predictions_are_all_negative(self):
        with open_session(ProtocolConfig(command=ECHO)) as session:
            caps = session.handshake()
            assert caps.tasks == {"ner", "re"}
            assert not caps.training
            assert session.tag_batch([["a", "b", "c"], ["d"]]) \
                == [["O", "O", "O"], ["O"]]


class TestRecordHandling:
    def test_malformed_line_gets_null_id_error_and_session_survives(self):
        records = raw_session(['this is not json',
                               '{"kind": "hello", "id": 1, "version": 1}'])
        assert records[0]["kind"] == "error"
        assert records[0]["id"] is None
        assert records[1]["kind"] == "hello"

    def test_unknown_kind_echoes_id(self):
        records = raw_session(['{"kind": "shenanigans", "id": 9}'])
        assert records == [{"kind": "error", "id": 9,
                            "message": "unsupported record kind "
                                       "'shenanigans'"}]

    def test_training_records_are_rejected_not_fatal(self):
        records = raw_session([
            '{"kind": "train_begin", "id": 1, "hyperparams": {}, '
            '"schedule_seed": 7, "epochs": 1, "n_ner": 0, "n_re": 0}',
            '{"kind": "tag_request", "id": 2, "tokens": ["x"]}'])
        assert records[0]["kind"] == "error"
        assert records[0]["id"] == 1
        assert records[1] == {"kind": "tag_response", "id": 2,
                              "labels": ["O"]}

    def test_missing_candidate_field_is_an_error(self):
        records = raw_session(['{"kind": "rel_request", "id": 3, '
                               '"marked_tokens": ["a"]}'])
        assert records[0]["kind"] == "error"
        assert "sentence_index" in records[0]["message"]
