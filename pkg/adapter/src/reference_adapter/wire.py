"""Server-side plumbing for the JSON Lines model protocol.

The record schemas are fixed by the radevents repository's PROTOCOL.md;
that document (not the radevents source) is the contract this package
implements, so the few constants here are deliberately restated rather
than imported.
"""

from __future__ import annotations

import json
import socket
from typing import IO, Callable, Mapping

PROTOCOL_VERSION = 1

NO_RELATION = "No_relation"

# fields every rel_request must carry (gold_role is added in training dumps)
CANDIDATE_FIELDS = (
    "sentence_index", "event_type", "trigger_index", "arg_index",
    "trigger_tokens", "arg_tokens", "arg_label", "arg_value",
    "marked_tokens", "allowed_roles")


def encode_record(record: Mapping) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


def decode_record(line: str) -> dict:
    record = json.loads(line)
    if not isinstance(record, dict) or "kind" not in record:
        raise ValueError(f"record is not an object with a kind: {line!r}")
    return record


class ProtocolServer:
    """Line loop shared by the echo and model servers. Subclasses provide
    `_on_<kind>` handlers returning the response record; anything they
    raise becomes an error record that keeps the session alive."""

    def handle(self, record: dict) -> dict:
        handler: Callable[[dict], dict] | None = getattr(
            self, f"_on_{record['kind']}", None)
        if handler is None:
            return {"kind": "error", "id": record.get("id"),
                    "message": f"unsupported record kind {record['kind']!r}"}
        try:
            return handler(record)
        except (KeyError, TypeError, ValueError) as e:
            return {"kind": "error", "id": record.get("id"),
                    "message": str(e)}

    def serve(self, reader: IO[str], writer: IO[str]) -> None:
        for line in reader:
            if not line.strip():
                continue
            try:
                record = decode_record(line)
            except ValueError as e:
                writer.write(encode_record(
                    {"kind": "error", "id": None, "message": str(e)}))
                writer.flush()
                continue
            writer.write(encode_record(self.handle(record)))
            writer.flush()

    def serve_tcp(self, port: int) -> None:
        """Listen on 127.0.0.1, announce the bound port on stdout, serve
        exactly one connection, exit."""
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            sock.bind(("127.0.0.1", port))
            sock.listen(1)
            print(f"LISTENING {sock.getsockname()[1]}", flush=True)
            conn, _ = sock.accept()
            with conn, conn.makefile("r", encoding="utf-8") as r, \
                    conn.makefile("w", encoding="utf-8") as w:
                self.serve(r, w)


class EchoServer(ProtocolServer):
    """Model-free protocol stub: every token is O, every candidate is
    No_relation. Lets protocol clients run their conformance checks
    without loading any weights."""

    def _on_hello(self, record: dict) -> dict:
        return {"kind": "hello", "id": record["id"],
                "version": PROTOCOL_VERSION, "tasks": ["ner", "re"],
                "ner_labels": ["O"], "re_roles": [NO_RELATION],
                "training": False}

    def _on_tag_request(self, record: dict) -> dict:
        tokens = record["tokens"]
        if not isinstance(tokens, list):
            raise ValueError(f"tokens must be a list, got {type(tokens).__name__}")
        return {"kind": "tag_response", "id": record["id"],
                "labels": ["O"] * len(tokens)}

    def _on_rel_request(self, record: dict) -> dict:
        for field in CANDIDATE_FIELDS:
            if field not in record:
                raise ValueError(f"rel_request missing field {field!r}")
        return {"kind": "rel_response", "id": record["id"],
                "role": NO_RELATION}
