"""Protocol server backed by a saved adapter directory.

Serves inference only: the hello advertises training=false because this
package trains offline from task dumps (fine-tune subcommand), not over
the wire. Batching is internal — each tag/rel request is answered
individually, as the protocol requires."""

from __future__ import annotations

from .model import Adapter
from .wire import PROTOCOL_VERSION, CANDIDATE_FIELDS, ProtocolServer


class AdapterServer(ProtocolServer):
    def __init__(self, adapter: Adapter) -> None:
        self.adapter = adapter

    def _on_hello(self, record: dict) -> dict:
        return {"kind": "hello", "id": record["id"],
                "version": PROTOCOL_VERSION,
                "tasks": ["ner", "re"],
                "ner_labels": list(self.adapter.ner_labels),
                "re_roles": list(self.adapter.re_roles),
                "training": False}

    def _on_tag_request(self, record: dict) -> dict:
        tokens = record["tokens"]
        if not isinstance(tokens, list):
            raise ValueError(
                f"tokens must be a list, got {type(tokens).__name__}")
        labels = self.adapter.tag_batch([[str(t) for t in tokens]])[0]
        return {"kind": "tag_response", "id": record["id"], "labels": labels}

    def _on_rel_request(self, record: dict) -> dict:
        missing = [f for f in CANDIDATE_FIELDS if f not in record]
        if missing:
            raise ValueError(f"rel_request missing fields {missing}")
        role = self.adapter.classify_batch([record])[0]
        return {"kind": "rel_response", "id": record["id"], "role": role}
