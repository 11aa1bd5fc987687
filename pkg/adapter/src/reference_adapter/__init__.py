"""Transformer-backed server for the radevents model wire protocol.

One shared encoder, two heads: token classification for BIO tagging and
sequence classification over marker-bracketed candidates for relation
roles. Speaks the JSON Lines protocol documented in the radevents repo's
PROTOCOL.md; trains from the ner.jsonl / re.jsonl task dumps. The two
packages share no code — the wire format and the dump files are the whole
interface.
"""

from .config import AdapterConfig, AdapterConfigError, AdapterDataError
from .finetune import FineTuneReport, fine_tune
from .model import Adapter
from .wire import PROTOCOL_VERSION

__all__ = [
    "Adapter",
    "AdapterConfig",
    "AdapterConfigError",
    "AdapterDataError",
    "FineTuneReport",
    "PROTOCOL_VERSION",
    "fine_tune",
]
