from __future__ import annotations

from dataclasses import dataclass


class AdapterConfigError(ValueError):
    """Bad adapter configuration (unknown base model, markers outside the
    vocabulary, nonsensical hyperparameters)."""


class AdapterDataError(ValueError):
    """Malformed task dump: wrong kind, missing fields, or a label list
    that does not line up with its tokens."""


DEFAULT_MARKERS = ("[unused0]", "[unused1]", "[unused2]", "[unused3]")


@dataclass(frozen=True)
class AdapterConfig:
    """Fine-tuning and serving knobs.

    The defaults are the standard fine-tuning settings for a pretrained
    encoder: learning rate 3e-5, dropout 0.1. markers are the four entity
    marker strings (trigger open/close, argument open/close) and each must
    map to a reserved entry already present in the tokenizer vocabulary —
    the encoder's embedding table is never resized.
    """

    base_model: str
    learning_rate: float = 3e-5
    dropout: float = 0.1
    max_length: int = 128
    patience: int = 3
    markers: tuple[str, str, str, str] = DEFAULT_MARKERS

    def __post_init__(self) -> None:
        if not self.base_model:
            raise AdapterConfigError("base_model must be set")
        if not self.learning_rate > 0:
            raise AdapterConfigError(
                f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.dropout < 1:
            raise AdapterConfigError(
                f"dropout must be in [0, 1), got {self.dropout}")
        if self.max_length < 8:
            raise AdapterConfigError(
                f"max_length must be >= 8, got {self.max_length}")
        if self.patience < 1:
            raise AdapterConfigError(
                f"patience must be >= 1, got {self.patience}")
        if len(self.markers) != 4 or len(set(self.markers)) != 4:
            raise AdapterConfigError(
                f"markers must be 4 distinct strings, got {self.markers!r}")
