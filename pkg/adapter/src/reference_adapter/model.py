"""Shared-encoder multi-task model and its on-disk bundle format.

One transformer encoder feeds two linear heads: a token-classification
head over the BIO label set plus one internal continuation class "#" that
non-initial word pieces are trained to predict, and a sequence-
classification head over relation roles applied to the [CLS] state of a
marker-bracketed candidate sentence. The wire contract is word-level, so
"#" never leaves this module: predictions are read off the first word
piece of each word and words that tokenize to nothing (or fall past
max_length) report "O".
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import torch
from tokenizers import AddedToken
from torch import nn
from transformers import AutoConfig, AutoModel, AutoTokenizer

from .config import AdapterConfig, AdapterConfigError
from .wire import NO_RELATION

CONT_LABEL = "#"
OUTSIDE = "O"
IGNORE = -100


def _check_markers(tokenizer, markers: Sequence[str]) -> None:
    """Each marker must map to an entry already in the vocabulary (the
    reserved [unusedN] slots of a standard encoder vocab); the embedding
    table is never resized."""
    unk = tokenizer.unk_token_id
    for m in markers:
        ident = tokenizer.convert_tokens_to_ids(m)
        if ident is None or ident == unk:
            raise AdapterConfigError(
                f"marker {m!r} is not in the tokenizer vocabulary; markers "
                f"must map to reserved vocabulary entries")
    # make the markers atomic under pre-tokenization (brackets would
    # otherwise be split off); these strings are in-vocab so this adds
    # no new embeddings
    tokenizer.add_tokens([AddedToken(m, single_word=True) for m in markers],
                         special_tokens=True)


class MultiTaskModel(nn.Module):
    def __init__(self, encoder, n_tags: int, n_roles: int,
                 dropout: float) -> None:
        super().__init__()
        self.encoder = encoder
        hidden = encoder.config.hidden_size
        self.dropout = nn.Dropout(dropout)
        # +1: the trailing class is the sub-token continuation label "#"
        self.tag_head = nn.Linear(hidden, n_tags + 1)
        self.rel_head = nn.Linear(hidden, n_roles)

    def tag_logits(self, enc) -> torch.Tensor:
        hidden = self.encoder(**enc).last_hidden_state
        return self.tag_head(self.dropout(hidden))

    def rel_logits(self, enc) -> torch.Tensor:
        hidden = self.encoder(**enc).last_hidden_state
        return self.rel_head(self.dropout(hidden[:, 0]))


class Adapter:
    """A tokenizer, a MultiTaskModel, and the label spaces, with word-level
    encode/decode on top. Built fresh for fine-tuning or loaded from a
    saved directory for serving."""

    def __init__(self, tokenizer, model: MultiTaskModel,
                 ner_labels: Sequence[str], re_roles: Sequence[str],
                 markers: Sequence[str], max_length: int) -> None:
        self.tokenizer = tokenizer
        self.model = model
        self.ner_labels = list(ner_labels)
        self.re_roles = list(re_roles)
        self.markers = tuple(markers)
        self.max_length = max_length
        self.cont_id = len(self.ner_labels)
        self._tag_ids = {lab: i for i, lab in enumerate(self.ner_labels)}
        self._role_ids = {r: i for i, r in enumerate(self.re_roles)}

    # -- construction -----------------------------------------------------------

    @classmethod
    def build(cls, config: AdapterConfig, ner_labels: Sequence[str],
              re_roles: Sequence[str]) -> "Adapter":
        ner_labels = sorted(set(ner_labels) | {OUTSIDE})
        re_roles = sorted(set(re_roles) | {NO_RELATION})
        try:
            tokenizer = AutoTokenizer.from_pretrained(config.base_model)
            encoder = AutoModel.from_pretrained(config.base_model)
        except (OSError, ValueError, EnvironmentError) as e:
            raise AdapterConfigError(
                f"cannot load base model {config.base_model!r}: {e}") from None
        _check_markers(tokenizer, config.markers)
        # the dropout knob governs the whole model, not just the heads:
        # pretrained configs carry their own rates, so override in place
        for module in encoder.modules():
            if isinstance(module, nn.Dropout):
                module.p = config.dropout
        model = MultiTaskModel(encoder, len(ner_labels), len(re_roles),
                               config.dropout)
        return cls(tokenizer, model, ner_labels, re_roles, config.markers,
                   config.max_length)

    def save(self, path: str | Path, extras: Mapping | None = None) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        self.tokenizer.save_pretrained(path / "tokenizer")
        self.model.encoder.config.save_pretrained(path / "encoder")
        torch.save(self.model.state_dict(), path / "weights.pt")
        meta = {"format": 1,
                "ner_labels": self.ner_labels,
                "re_roles": self.re_roles,
                "markers": list(self.markers),
                "max_length": self.max_length,
                **dict(extras or {})}
        (path / "adapter.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Adapter":
        path = Path(path)
        try:
            meta = json.loads((path / "adapter.json").read_text("utf-8"))
            tokenizer = AutoTokenizer.from_pretrained(path / "tokenizer")
            encoder = AutoModel.from_config(
                AutoConfig.from_pretrained(path / "encoder"))
            model = MultiTaskModel(encoder, len(meta["ner_labels"]),
                                   len(meta["re_roles"]), dropout=0.0)
            state = torch.load(path / "weights.pt", map_location="cpu",
                               weights_only=True)
            model.load_state_dict(state)
        except (OSError, ValueError, KeyError, RuntimeError,
                json.JSONDecodeError) as e:
            raise AdapterConfigError(
                f"cannot load adapter from {path}: {e}") from None
        _check_markers(tokenizer, meta["markers"])
        model.eval()
        return cls(tokenizer, model, meta["ner_labels"], meta["re_roles"],
                   meta["markers"], meta["max_length"])

    # -- encoding ----------------------------------------------------------------

    def encode_words(self, batch: Sequence[Sequence[str]]):
        return self.tokenizer(
            [list(words) for words in batch], is_split_into_words=True,
            truncation=True, max_length=self.max_length, padding=True,
            return_tensors="pt")

    def ner_targets(self, enc, label_seqs: Sequence[Sequence[str]]
                    ) -> torch.Tensor:
        """Word-piece target matrix: first piece of word w carries the id
        of its word label, continuation pieces carry the "#" class, and
        special/padding positions are ignored."""
        targets = torch.full(enc["input_ids"].shape, IGNORE, dtype=torch.long)
        for row, labels in enumerate(label_seqs):
            prev = None
            for pos, word in enumerate(enc.word_ids(row)):
                if word is None:
                    prev = None
                    continue
                if word != prev:
                    targets[row, pos] = self._tag_ids[labels[word]]
                else:
                    targets[row, pos] = self.cont_id
                prev = word
        return targets

    # -- inference ---------------------------------------------------------------

    @torch.no_grad()
    def tag_batch(self, batch: Sequence[Sequence[str]]) -> list[list[str]]:
        """One label per word token per sentence, always, regardless of
        sub-tokenization or truncation."""
        if not batch:
            return []
        self.model.eval()
        enc = self.encode_words(batch)
        # argmax over the real label rows only: "#" is internal
        pred = self.model.tag_logits(enc)[:, :, :len(self.ner_labels)] \
            .argmax(dim=-1)
        out = []
        for row, words in enumerate(batch):
            labels = [OUTSIDE] * len(words)
            prev = None
            for pos, word in enumerate(enc.word_ids(row)):
                if word is not None and word != prev:
                    labels[word] = self.ner_labels[pred[row, pos].item()]
                prev = word
            out.append(labels)
        return out

    @torch.no_grad()
    def classify_batch(self, candidates: Sequence[Mapping]) -> list[str]:
        """One role per candidate payload, restricted to its allowed_roles."""
        if not candidates:
            return []
        self.model.eval()
        enc = self.encode_words([c["marked_tokens"] for c in candidates])
        logits = self.model.rel_logits(enc)
        out = []
        for row, cand in enumerate(candidates):
            known = [self._role_ids[r] for r in cand["allowed_roles"]
                     if r in self._role_ids]
            if not known:
                raise ValueError(
                    f"none of allowed_roles {list(cand['allowed_roles'])!r} "
                    f"are known to this model")
            scores = logits[row, known]
            out.append(self.re_roles[known[int(scores.argmax().item())]])
        return out

    # -- evaluation --------------------------------------------------------------

    @torch.no_grad()
    def tag_accuracy(self, pairs: Sequence[tuple[Sequence[str],
                                                 Sequence[str]]]) -> float:
        """Word-level accuracy of tag_batch against gold label sequences."""
        if not pairs:
            return 0.0
        predicted = self.tag_batch([tokens for tokens, _ in pairs])
        correct = total = 0
        for (_, gold), pred in zip(pairs, predicted):
            total += len(gold)
            correct += sum(g == p for g, p in zip(gold, pred))
        return correct / total if total else 0.0

    @torch.no_grad()
    def rel_accuracy(self, candidates: Sequence[Mapping]) -> float:
        if not candidates:
            return 0.0
        predicted = self.classify_batch(candidates)
        return sum(p == c["gold_role"]
                   for p, c in zip(predicted, candidates)) / len(candidates)
