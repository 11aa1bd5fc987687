"""Multi-task fine-tuning from task dump files.

Reads the ner.jsonl / re.jsonl dumps, builds the label spaces from the
training data, and trains the shared encoder with both heads under
cross-entropy, alternating NER and RE batches in a seeded random order
proportional to their batch counts. After each epoch a validation score
(mean word-level tag accuracy and relation accuracy over whichever
validation sets were given) feeds an early stopper: training ends when the
score has not strictly improved for `patience` consecutive epochs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import torch
from torch import nn

from .config import AdapterConfig, AdapterDataError
from .model import Adapter, IGNORE
from .wire import CANDIDATE_FIELDS

NerExample = tuple[list[str], list[str]]


def load_ner_dump(path: str | Path) -> list[NerExample]:
    out: list[NerExample] = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(),
                                  start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise AdapterDataError(f"{where}: {e}") from None
        if record.get("kind") != "ner":
            raise AdapterDataError(
                f"{where}: expected kind 'ner', got {record.get('kind')!r}")
        tokens, labels = record.get("tokens"), record.get("labels")
        if not isinstance(tokens, list) or not isinstance(labels, list):
            raise AdapterDataError(f"{where}: tokens and labels must be lists")
        if len(tokens) != len(labels):
            raise AdapterDataError(
                f"{where}: {len(labels)} labels for {len(tokens)} tokens")
        out.append(([str(t) for t in tokens], [str(l) for l in labels]))
    return out


def load_re_dump(path: str | Path) -> list[dict]:
    out: list[dict] = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(),
                                  start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise AdapterDataError(f"{where}: {e}") from None
        if record.get("kind") != "re":
            raise AdapterDataError(
                f"{where}: expected kind 're', got {record.get('kind')!r}")
        missing = [f for f in (*CANDIDATE_FIELDS, "gold_role")
                   if f not in record]
        if missing:
            raise AdapterDataError(f"{where}: missing fields {missing}")
        if record["gold_role"] not in record["allowed_roles"]:
            raise AdapterDataError(
                f"{where}: gold_role {record['gold_role']!r} not in "
                f"allowed_roles")
        out.append(record)
    return out


class EarlyStopper:
    """Stop after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience: int) -> None:
        self.patience = patience
        self.best = float("-inf")
        self.since_best = 0

    def update(self, score: float) -> bool:
        if score > self.best:
            self.best, self.since_best = score, 0
        else:
            self.since_best += 1
        return self.since_best >= self.patience


@dataclass
class FineTuneReport:
    epochs_run: int = 0
    steps: int = 0
    stop_reason: str = "completed"
    # one entry per completed epoch: epoch, train_loss, val_score
    history: list[dict] = field(default_factory=list)
    # training loss per optimizer step, in step order
    step_losses: list[float] = field(default_factory=list)


def _batches(n: int, batch_size: int) -> list[range]:
    return [range(i, min(i + batch_size, n))
            for i in range(0, n, batch_size)]


def fine_tune(config: AdapterConfig,
              train_ner: Sequence[NerExample],
              train_re: Sequence[Mapping],
              val_ner: Sequence[NerExample] = (),
              val_re: Sequence[Mapping] = (),
              *,
              epochs: int = 5,
              batch_size: int = 8,
              seed: int = 7,
              max_steps: int | None = None,
              out_dir: str | Path | None = None,
              ) -> tuple[Adapter, FineTuneReport]:
    """Train both heads from raw task examples and return the adapter plus
    a per-epoch report. With out_dir set, the trained state is saved there
    in the directory format Adapter.load expects."""
    if not train_ner and not train_re:
        raise AdapterDataError("no training examples")
    for tokens, labels in train_ner:
        if len(tokens) != len(labels):
            raise AdapterDataError(
                f"{len(labels)} labels for {len(tokens)} tokens")

    ner_labels = {lab for _, labels in train_ner for lab in labels}
    re_roles = {r for c in train_re
                for r in (*c["allowed_roles"], c["gold_role"])}
    torch.manual_seed(seed)
    adapter = Adapter.build(config, sorted(ner_labels), sorted(re_roles))

    rng = random.Random(seed)
    optimizer = torch.optim.AdamW(adapter.model.parameters(),
                                  lr=config.learning_rate)
    xent = nn.CrossEntropyLoss(ignore_index=IGNORE)
    stopper = EarlyStopper(config.patience)
    report = FineTuneReport()
    ner = list(train_ner)
    re_data = list(train_re)

    def out_of_budget() -> bool:
        return max_steps is not None and report.steps >= max_steps

    for epoch in range(epochs):
        rng.shuffle(ner)
        rng.shuffle(re_data)
        plan = (["ner"] * len(_batches(len(ner), batch_size))
                + ["re"] * len(_batches(len(re_data), batch_size)))
        rng.shuffle(plan)
        ner_iter = iter(_batches(len(ner), batch_size))
        re_iter = iter(_batches(len(re_data), batch_size))

        adapter.model.train()
        losses = []
        for task in plan:
            if out_of_budget():
                break
            if task == "ner":
                rows = [ner[i] for i in next(ner_iter)]
                enc = adapter.encode_words([t for t, _ in rows])
                targets = adapter.ner_targets(enc, [l for _, l in rows])
                logits = adapter.model.tag_logits(enc)
                loss = xent(logits.flatten(0, 1), targets.flatten())
            else:
                rows = [re_data[i] for i in next(re_iter)]
                enc = adapter.encode_words([c["marked_tokens"] for c in rows])
                logits = adapter.model.rel_logits(enc)
                targets = torch.tensor(
                    [adapter._role_ids[c["gold_role"]] for c in rows])
                loss = xent(logits, targets)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            report.steps += 1
            losses.append(float(loss.item()))
        report.step_losses.extend(losses)
        report.epochs_run = epoch + 1

        val_score = None
        if val_ner or val_re:
            parts = []
            if val_ner:
                parts.append(adapter.tag_accuracy(val_ner))
            if val_re:
                parts.append(adapter.rel_accuracy(val_re))
            val_score = sum(parts) / len(parts)
        report.history.append({
            "epoch": epoch,
            "train_loss": sum(losses) / len(losses) if losses else None,
            "val_score": val_score})

        if out_of_budget():
            report.stop_reason = "max_steps"
            break
        if val_score is not None and stopper.update(val_score):
            report.stop_reason = "early_stop"
            break

    adapter.model.eval()
    if out_dir is not None:
        adapter.save(out_dir, extras={
            "steps": report.steps,
            "stop_reason": report.stop_reason,
            "history": report.history})
    return adapter, report
