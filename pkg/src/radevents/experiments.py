"""Deterministic experiment harness: 80/10/10 splits, repeated
cross-validation, and the result/manifest file formats.

Fold geometry: a seeded shuffle partitions the documents into 10 near-equal
blocks; fold k (k = 0..4) takes block 2k as test, block 2k+1 as validation,
and everything else as training. This honors the 80/10/10 ratios with
pairwise-disjoint test sets; coverage of the remaining blocks comes from
repeating the whole procedure under different seeds (repeat r uses
base_seed + r).

Every task carries its own derived seed, so results are identical no matter
how many workers execute them.
"""

from __future__ import annotations

import csv
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .stats import corrected_t, mean_ci


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    # five folds of (train ids, val ids, test ids)
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]], ...]


def make_splits(doc_ids: Iterable[str], seed: int) -> SplitPlan:
    ids = sorted(doc_ids)
    if len(set(ids)) != len(ids):
        raise ExperimentError("duplicate document ids")
    if len(ids) < 10:
        raise ExperimentError(f"need at least 10 documents to split, got {len(ids)}")
    rng = random.Random(seed)
    rng.shuffle(ids)
    n, n_blocks = len(ids), 10
    base, extra = divmod(n, n_blocks)
    sizes = [base] * n_blocks
    # spread the remainder over even (test) blocks first, then odd (val)
    # blocks, so no fold's test+val pair absorbs two extra documents and
    # every fold stays within one document of the 80/10/10 ideal
    for j, b in enumerate((0, 2, 4, 6, 8, 1, 3, 5, 7, 9)):
        if j < extra:
            sizes[b] += 1
    blocks = []
    at = 0
    for size in sizes:
        blocks.append(tuple(ids[at:at + size]))
        at += size
    folds = []
    for k in range(5):
        test, val = blocks[2 * k], blocks[2 * k + 1]
        train = tuple(doc for b, block in enumerate(blocks)
                      if b not in (2 * k, 2 * k + 1) for doc in block)
        folds.append((train, val, test))
    return SplitPlan(seed, tuple(folds))


@dataclass(frozen=True)
class CVTask:
    repeat: int
    fold: int
    seed: int                      # derived per (repeat, fold)
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]


@dataclass(frozen=True)
class RunResult:
    repeat: int
    fold: int
    scores: tuple[tuple[str, float], ...]

    def score(self, metric: str) -> float:
        for name, value in self.scores:
            if name == metric:
                return value
        raise ExperimentError(f"run ({self.repeat},{self.fold}) has no "
                              f"metric {metric!r}")


# trains on (task.train, task.val), returns metric -> score on task.test
Trainer = Callable[[CVTask], Mapping[str, float]]


def cv_tasks(doc_ids: Iterable[str], n_repeats: int = 10,
             base_seed: int = 0) -> list[CVTask]:
    ids = tuple(sorted(doc_ids))
    tasks = []
    for r in range(n_repeats):
        plan = make_splits(ids, base_seed + r)
        for f, (train, val, test) in enumerate(plan.folds):
            tasks.append(CVTask(r, f, (base_seed + r) * 5 + f, train, val, test))
    return tasks


def repeat_cv(doc_ids: Iterable[str], trainer: Trainer, n_repeats: int = 10,
              base_seed: int = 0, jobs: int = 1) -> list[RunResult]:
    """Run trainer over every (repeat, fold) task; n_repeats=10 yields 50
    results. Output order is (repeat, fold) regardless of jobs."""
    if n_repeats < 1:
        raise ExperimentError(f"n_repeats must be >= 1, got {n_repeats}")
    tasks = cv_tasks(doc_ids, n_repeats, base_seed)

    def run(task: CVTask) -> RunResult:
        try:
            scores = trainer(task)
        except Exception as exc:
            raise ExperimentError(f"trainer failed at repeat {task.repeat} "
                                  f"fold {task.fold}: {exc}") from exc
        return RunResult(task.repeat, task.fold,
                         tuple(sorted((str(k), float(v)) for k, v in scores.items())))

    if jobs <= 1:
        results = [run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    return sorted(results, key=lambda r: (r.repeat, r.fold))


def summarize(results: Sequence[RunResult],
              confidence: float = 0.95) -> dict[str, dict[str, float]]:
    """Per-metric mean and CI half-width over all runs."""
    metrics = sorted({name for r in results for name, _ in r.scores})
    out = {}
    for metric in metrics:
        values = [r.score(metric) for r in results]
        mean, half = mean_ci(values, confidence)
        out[metric] = {"n": len(values), "mean": mean, "ci95_half": half}
    return out


def compare_results(a: Sequence[RunResult], b: Sequence[RunResult],
                    metric: str, rho: float = 0.125):
    """Corrected resampled t-test between two result sets paired by
    (repeat, fold)."""
    keys_a = [(r.repeat, r.fold) for r in a]
    keys_b = [(r.repeat, r.fold) for r in b]
    if keys_a != keys_b:
        raise ExperimentError("result sets are not paired: (repeat, fold) "
                              "coordinates differ")
    return corrected_t([r.score(metric) for r in a],
                       [r.score(metric) for r in b], rho=rho)


# -- results CSV -------------------------------------------------------------------


def write_results_csv(results: Sequence[RunResult], path: str | Path) -> None:
    metrics = sorted({name for r in results for name, _ in r.scores})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["repeat", "fold", *metrics])
        for r in results:
            scores = dict(r.scores)
            w.writerow([r.repeat, r.fold,
                        *(repr(scores[m]) for m in metrics)])


def read_results_csv(path: str | Path) -> list[RunResult]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ExperimentError(f"{path}: empty results file") from None
        if header[:2] != ["repeat", "fold"]:
            raise ExperimentError(f"{path}: expected 'repeat,fold,...' header, "
                                  f"got {header[:2]}")
        metrics = header[2:]
        results = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ExperimentError(f"{path}:{lineno}: expected "
                                      f"{len(header)} columns, got {len(row)}")
            try:
                results.append(RunResult(
                    int(row[0]), int(row[1]),
                    tuple((m, float(v)) for m, v in zip(metrics, row[2:]))))
            except ValueError as exc:
                raise ExperimentError(f"{path}:{lineno}: {exc}") from None
    return results


# -- experiment manifest ---------------------------------------------------------


MANIFEST_KEYS = ("corpus", "schema", "model", "seed", "repeats", "rho",
                 "epochs", "jobs")
_MANIFEST_DEFAULTS = {"schema": "default", "model": "baseline", "seed": "7",
                      "repeats": "10", "rho": "0.125", "epochs": "5",
                      "jobs": "1"}


def parse_manifest(text: str, source: str = "<manifest>") -> dict[str, str]:
    """key = value lines; '#' comments; unknown keys are errors so typos
    don't silently fall back to defaults."""
    out = dict(_MANIFEST_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ExperimentError(f"{source}:{lineno}: expected 'key = value', "
                                  f"got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in MANIFEST_KEYS:
            raise ExperimentError(f"{source}:{lineno}: unknown key {key!r} "
                                  f"(known: {', '.join(MANIFEST_KEYS)})")
        if not value:
            raise ExperimentError(f"{source}:{lineno}: empty value for {key!r}")
        out[key] = value
    if "corpus" not in out:
        raise ExperimentError(f"{source}: manifest must set 'corpus'")
    return out


def read_manifest(path: str | Path) -> dict[str, str]:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), source=str(path))
