"""Sequence packing and token-budget dynamic batching for tile sequences."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus

DESK_BUDGET = 4096          # paper-scale runs use 800k embeddings per worker


@dataclass
class PackSkeleton:
    member_ids: list[str]
    lengths: list[int]

    @property
    def total(self) -> int:
        return sum(self.lengths)


@dataclass
class PackedBatch:
    data: np.ndarray           # (T, d) member sequences concatenated
    offsets: np.ndarray        # int64 (M+1,) strictly increasing, [0, ..., T]
    member_ids: list[str]

    def validate(self, budget: int | None = None) -> None:
        if self.offsets[0] != 0 or self.offsets[-1] != self.data.shape[0]:
            raise ValueError("offsets must start at 0 and end at the row count")
        if not np.all(np.diff(self.offsets) > 0):
            raise ValueError("offsets must be strictly increasing")
        if len(self.member_ids) != len(self.offsets) - 1:
            raise ValueError("member count must match offsets")
        if budget is not None and self.data.shape[0] > budget:
            raise ValueError("pack exceeds the token budget")

    def member(self, i: int) -> np.ndarray:
        return self.data[self.offsets[i]:self.offsets[i + 1]]


@dataclass
class BalanceStats:
    per_worker_tokens: list[int]
    max_tokens: int
    min_tokens: int
    mean_tokens: float
    idle_fraction: float
    assignments: list[tuple[int, int, int]]  # (worker, step, tokens)


def pack(sequences: list[tuple[str, int]], budget: int = DESK_BUDGET) -> list[PackSkeleton]:
    """Greedy first-fit in queue order: a sequence joins the open pack iff
    it fits, otherwise the pack is sealed and a new one opened."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    packs: list[PackSkeleton] = []
    current = PackSkeleton(member_ids=[], lengths=[])
    for seq_id, length in sequences:
        if length < 1:
            raise ValueError(f"sequence {seq_id!r} has non-positive length {length}")
        if length > budget:
            raise ValueError(
                f"sequence {seq_id!r} of length {length} exceeds budget {budget}; "
                "specimens are never split")
        if current.total + length > budget:
            packs.append(current)
            current = PackSkeleton(member_ids=[], lengths=[])
        current.member_ids.append(seq_id)
        current.lengths.append(length)
    if current.member_ids:
        packs.append(current)
    return packs


def concat(skeleton: PackSkeleton, corpus: Corpus) -> PackedBatch:
    """Materialize a skeleton by stacking each member's tiles in order."""
    rows = []
    offsets = [0]
    for seq_id, length in zip(skeleton.member_ids, skeleton.lengths):
        record = corpus.by_id(seq_id)
        tiles = record.tiles.stacked()
        if tiles.shape[0] != length:
            raise ValueError(
                f"{seq_id}: skeleton length {length} != corpus tiles {tiles.shape[0]}")
        rows.append(tiles)
        offsets.append(offsets[-1] + length)
    data = np.concatenate(rows, axis=0) if rows else np.zeros((0, corpus.spec.d), np.float32)
    batch = PackedBatch(data=data, offsets=np.asarray(offsets, dtype=np.int64),
                        member_ids=list(skeleton.member_ids))
    batch.validate()
    return batch


def single(record_tiles: np.ndarray, specimen_id: str = "") -> PackedBatch:
    """A one-member pack, the unpacked encoding path."""
    n = record_tiles.shape[0]
    return PackedBatch(data=record_tiles, offsets=np.asarray([0, n], dtype=np.int64),
                       member_ids=[specimen_id])


def balance_report(packs: list[PackSkeleton], n_workers: int) -> BalanceStats:
    """Deal packs round-robin to workers and report per-worker token totals."""
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    totals = [0] * n_workers
    assignments = []
    for i, p in enumerate(packs):
        worker, step = i % n_workers, i // n_workers
        totals[worker] += p.total
        assignments.append((worker, step, p.total))
    mx = max(totals) if totals else 0
    mn = min(totals) if totals else 0
    mean = float(np.mean(totals)) if totals else 0.0
    idle = 0.0 if mx == 0 else 1.0 - mean / mx
    return BalanceStats(per_worker_tokens=totals, max_tokens=mx, min_tokens=mn,
                        mean_tokens=mean, idle_fraction=idle, assignments=assignments)


def write_balance_csv(stats: BalanceStats, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["worker", "step", "tokens"])
        for worker, step, tokens in stats.assignments:
            writer.writerow([worker, step, tokens])
