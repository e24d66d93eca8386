"""Domain types for the synthetic specimen corpus."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TASK_KINDS = ("report_generation", "yes_no", "open_ended", "multiple_choice", "matching")


@dataclass
class TileEmbeddingSet:
    """Per-specimen variable-length tile embedding matrices, one per slide."""

    specimen_id: str
    slides: list[tuple[str, np.ndarray]]
    d: int

    def validate(self) -> None:
        if not self.slides:
            raise ValueError(f"{self.specimen_id}: specimen has no slides")
        for slide_id, emb in self.slides:
            if emb.ndim != 2 or emb.shape[1] != self.d:
                raise ValueError(f"{slide_id}: embedding dim {emb.shape} != d={self.d}")
            if emb.shape[0] < 1:
                raise ValueError(f"{slide_id}: empty slide")
            if not np.isfinite(emb).all():
                raise ValueError(f"{slide_id}: non-finite embedding values")

    @property
    def total_tiles(self) -> int:
        return sum(e.shape[0] for _, e in self.slides)

    def stacked(self) -> np.ndarray:
        """All tiles of the specimen, slides concatenated in order."""
        return np.concatenate([e for _, e in self.slides], axis=0)


@dataclass
class Finding:
    concept: str
    present: bool
    attributes: dict[str, str] = field(default_factory=dict)

    @property
    def polarity(self) -> str:
        return "present" if self.present else "absent"


@dataclass
class SurvivalLabel:
    time_months: int
    event: bool

    def validate(self) -> None:
        if self.time_months < 0:
            raise ValueError("time_months must be >= 0")


@dataclass
class ChatExample:
    task_kind: str
    turns: list[tuple[str, str]]
    loss_region: tuple[int, ...] = ()

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.task_kind!r}")
        for i, (role, _) in enumerate(self.turns):
            want = "user" if i % 2 == 0 else "assistant"
            if role != want:
                raise ValueError("turns must strictly alternate starting with user")
        assistant_turns = tuple(i for i, (r, _) in enumerate(self.turns) if r == "assistant")
        if not self.loss_region:
            self.loss_region = assistant_turns
        elif self.loss_region != assistant_turns:
            raise ValueError("loss region must mark exactly the assistant turns")


@dataclass
class SpecimenRecord:
    specimen_id: str
    tiles: TileEmbeddingSet
    findings: list[Finding]
    report: str
    label: int
    paraphrases: list[str] = field(default_factory=list)
    history: Optional[str] = None
    specimen_desc: Optional[str] = None
    survival: Optional[SurvivalLabel] = None

    def finding(self, concept: str) -> Optional[Finding]:
        for f in self.findings:
            if f.concept == concept:
                return f
        return None
