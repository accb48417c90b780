"""Run configuration: every knob of the pipeline, echoed into output files so
any result can be reproduced from its own header."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .keypoints import TrimConfig
from .linguistic import CandidateConfig
from .objective import ObjectiveConfig
from .solver import SolveOptions


@dataclass(frozen=True)
class RunConfig:
    skeleton_path: Optional[str] = None  # None -> shipped default skeleton
    hand_basis_path: Optional[str] = None  # None -> identity basis
    focal: float = 5000.0  # used by camera initialization
    camera_override: Optional[tuple] = None  # (focal, cx, cy, root_depth)
    dominant_hand: str = "right"
    assume_trimmed: bool = False
    seed: int = 0
    weights: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    trim: TrimConfig = field(default_factory=TrimConfig)
    candidates: CandidateConfig = field(default_factory=CandidateConfig)
    solver: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        if self.dominant_hand not in ("left", "right"):
            raise ValueError("dominant_hand must be 'left' or 'right'")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        raw = dict(raw)
        for key, cls in (
            ("weights", ObjectiveConfig),
            ("trim", TrimConfig),
            ("candidates", CandidateConfig),
            ("solver", SolveOptions),
        ):
            if key in raw and isinstance(raw[key], dict):
                raw[key] = cls(**raw[key])
        if raw.get("camera_override") is not None:
            raw["camera_override"] = tuple(raw["camera_override"])
        return RunConfig(**raw)

    @staticmethod
    def load(path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return RunConfig.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
