"""2D keypoint sequences: loading, validation, normalization, and trimming.

Frame files follow the common detector export layout: one JSON object per
frame with a "people" list; person objects carry "pose_keypoints_2d"
(75 numbers, 25 body points x [x, y, conf]), "hand_left_keypoints_2d" and
"hand_right_keypoints_2d" (63 numbers each). Only person 0 is read. Files in
a sequence directory are ordered lexicographically.

A keypoint with confidence 0 is "undetected": its coordinates are ignored by
every consumer and never interpolated at ingestion time.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

BODY_POINTS = 25  # BODY-25 ordering
HAND_POINTS = 21

# BODY-25 indices used throughout the pipeline.
BODY_NOSE = 0
BODY_NECK = 1
BODY_RIGHT_WRIST = 4
BODY_LEFT_WRIST = 7
BODY_MID_HIP = 8
# Toe and heel points; "no feet detected" gates the standing prior.
FOOT_KEYPOINTS = (19, 20, 21, 22, 23, 24)

HAND_WRIST = 0


class KeypointError(ValueError):
    """Raised for malformed keypoint files or unusable sequences."""


@dataclass(frozen=True)
class Keypoint2D:
    """One detected point in image coordinates (y grows downward)."""

    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise KeypointError(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def detected(self) -> bool:
        return self.confidence > 0.0


def _validated_array(a, n: int, label: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.shape != (n, 3):
        raise KeypointError(f"{label} must have shape ({n}, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise KeypointError(f"{label} contains non-finite values")
    conf = arr[:, 2]
    if np.any(conf < 0.0) or np.any(conf > 1.0):
        raise KeypointError(f"{label} confidences must lie in [0, 1]")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class KeypointFrame:
    """Per-frame keypoints: body (25, 3), left/right hand (21, 3), columns x, y, conf."""

    body: np.ndarray
    left_hand: np.ndarray
    right_hand: np.ndarray
    timestamp_index: int

    def __post_init__(self):
        object.__setattr__(self, "body", _validated_array(self.body, BODY_POINTS, "body"))
        object.__setattr__(self, "left_hand", _validated_array(self.left_hand, HAND_POINTS, "left_hand"))
        object.__setattr__(self, "right_hand", _validated_array(self.right_hand, HAND_POINTS, "right_hand"))

    def array(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def point(self, array: str, index: int) -> Keypoint2D:
        row = self.array(array)[index]
        return Keypoint2D(float(row[0]), float(row[1]), float(row[2]))

    @staticmethod
    def empty(timestamp_index: int) -> "KeypointFrame":
        return KeypointFrame(
            np.zeros((BODY_POINTS, 3)),
            np.zeros((HAND_POINTS, 3)),
            np.zeros((HAND_POINTS, 3)),
            timestamp_index,
        )


@dataclass(frozen=True)
class KeypointSequence:
    """Ordered keypoint frames sharing one canvas size.

    ``y_up`` records whether coordinates have been flipped to up-positive
    heights (true only after :func:`normalize_sequence`).
    """

    frames: tuple
    fps: float
    image_size: tuple
    y_up: bool = False

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise KeypointError("sequence must contain at least one frame")
        ts = [f.timestamp_index for f in frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise KeypointError("timestamp_index must be strictly increasing")
        if not self.fps > 0:
            raise KeypointError("fps must be positive")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "image_size", (float(self.image_size[0]), float(self.image_size[1])))

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class CoreInterval:
    """The central portion of a trimmed sign, in fractional frame indices."""

    t_start: float
    t_end: float
    T: int

    def __post_init__(self):
        if not 0.0 <= self.t_start < self.t_end <= self.T:
            raise KeypointError(
                f"invalid core interval ({self.t_start}, {self.t_end}) for T={self.T}"
            )


@dataclass(frozen=True)
class TrimConfig:
    motion_threshold: float = 0.15  # fraction of torso length
    rest_frames: int = 5  # frames used for the per-wrist rest position
    hysteresis: int = 3  # consecutive moving frames required


def core_interval(T: int) -> CoreInterval:
    """Core-sign interval heuristic: (0.5*T/8, 7*T/8)."""
    if T < 8:
        raise KeypointError(f"sequence too short for interval heuristic (T={T} < 8)")
    return CoreInterval(0.5 * T / 8.0, 7.0 * T / 8.0, T)


# -- loading / saving -----------------------------------------------------------

def _frame_from_person(person: dict, path: str, timestamp_index: int) -> KeypointFrame:
    fields = (
        ("pose_keypoints_2d", BODY_POINTS),
        ("hand_left_keypoints_2d", HAND_POINTS),
        ("hand_right_keypoints_2d", HAND_POINTS),
    )
    arrays = []
    for key, n in fields:
        if key not in person:
            raise KeypointError(f"{path}: person 0 is missing field {key!r}")
        flat = person[key]
        if len(flat) != n * 3:
            raise KeypointError(
                f"{path}: field {key!r} has {len(flat)} values, expected {n * 3} "
                f"({n} keypoints x 3)"
            )
        try:
            arrays.append(np.asarray(flat, dtype=np.float64).reshape(n, 3))
        except (TypeError, ValueError) as exc:
            raise KeypointError(f"{path}: field {key!r} is not numeric: {exc}") from exc
    return KeypointFrame(arrays[0], arrays[1], arrays[2], timestamp_index)


def load_keypoint_sequence(
    path, fps: float, image_size: Optional[Sequence[float]] = None
) -> KeypointSequence:
    """Load a directory of per-frame keypoint files (lexicographic frame order).

    The canvas size comes from, in order of precedence: the ``image_size``
    argument, a ``meta.json`` sidecar with "width"/"height" fields, or the
    maximum observed coordinate rounded up.
    """
    if not os.path.isdir(path):
        raise KeypointError(f"keypoint directory not found: {path}")
    names = sorted(n for n in os.listdir(path) if n.endswith(".json") and n != "meta.json")
    if not names:
        raise KeypointError(f"no keypoint files in {path}")

    frames = []
    for t, name in enumerate(names):
        fpath = os.path.join(path, name)
        try:
            with open(fpath, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise KeypointError(f"{fpath}: invalid JSON: {exc}") from exc
        people = raw.get("people")
        if people is None:
            raise KeypointError(f"{fpath}: missing field 'people'")
        if not people:
            frames.append(KeypointFrame.empty(t))
        else:
            frames.append(_frame_from_person(people[0], fpath, t))

    if image_size is None:
        meta_path = os.path.join(path, "meta.json")
        if os.path.isfile(meta_path):
            with open(meta_path, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
            image_size = (meta["width"], meta["height"])
        else:
            image_size = _inferred_canvas(frames)
    return KeypointSequence(tuple(frames), fps=fps, image_size=tuple(image_size))


def _inferred_canvas(frames) -> tuple:
    w = h = 1.0
    for f in frames:
        for arr in (f.body, f.left_hand, f.right_hand):
            det = arr[arr[:, 2] > 0.0]
            if det.size:
                w = max(w, float(det[:, 0].max()))
                h = max(h, float(det[:, 1].max()))
    return (math.ceil(w), math.ceil(h))


def save_keypoint_sequence(seq: KeypointSequence, path) -> None:
    """Write the directory layout read by :func:`load_keypoint_sequence`."""
    os.makedirs(path, exist_ok=True)
    width = len(str(max(len(seq) - 1, 1)))
    for i, frame in enumerate(seq.frames):
        person = {
            "pose_keypoints_2d": [float(v) for v in frame.body.reshape(-1)],
            "hand_left_keypoints_2d": [float(v) for v in frame.left_hand.reshape(-1)],
            "hand_right_keypoints_2d": [float(v) for v in frame.right_hand.reshape(-1)],
        }
        with open(os.path.join(path, f"frame_{i:0{width}d}.json"), "w", encoding="utf-8") as fh:
            json.dump({"people": [person]}, fh)
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"width": seq.image_size[0], "height": seq.image_size[1], "fps": seq.fps}, fh
        )


# -- torso / wrist helpers ------------------------------------------------------

def torso_lengths(seq: KeypointSequence) -> np.ndarray:
    """Neck-to-mid-hip distance per frame; NaN where either point is undetected."""
    out = np.full(len(seq), np.nan)
    for i, f in enumerate(seq.frames):
        neck, hip = f.body[BODY_NECK], f.body[BODY_MID_HIP]
        if neck[2] > 0.0 and hip[2] > 0.0:
            out[i] = float(np.hypot(neck[0] - hip[0], neck[1] - hip[1]))
    return out


def median_torso_length(seq: KeypointSequence) -> float:
    lengths = torso_lengths(seq)
    valid = lengths[~np.isnan(lengths)]
    if valid.size == 0:
        raise KeypointError("torso never detected (neck and mid-hip required)")
    return float(np.median(valid))


def wrist_track(seq: KeypointSequence, hand: str) -> np.ndarray:
    """(T, 3) wrist observations for one hand: body wrist, falling back to the
    hand-array wrist when the body point is undetected."""
    body_idx = BODY_LEFT_WRIST if hand == "left" else BODY_RIGHT_WRIST
    array = "left_hand" if hand == "left" else "right_hand"
    out = np.zeros((len(seq), 3))
    for i, f in enumerate(seq.frames):
        row = f.body[body_idx]
        if row[2] <= 0.0:
            row = f.array(array)[HAND_WRIST]
        out[i] = row
    return out


# -- trimming -------------------------------------------------------------------

def trim_sequence(seq: KeypointSequence, cfg: TrimConfig = TrimConfig()) -> tuple:
    """First and last frame of wrist motion, per the rest-displacement rule.

    A frame is "moving" when either wrist's displacement from its rest
    position (median of that wrist's first ``rest_frames`` detections) exceeds
    ``motion_threshold`` x median torso length. The start (end) is the first
    (last) frame opening (closing) a run of ``hysteresis`` moving frames.
    """
    tracks = {h: wrist_track(seq, h) for h in ("left", "right")}
    if all(not np.any(t[:, 2] > 0.0) for t in tracks.values()):
        raise KeypointError("untrackable sequence: no wrist ever detected")
    threshold = cfg.motion_threshold * median_torso_length(seq)

    moving = np.zeros(len(seq), dtype=bool)
    for track in tracks.values():
        det = np.flatnonzero(track[:, 2] > 0.0)
        if det.size == 0:
            continue
        rest = np.median(track[det[: cfg.rest_frames], :2], axis=0)
        disp = np.linalg.norm(track[det, :2] - rest, axis=1)
        moving[det[disp > threshold]] = True

    h = max(1, cfg.hysteresis)
    runs = _runs_of(moving, h)
    if not runs:
        raise KeypointError("no sign motion found")
    start = runs[0][0]
    end = runs[-1][1]
    if start >= end:
        raise KeypointError("no sign motion found")
    return start, end


def _runs_of(mask: np.ndarray, min_len: int):
    runs, i, n = [], 0, len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            if j - i + 1 >= min_len:
                runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def slice_sequence(seq: KeypointSequence, start: int, end: int) -> KeypointSequence:
    """Frames start..end inclusive, with timestamps rebased to 0."""
    frames = [
        replace(f, timestamp_index=i)
        for i, f in enumerate(seq.frames[start : end + 1])
    ]
    return replace(seq, frames=tuple(frames))


# -- normalization ----------------------------------------------------------------

def normalize_sequence(seq: KeypointSequence) -> KeypointSequence:
    """Divide all coordinates by the median torso length; flip y to up-positive.

    The flip happens only on the first application (tracked by ``y_up``), so
    normalization is idempotent after the initial call; confidences are
    untouched.
    """
    scale = median_torso_length(seq)
    height = seq.image_size[1]

    def transform(arr: np.ndarray) -> np.ndarray:
        out = np.array(arr)
        out[:, 0] = arr[:, 0] / scale
        if seq.y_up:
            out[:, 1] = arr[:, 1] / scale
        else:
            out[:, 1] = (height - arr[:, 1]) / scale
        return out

    frames = tuple(
        KeypointFrame(
            transform(f.body), transform(f.left_hand), transform(f.right_hand), f.timestamp_index
        )
        for f in seq.frames
    )
    new_size = (seq.image_size[0] / scale, seq.image_size[1] / scale)
    return KeypointSequence(frames, fps=seq.fps, image_size=new_size, y_up=True)
