"""Sign classes, their constraint sets, reference-pose estimation, and the two
hand-pose loss terms (symmetry and invariance) with analytic gradients.

Eight sign classes cover isolated signs: class 0 is one-handed, classes 1-3
are two-handed by how the non-dominant hand participates, and the a/b suffix
marks whether the active hand pose is static or transitions between two poses.
Classes sharing a constraint set collapse into six groups (1a with 2a, 2b with
3b).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .keypoints import CoreInterval, KeypointSequence
from .kinematics import (
    DEFAULT_MIRROR_COMPONENTS,
    HAND_JOINT_COUNT,
    HandPose,
    mean_pose,
    reflect_axis_angle,
    slerp_pose,
)


class SignClass(enum.Enum):
    C0A = "0a"
    C0B = "0b"
    C1A = "1a"
    C1B = "1b"
    C2A = "2a"
    C2B = "2b"
    C3A = "3a"
    C3B = "3b"

    @staticmethod
    def parse(text: str) -> "SignClass":
        return SignClass(text.strip().lower())


class SignGroup(enum.Enum):
    G0A = "G0a"
    G0B = "G0b"
    G1A2A = "G1a2a"
    G1B = "G1b"
    G2B3B = "G2b3b"
    G3A = "G3a"

    @staticmethod
    def parse(text: str) -> "SignGroup":
        for g in SignGroup:
            if g.value.lower() == text.strip().lower():
                return g
        raise ValueError(f"unknown sign group {text!r}")


class InvarianceMode(enum.Enum):
    OFF = "off"
    STATIC = "static"
    TRANSITIONING = "transitioning"


@dataclass(frozen=True)
class ConstraintSpec:
    """Which constraints a class activates: hand-pose symmetry plus per-hand
    invariance modes (dominant / non-dominant)."""

    symmetry: bool
    dominant_invariance: InvarianceMode
    nondominant_invariance: InvarianceMode


_OFF = InvarianceMode.OFF
_STATIC = InvarianceMode.STATIC
_TRANS = InvarianceMode.TRANSITIONING

# One row per sign class: (symmetry, dominant, non-dominant).
_CLASS_CONSTRAINTS = {
    SignClass.C0A: ConstraintSpec(False, _STATIC, _OFF),
    SignClass.C0B: ConstraintSpec(False, _TRANS, _OFF),
    SignClass.C1A: ConstraintSpec(True, _STATIC, _STATIC),
    SignClass.C1B: ConstraintSpec(True, _TRANS, _TRANS),
    SignClass.C2A: ConstraintSpec(True, _STATIC, _STATIC),
    SignClass.C2B: ConstraintSpec(False, _TRANS, _STATIC),
    SignClass.C3A: ConstraintSpec(False, _STATIC, _STATIC),
    SignClass.C3B: ConstraintSpec(False, _TRANS, _STATIC),
}

_CLASS_GROUPS = {
    SignClass.C0A: SignGroup.G0A,
    SignClass.C0B: SignGroup.G0B,
    SignClass.C1A: SignGroup.G1A2A,
    SignClass.C2A: SignGroup.G1A2A,
    SignClass.C1B: SignGroup.G1B,
    SignClass.C2B: SignGroup.G2B3B,
    SignClass.C3B: SignGroup.G2B3B,
    SignClass.C3A: SignGroup.G3A,
}


def constraints_for_class(c: SignClass) -> ConstraintSpec:
    return _CLASS_CONSTRAINTS[c]


def group_of_class(c: SignClass) -> SignGroup:
    return _CLASS_GROUPS[c]


def constraints_for_group(g: SignGroup) -> ConstraintSpec:
    for c, grp in _CLASS_GROUPS.items():
        if grp is g:
            return _CLASS_CONSTRAINTS[c]
    raise ValueError(f"unknown group {g}")


def classes_in_group(g: SignGroup) -> tuple:
    return tuple(c for c in SignClass if _CLASS_GROUPS[c] is g)


# -- reference pose sequences -----------------------------------------------------


@dataclass(frozen=True)
class ReferencePoseSequence:
    """Prototype hand pose over a sign: one static pose, or an initial/final
    pair interpolated across the core interval."""

    mode: str  # "static" | "transitioning"
    hand: str  # "left" | "right"
    pose_static: Optional[HandPose] = None
    pose_initial: Optional[HandPose] = None
    pose_final: Optional[HandPose] = None

    def __post_init__(self):
        if self.mode == "static":
            if self.pose_static is None or self.pose_initial is not None or self.pose_final is not None:
                raise ValueError("static RPS carries exactly pose_static")
        elif self.mode == "transitioning":
            if self.pose_static is not None or self.pose_initial is None or self.pose_final is None:
                raise ValueError("transitioning RPS carries exactly pose_initial and pose_final")
        else:
            raise ValueError(f"unknown RPS mode {self.mode!r}")
        if self.hand not in ("left", "right"):
            raise ValueError(f"hand must be 'left' or 'right', got {self.hand!r}")


@dataclass(frozen=True)
class CandidateConfig:
    quantile: float = 0.6  # confidence quantile a frame must reach
    max_candidates: int = 10


def _mean_hand_confidence(seq: KeypointSequence, hand: str) -> np.ndarray:
    arr = "left_hand" if hand == "left" else "right_hand"
    return np.array([float(f.array(arr)[:, 2].mean()) for f in seq.frames])


def _select_in_window(conf: np.ndarray, lo: float, hi: float, cfg: CandidateConfig):
    frames = [t for t in range(len(conf)) if lo < t < hi]
    usable = [t for t in frames if conf[t] > 0.0]
    if not usable:
        return []
    cutoff = float(np.quantile([conf[t] for t in frames], cfg.quantile))
    passing = [t for t in usable if conf[t] >= cutoff]
    if not passing:
        return []
    # Highest confidence first; earlier frame breaks ties. Output in frame order.
    ranked = sorted(passing, key=lambda t: (-conf[t], t))[: cfg.max_candidates]
    return sorted(ranked)


def select_candidate_frames(
    seq: KeypointSequence,
    core: CoreInterval,
    mode: str,
    hand: str,
    cfg: CandidateConfig = CandidateConfig(),
):
    """Reliable frames for reference-pose estimation, chosen by hand-keypoint
    confidence inside the core interval.

    Static mode returns one list; transitioning mode splits the core at its
    midpoint and returns (early list, late list).
    """
    conf = _mean_hand_confidence(seq, hand)
    if mode == "static":
        picked = _select_in_window(conf, core.t_start, core.t_end, cfg)
        if not picked:
            raise ValueError("no reliable frames for reference pose")
        return picked
    if mode == "transitioning":
        mid = 0.5 * (core.t_start + core.t_end)
        first = _select_in_window(conf, core.t_start, mid, cfg)
        second = _select_in_window(conf, mid, core.t_end, cfg)
        if not first or not second:
            raise ValueError("no reliable frames for reference pose")
        return first, second
    raise ValueError(f"unknown selection mode {mode!r}")


def estimate_rps(candidate_poses, mode: str, hand: str) -> ReferencePoseSequence:
    """Average candidate hand poses into a reference pose sequence.

    Static mode takes one list of poses; transitioning mode takes a pair of
    lists (early, late) and averages each.
    """
    if mode == "static":
        poses = list(candidate_poses)
        if not poses:
            raise ValueError("cannot estimate a reference pose from zero candidates")
        return ReferencePoseSequence(mode="static", hand=hand, pose_static=mean_pose(poses))
    if mode == "transitioning":
        first, second = candidate_poses
        first, second = list(first), list(second)
        if not first or not second:
            raise ValueError("cannot estimate a reference pose from zero candidates")
        return ReferencePoseSequence(
            mode="transitioning",
            hand=hand,
            pose_initial=mean_pose(first),
            pose_final=mean_pose(second),
        )
    raise ValueError(f"unknown RPS mode {mode!r}")


def rps_pose_at(rps: ReferencePoseSequence, t: float, core: CoreInterval) -> HandPose:
    """Reference pose at frame t: constant for static signs, SLERP across the
    core interval (clamped outside it) for transitioning signs."""
    if rps.mode == "static":
        return rps.pose_static
    s = (t - core.t_start) / (core.t_end - core.t_start)
    s = min(1.0, max(0.0, s))
    return slerp_pose(rps.pose_initial, rps.pose_final, s)


# -- loss terms -------------------------------------------------------------------


def _reflection_signs(components=DEFAULT_MIRROR_COMPONENTS) -> np.ndarray:
    sign = np.ones(HAND_JOINT_COUNT * 3)
    sign.reshape(HAND_JOINT_COUNT, 3)[:, list(components)] = -1.0
    return sign


_REFLECT_SIGNS = _reflection_signs()


def symmetry_loss(theta_r: np.ndarray, theta_l: np.ndarray, lambda_s: float):
    """Hand-pose symmetry penalty lambda_s * ||theta_r - r(theta_l)||^2.

    Operates on flattened hand parameter vectors; r is the linear reflection
    (component sign flips). Returns (value, grad wrt theta_r, grad wrt theta_l).
    """
    theta_r = np.asarray(theta_r, dtype=np.float64).reshape(-1)
    theta_l = np.asarray(theta_l, dtype=np.float64).reshape(-1)
    if theta_r.shape != theta_l.shape:
        raise ValueError("hand parameter vectors must have equal length")
    resid = theta_r - _REFLECT_SIGNS * theta_l
    value = lambda_s * float(resid @ resid)
    grad_r = 2.0 * lambda_s * resid
    grad_l = -2.0 * lambda_s * _REFLECT_SIGNS * resid
    return value, grad_r, grad_l


def invariance_loss(theta_h: np.ndarray, theta_ref_t: np.ndarray, lambda_i: float):
    """Hand-pose invariance penalty lambda_i * ||theta_ref_t - theta_h||^2.

    Returns (value, grad wrt theta_h).
    """
    theta_h = np.asarray(theta_h, dtype=np.float64).reshape(-1)
    theta_ref_t = np.asarray(theta_ref_t, dtype=np.float64).reshape(-1)
    if theta_h.shape != theta_ref_t.shape:
        raise ValueError("hand parameter vectors must have equal length")
    resid = theta_h - theta_ref_t
    value = lambda_i * float(resid @ resid)
    grad = 2.0 * lambda_i * resid
    return value, grad


def symmetry_loss_pose(theta_r: HandPose, theta_l: HandPose, lambda_s: float):
    """Pose-object wrapper around :func:`symmetry_loss` (identity hand basis)."""
    v, gr, gl = symmetry_loss(theta_r.flat(), theta_l.flat(), lambda_s)
    return v, gr.reshape(HAND_JOINT_COUNT, 3), gl.reshape(HAND_JOINT_COUNT, 3)


def invariance_loss_pose(theta_h: HandPose, theta_ref_t: HandPose, lambda_i: float):
    v, g = invariance_loss(theta_h.flat(), theta_ref_t.flat(), lambda_i)
    return v, g.reshape(HAND_JOINT_COUNT, 3)


# -- serialization ("rps file" sidecar) ---------------------------------------------


def _pose_to_list(p: Optional[HandPose]):
    return None if p is None else [[float(v) for v in row] for row in p.joints]


def _pose_from_list(rows) -> Optional[HandPose]:
    return None if rows is None else HandPose(np.asarray(rows, dtype=np.float64))


def rps_to_dict(rps: ReferencePoseSequence) -> dict:
    return {
        "mode": rps.mode,
        "hand": rps.hand,
        "pose_static": _pose_to_list(rps.pose_static),
        "pose_initial": _pose_to_list(rps.pose_initial),
        "pose_final": _pose_to_list(rps.pose_final),
    }


def rps_from_dict(raw: dict) -> ReferencePoseSequence:
    return ReferencePoseSequence(
        mode=raw["mode"],
        hand=raw["hand"],
        pose_static=_pose_from_list(raw.get("pose_static")),
        pose_initial=_pose_from_list(raw.get("pose_initial")),
        pose_final=_pose_from_list(raw.get("pose_final")),
    )


def save_rps(rps_by_hand: dict, path) -> None:
    """Write an RPS sidecar file: {"left": {...}, "right": {...}} (hands optional)."""
    payload = {hand: rps_to_dict(rps) for hand, rps in rps_by_hand.items() if rps is not None}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_rps(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return {hand: rps_from_dict(entry) for hand, entry in raw.items()}
