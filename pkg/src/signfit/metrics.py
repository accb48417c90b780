"""Evaluation: translation-aligned point-set error (reported in millimeters),
joint-angle error, and the constraint-ablation harness.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .fitting import (
    UNCONSTRAINED,
    fit_prepared,
    prepare_sequence,
)
from .kinematics import Skeleton, forward_kinematics
from .linguistic import ConstraintSpec, InvarianceMode, constraints_for_class
from .objective import FitState
from .rotations import geodesic_angle
from .synthetic import SynthSpec, synth_camera, synth_sequence

TOGGLES = ("none", "sym_only", "inv_only", "both")


@dataclass(frozen=True)
class PointSetFrame:
    """N 3D points (meters) with named index-subset regions."""

    points: np.ndarray  # (N, 3)
    region_mask: dict  # name -> index array

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        masks = {}
        for name, idx in self.region_mask.items():
            idx = np.asarray(idx, dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= pts.shape[0]):
                raise ValueError(f"region {name!r} indexes outside [0, {pts.shape[0]})")
            masks[name] = idx
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "region_mask", masks)


def tr_v2v(pred: PointSetFrame, gt: PointSetFrame, region: str) -> float:
    """Translation-aligned mean point error over a region, in millimeters.

    Both point sets are centered on their own centroid computed over the
    evaluation region before the distances are averaged.
    """
    if pred.points.shape != gt.points.shape:
        raise ValueError("prediction and ground truth must share point count")
    if region not in pred.region_mask or region not in gt.region_mask:
        raise ValueError(f"unknown region {region!r}")
    idx = pred.region_mask[region]
    if idx.size == 0:
        raise ValueError(f"region {region!r} is empty")
    a = pred.points[idx]
    b = gt.points[idx]
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    return float(np.linalg.norm(a - b, axis=1).mean() * 1000.0)


def skeleton_regions(skel: Skeleton) -> dict:
    return {
        "upper_body": np.arange(skel.n_joints),
        "left_hand": np.asarray(skel.left_hand_joints, dtype=np.int64),
        "right_hand": np.asarray(skel.right_hand_joints, dtype=np.int64),
    }


def state_point_set(skel: Skeleton, state: FitState, regions: Optional[dict] = None) -> PointSetFrame:
    pos = forward_kinematics(skel, state.body, state.left, state.right)
    return PointSetFrame(pos, regions or skeleton_regions(skel))


def hand_angle_errors(fit: FitState, gt: FitState) -> dict:
    """Mean per-joint geodesic angle error (radians) per hand and combined."""
    left = [geodesic_angle(a, b) for a, b in zip(fit.left.joints, gt.left.joints)]
    right = [geodesic_angle(a, b) for a, b in zip(fit.right.joints, gt.right.joints)]
    return {
        "left_hand": float(np.mean(left)),
        "right_hand": float(np.mean(right)),
        "both_hands": float(np.mean(left + right)),
    }


def body_angle_error(fit: FitState, gt: FitState) -> float:
    angles = [geodesic_angle(a, b) for a, b in zip(fit.body.joints, gt.body.joints)]
    return float(np.mean(angles))


def all_angle_error(fit: FitState, gt: FitState) -> float:
    """Mean over every joint of the skeleton (body plus both hands)."""
    angles = [geodesic_angle(a, b) for a, b in zip(fit.body.joints, gt.body.joints)]
    angles += [geodesic_angle(a, b) for a, b in zip(fit.left.joints, gt.left.joints)]
    angles += [geodesic_angle(a, b) for a, b in zip(fit.right.joints, gt.right.joints)]
    return float(np.mean(angles))


def sequence_errors(skel: Skeleton, states: Sequence[FitState], gt_states: Sequence[FitState]) -> dict:
    """Frame-averaged TR-V2V (mm) per region plus angle errors (rad)."""
    regions = skeleton_regions(skel)
    mm = {name: [] for name in regions}
    rad = {"left_hand": [], "right_hand": [], "both_hands": [], "all": []}
    for fit, gt in zip(states, gt_states):
        ps_fit = state_point_set(skel, fit, regions)
        ps_gt = state_point_set(skel, gt, regions)
        for name in regions:
            mm[name].append(tr_v2v(ps_fit, ps_gt, name))
        ang = hand_angle_errors(fit, gt)
        for k in ("left_hand", "right_hand", "both_hands"):
            rad[k].append(ang[k])
        rad["all"].append(all_angle_error(fit, gt))
    out = {f"{k}_mm": float(np.mean(v)) for k, v in mm.items()}
    out.update({f"{k}_rad": float(np.mean(v)) for k, v in rad.items()})
    return out


def toggle_constraint(base: ConstraintSpec, toggle: str) -> ConstraintSpec:
    """Force a constraint subset: none, sym_only, inv_only, or both."""
    off = InvarianceMode.OFF
    if toggle == "none":
        return UNCONSTRAINED
    if toggle == "sym_only":
        return ConstraintSpec(base.symmetry, off, off)
    if toggle == "inv_only":
        return ConstraintSpec(False, base.dominant_invariance, base.nondominant_invariance)
    if toggle == "both":
        return base
    raise ValueError(f"unknown toggle {toggle!r}")


@dataclass
class AblationResult:
    rows: list  # dicts: sign_class, seed, toggle, metrics...
    toggles: tuple

    def mean(self, toggle: str, metric: str) -> float:
        vals = [r[metric] for r in self.rows if r["toggle"] == toggle]
        return float(np.mean(vals))

    def to_csv(self) -> str:
        metrics = [k for k in self.rows[0] if k not in ("sign_class", "seed", "toggle")]
        buf = io.StringIO()
        buf.write(",".join(["sign_class", "seed", "toggle"] + metrics) + "\n")
        for r in self.rows:
            cells = [r["sign_class"], str(r["seed"]), r["toggle"]]
            cells += [f"{r[m]:.6f}" for m in metrics]
            buf.write(",".join(cells) + "\n")
        for t in self.toggles:
            cells = ["mean", "-", t] + [f"{self.mean(t, m):.6f}" for m in metrics]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def ablation_run(
    specs: Sequence[SynthSpec],
    toggles: Sequence[str],
    run: RunConfig,
    skel: Skeleton,
    basis=None,
) -> AblationResult:
    """Fit every synthetic spec under each constraint toggle and tabulate
    position (mm) and angle (rad) errors against the generator's ground truth.

    Preliminary fits and reference poses are shared across toggles of the same
    spec, so toggles differ only in the constraint subset applied.
    """
    run = replace(run, assume_trimmed=True)
    rows = []
    for spec in specs:
        cam = synth_camera(spec)
        seq, gt_states = synth_sequence(spec, skel, cam)
        prepared = prepare_sequence(seq, run, skel, basis=basis, camera=cam)
        base = constraints_for_class(spec.sign_class)
        for toggle in toggles:
            constraint = toggle_constraint(base, toggle)
            result = fit_prepared(
                prepared, constraint, run, skel, basis=basis, sign_class=spec.sign_class
            )
            gt_window = gt_states[result.trim[0] : result.trim[1] + 1]
            metrics = sequence_errors(skel, result.states, gt_window)
            rows.append(
                {"sign_class": spec.sign_class.value, "seed": spec.seed, "toggle": toggle, **metrics}
            )
    return AblationResult(rows=rows, toggles=tuple(toggles))
