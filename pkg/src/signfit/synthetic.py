"""Synthetic sign-sequence generator with exact ground truth.

Trajectory shapes (arm arcs, hand-pose SLERP transitions) are test fixtures
honoring each sign class's semantics, not claims about real signing: symmetric
classes keep the right hand an exact mirror of the left, passive hands hold
their pose, and transitioning hands interpolate between two reference shapes
across the core interval on the same clamped schedule the fitter assumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .keypoints import KeypointFrame, KeypointSequence, BODY_POINTS, HAND_POINTS
from .kinematics import (
    Camera,
    HandPose,
    BodyPose,
    Skeleton,
    fk_transforms,
    reflect_hand_pose,
    site_position,
)
from .keypoints import core_interval
from .linguistic import SignClass
from .objective import FitState, ParamLayout, _project_point
from .rotations import slerp_axis_angle

HANDSHAPES = ("flat", "fist", "point", "spread", "curl")


def handshape(name: str, side: str = "right") -> HandPose:
    """Canonical right-hand shapes; left-side shapes are their mirror images."""
    joints = np.zeros((15, 3))
    flex = joints[:, 2]  # right-hand finger flexion is the negative z component
    if name == "flat":
        flex[:] = -0.1
    elif name == "fist":
        flex[:] = -1.3
    elif name == "point":
        flex[:] = -1.2
        flex[3:6] = -0.06  # index chain stays extended
    elif name == "spread":
        flex[:] = -0.15
        abduction = (0.35, 0.2, 0.0, -0.2, -0.35)
        for finger, y in enumerate(abduction):
            joints[3 * finger, 1] = y
    elif name == "curl":
        flex[:] = -1.2
        flex[0::3] = -0.05  # base joints stay straight, outer joints curl
    else:
        raise ValueError(f"unknown handshape {name!r}")
    pose = HandPose(joints)
    return pose if side == "right" else reflect_hand_pose(pose)


@dataclass(frozen=True)
class SynthSpec:
    sign_class: SignClass
    T: int = 40
    pixel_noise_sigma: float = 0.0
    hand_conf_dropout: float = 0.0  # marginal per-frame probability per hand
    dropout_burst: int = 1  # consecutive frames per dropout event (motion blur)
    seed: int = 0
    rest_padding: int = 0  # extra rest frames before and after the sign
    image_size: tuple = (1280, 960)
    focal: float = 5000.0
    depth: float = 6.0

    def __post_init__(self):
        if not 0.0 <= self.hand_conf_dropout < 1.0:
            raise ValueError("hand_conf_dropout must lie in [0, 1)")
        if self.dropout_burst < 1:
            raise ValueError("dropout_burst must be at least 1")
        if self.T < 8:
            raise ValueError("synthetic sequences need at least 8 frames")


# Per class: (dominant static shape or (initial, final); non-dominant shape or
# pair; non-dominant arm mode). Symmetric classes mirror the dominant hand.
_CLASS_PLAN = {
    SignClass.C0A: (("point",), ("flat",), "side"),
    SignClass.C0B: (("curl", "spread"), ("flat",), "side"),
    SignClass.C1A: (("spread",), "mirror", "mirror"),
    SignClass.C1B: (("curl", "spread"), "mirror", "mirror"),
    SignClass.C2A: (("fist",), "mirror", "hold"),
    SignClass.C2B: (("curl", "spread"), ("curl",), "hold"),
    SignClass.C3A: (("fist",), ("spread",), "hold"),
    SignClass.C3B: (("curl", "spread"), ("fist",), "hold"),
}

_ARM_BASE = {
    # (shoulder aa, elbow aa) for the signing position, right side
    "signing": ((0.0, 0.0, -0.9), (0.0, -1.1, 0.0)),
    "side": ((0.0, 0.0, -0.15), (0.0, -0.25, 0.0)),
}


def _mirror_aa(v):
    return np.array([v[0], -v[1], -v[2]])


def _body_pose(skel: Skeleton, right_arm, left_arm, translation) -> BodyPose:
    body_idx = list(skel.body_joints)
    names = [skel.joint_names[j] for j in body_idx]
    joints = np.zeros((len(body_idx), 3))
    joints[names.index("right_shoulder")] = right_arm[0]
    joints[names.index("right_elbow")] = right_arm[1]
    joints[names.index("left_shoulder")] = left_arm[0]
    joints[names.index("left_elbow")] = left_arm[1]
    return BodyPose(joints, translation)


def _dominant_arm(base, arc: float):
    shoulder = np.asarray(base[0], dtype=np.float64).copy()
    shoulder[2] += arc  # arc modulates arm elevation
    return shoulder, np.asarray(base[1], dtype=np.float64)


def _hand_pose_at(plan, t: float, core, side: str) -> HandPose:
    shapes = plan
    if len(shapes) == 1:
        return handshape(shapes[0], side)
    pose_i = handshape(shapes[0], side)
    pose_f = handshape(shapes[1], side)
    s = (t - core.t_start) / (core.t_end - core.t_start)
    s = min(1.0, max(0.0, s))
    rows = [slerp_axis_angle(a, b, s) for a, b in zip(pose_i.joints, pose_f.joints)]
    return HandPose(np.stack(rows))


def ground_truth_states(spec: SynthSpec, skel: Skeleton, cam: Camera):
    """Class-consistent ground-truth states, one per frame (padding included)."""
    dom_plan, nondom_plan, nondom_arm = _CLASS_PLAN[spec.sign_class]
    core = core_interval(spec.T)
    translation = np.array([0.0, 0.3, spec.depth])
    states = []
    total = spec.T + 2 * spec.rest_padding
    for k in range(total):
        in_rest = k < spec.rest_padding or k >= spec.rest_padding + spec.T
        t = float(np.clip(k - spec.rest_padding, 0, spec.T - 1))

        if in_rest:
            right_arm = tuple(np.asarray(v) for v in _ARM_BASE["side"])
            left_arm = tuple(_mirror_aa(v) for v in _ARM_BASE["side"])
        else:
            arc = 0.3 * np.sin(2.0 * np.pi * t / (spec.T - 1))
            right_arm = _dominant_arm(_ARM_BASE["signing"], arc)
            if nondom_arm == "mirror":
                left_arm = tuple(_mirror_aa(v) for v in right_arm)
            elif nondom_arm == "hold":
                left_arm = tuple(_mirror_aa(np.asarray(v)) for v in _ARM_BASE["signing"])
            else:  # "side"
                left_arm = tuple(_mirror_aa(np.asarray(v)) for v in _ARM_BASE["side"])

        right_hand = _hand_pose_at(dom_plan, t, core, "right")
        if nondom_plan == "mirror":
            left_hand = reflect_hand_pose(right_hand)
        else:
            left_hand = _hand_pose_at(nondom_plan, t, core, "left")

        body = _body_pose(skel, right_arm, left_arm, translation)
        states.append(FitState(body=body, left=left_hand, right=right_hand, camera=cam))
    return states


def synth_camera(spec: SynthSpec) -> Camera:
    w, h = spec.image_size
    return Camera(focal=spec.focal, principal_point=(w / 2.0, h / 2.0), root_depth=spec.depth)


def synth_sequence(spec: SynthSpec, skel: Skeleton, cam: Optional[Camera] = None):
    """Generate (KeypointSequence, ground-truth FitState list) for a spec.

    Projected keypoints get Gaussian pixel noise and per-frame, per-hand
    confidence dropout; everything is deterministic in the seed.
    """
    cam = cam or synth_camera(spec)
    states = ground_truth_states(spec, skel, cam)
    rng = np.random.default_rng(spec.seed)
    layout = ParamLayout(skel)

    # Dropout events blank a hand for dropout_burst consecutive frames,
    # keeping the configured per-frame marginal rate.
    burst_left = burst_right = 0
    p_event = spec.hand_conf_dropout / spec.dropout_burst
    frames = []
    for k, state in enumerate(states):
        aa = layout.local_rotations(layout.pack(state))
        rots, pos = fk_transforms(skel, aa, state.body.root_translation)
        body = np.zeros((BODY_POINTS, 3))
        left = np.zeros((HAND_POINTS, 3))
        right = np.zeros((HAND_POINTS, 3))
        arrays = {"body": body, "left_hand": left, "right_hand": right}
        for site in skel.keypoint_map:
            p = site_position(rots, pos, site)
            uv = _project_point(cam, p)
            arr = arrays[site.array]
            arr[site.index, :2] = uv
            arr[site.index, 2] = 1.0
        if spec.pixel_noise_sigma > 0.0:
            for arr in arrays.values():
                detected = arr[:, 2] > 0.0
                noise = rng.normal(0.0, spec.pixel_noise_sigma, size=(int(detected.sum()), 2))
                arr[detected, :2] += noise
        if spec.hand_conf_dropout > 0.0:
            if burst_left == 0 and rng.random() < p_event:
                burst_left = spec.dropout_burst
            if burst_right == 0 and rng.random() < p_event:
                burst_right = spec.dropout_burst
            if burst_left > 0:
                left[:, 2] = 0.0
                burst_left -= 1
            if burst_right > 0:
                right[:, 2] = 0.0
                burst_right -= 1
        frames.append(KeypointFrame(body, left, right, k))

    seq = KeypointSequence(tuple(frames), fps=30.0, image_size=spec.image_size)
    return seq, states


def class_semantics_residuals(spec: SynthSpec, states) -> dict:
    """Residuals asserting the generator honors its class's constraint row:
    symmetry mismatch, active-hand pose change (a-classes), and passive-hand
    drift, measured on the non-padding frames."""
    from .linguistic import constraints_for_class, InvarianceMode

    row = constraints_for_class(spec.sign_class)
    sign = states[spec.rest_padding : spec.rest_padding + spec.T]
    out = {}
    if row.symmetry:
        out["symmetry"] = max(
            float(np.abs(s.right.flat() - reflect_hand_pose(s.left).flat()).max())
            for s in sign
        )
    first_r, last_r = sign[0].right.flat(), sign[-1].right.flat()
    change = float(np.abs(last_r - first_r).max())
    if row.dominant_invariance is InvarianceMode.STATIC:
        out["dominant_static_drift"] = max(
            float(np.abs(s.right.flat() - first_r).max()) for s in sign
        )
    else:
        out["dominant_transition_magnitude"] = change
    if row.nondominant_invariance is InvarianceMode.STATIC:
        first_l = sign[0].left.flat()
        out["nondominant_static_drift"] = max(
            float(np.abs(s.left.flat() - first_l).max()) for s in sign
        )
    return out
