"""Sequence fitting pipeline: camera initialization, preliminary candidate
fits, reference-pose estimation, sign-group resolution, and the sequential
per-frame solve with temporal initialization.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classifier import DecisionTree, extract_features, fallback_tree
from .config import RunConfig
from .keypoints import (
    BODY_MID_HIP,
    CoreInterval,
    KeypointSequence,
    core_interval,
    median_torso_length,
    normalize_sequence,
    trim_sequence,
)
from .kinematics import (
    Camera,
    HandBasis,
    HandPose,
    BodyPose,
    Skeleton,
    default_skeleton,
    forward_kinematics,
    load_hand_basis,
    load_skeleton,
)
from .linguistic import (
    ConstraintSpec,
    InvarianceMode,
    ReferencePoseSequence,
    SignClass,
    SignGroup,
    constraints_for_class,
    constraints_for_group,
    estimate_rps,
    group_of_class,
    select_candidate_frames,
)
from .objective import FitState, ObjectiveConfig, ParamLayout, assemble_objective
from .rotations import axis_angle_to_matrix
from .solver import SolveOptions, fd_hessian_product, solve_trust_region_ncg

UNCONSTRAINED = ConstraintSpec(False, InvarianceMode.OFF, InvarianceMode.OFF)


class FitError(RuntimeError):
    pass


def load_run_assets(cfg: RunConfig):
    """Resolve the skeleton and optional hand basis referenced by a config."""
    skel = load_skeleton(cfg.skeleton_path) if cfg.skeleton_path else default_skeleton()
    basis = load_hand_basis(cfg.hand_basis_path) if cfg.hand_basis_path else None
    return skel, basis


def rest_torso_length(skel: Skeleton) -> float:
    """Neck-to-pelvis distance of the rest pose."""
    nb = len(skel.body_joints)
    zero = FitState(
        body=BodyPose.zero(nb, depth=1.0), left=HandPose.zero(), right=HandPose.zero(),
        camera=Camera(1.0, (0.0, 0.0), 1.0),
    )
    pos = forward_kinematics(skel, zero.body, zero.left, zero.right)
    return float(np.linalg.norm(pos[skel.index_of("neck")] - pos[skel.index_of("pelvis")]))


def init_camera(seq: KeypointSequence, skel: Skeleton, focal: float = 5000.0) -> Camera:
    """Similar-triangles depth heuristic: pick the root depth that makes the
    rest-pose torso project to the observed median torso length. Works with
    upper-body-only framing (only neck and mid-hip keypoints required)."""
    observed = median_torso_length(seq)
    rest = rest_torso_length(skel)
    depth = focal * rest / observed
    w, h = seq.image_size
    return Camera(focal=focal, principal_point=(w / 2.0, h / 2.0), root_depth=depth)


def rest_state(skel: Skeleton, camera: Camera, seq: KeypointSequence) -> FitState:
    """Zero pose with the root translation back-projected from the observed
    median mid-hip position at the initialization depth."""
    hips = np.array(
        [f.body[BODY_MID_HIP, :2] for f in seq.frames if f.body[BODY_MID_HIP, 2] > 0.0]
    )
    cx, cy = camera.principal_point
    if hips.size:
        u, v = np.median(hips, axis=0)
    else:
        u, v = cx, cy
    z = camera.root_depth
    t = np.array([(u - cx) * z / camera.focal, (v - cy) * z / camera.focal, z])
    nb = len(skel.body_joints)
    return FitState(
        body=BodyPose(np.zeros((nb, 3)), t),
        left=HandPose.zero(),
        right=HandPose.zero(),
        camera=camera,
    )


# -- keypoint-lifting initialization ----------------------------------------------
#
# Monocular fitting is multimodal (limbs toward or away from the camera project
# almost identically), so cold starts are built by lifting detected keypoints
# to 3D under bone-length constraints, taking the toward-camera branch of each
# ray-sphere intersection: signing space lies in front of the body. The local
# optimizer then only has to polish within the correct basin.


def _backproject_ray(camera: Camera, uv):
    cx, cy = camera.principal_point
    return (uv[0] - cx) / camera.focal, (uv[1] - cy) / camera.focal


def _lift_on_ray(
    camera: Camera,
    uv,
    center: np.ndarray,
    length: float,
    mode: str,
    ref_z: float = 0.0,
    side_dir: Optional[np.ndarray] = None,
):
    """Point at distance ``length`` from ``center`` along the viewing ray of
    ``uv``. The quadratic has two branches; ``mode`` picks one: "toward"
    (smaller depth), "plane" (depth nearest ref_z), or "side" (larger dot with
    ``side_dir``, used for the palmar flexion convention). Falls back to the
    closest-approach point when the ray misses the sphere."""
    a, b = _backproject_ray(camera, uv)
    q2 = a * a + b * b + 1.0
    q1 = a * center[0] + b * center[1] + center[2]
    q0 = float(center @ center) - length * length
    disc = q1 * q1 - q2 * q0
    if disc <= 0.0:
        z = q1 / q2
    else:
        root = np.sqrt(disc)
        z_lo = (q1 - root) / q2
        z_hi = (q1 + root) / q2
        if mode == "plane":
            z = z_lo if abs(z_lo - ref_z) <= abs(z_hi - ref_z) else z_hi
        elif mode == "flexplane":
            # Hinge segments move perpendicular to their flex axis; keep the
            # branch whose direction stays closest to that plane.
            p_lo = np.array([a * z_lo, b * z_lo, z_lo])
            p_hi = np.array([a * z_hi, b * z_hi, z_hi])
            d_lo = abs(float((p_lo - center) @ side_dir))
            d_hi = abs(float((p_hi - center) @ side_dir))
            z = z_lo if d_lo <= d_hi else z_hi
        else:
            z = z_lo
    z = max(z, 1e-3)
    return np.array([a * z, b * z, z])


def _rot_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Minimal rotation (as axis-angle) mapping direction u onto direction v."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return np.zeros(3)
    u = u / nu
    v = v / nv
    axis = np.cross(u, v)
    s = np.linalg.norm(axis)
    c = float(np.dot(u, v))
    if s < 1e-12:
        if c > 0.0:
            return np.zeros(3)
        # antipodal: rotate pi about any axis orthogonal to u
        ortho = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(ortho) < 1e-6:
            ortho = np.cross(u, [0.0, 1.0, 0.0])
        return np.pi * ortho / np.linalg.norm(ortho)
    return (np.arctan2(s, c) / s) * axis


def _detected_uv(frame, array: str, index: int):
    row = frame.array(array)[index]
    return row[:2] if row[2] > 0.0 else None


def lift_initialize(
    skel: Skeleton,
    camera: Camera,
    seq: KeypointSequence,
    frame,
    scale: float = 1.0,
) -> FitState:
    """Build a cold-start state by chaining bone-length-constrained depth lifts
    down both arm and finger chains; undetected chains stay at rest."""
    base = rest_state(skel, camera, seq)
    body_names = [skel.joint_names[j] for j in skel.body_joints]
    joints = np.array(base.body.joints)
    t = base.body.root_translation

    # Upright-torso rest positions (scaled offsets accumulated from the root).
    rest_pos = np.empty((skel.n_joints, 3))
    for i in skel.topological_order():
        p = int(skel.parent[i])
        rest_pos[i] = t if p < 0 else rest_pos[p] + scale * skel.rest_offset[i]

    # Tip-site offsets per hand array: keypoint index -> (joint, local offset).
    tip_sites = {}
    for site in skel.keypoint_map:
        if site.array in ("left_hand", "right_hand") and np.any(site.offset):
            tip_sites[(site.array, site.index)] = (site.joint, site.offset)

    hand_rows = {"left": np.zeros((15, 3)), "right": np.zeros((15, 3))}

    def aim(parent_world: np.ndarray, rest_dir: np.ndarray, world_target: np.ndarray):
        """Minimal local rotation steering a rest direction at a world target."""
        return _rot_between(rest_dir, parent_world.T @ world_target)

    for side in ("right", "left"):
        sh = skel.index_of(f"{side}_shoulder")
        el = skel.index_of(f"{side}_elbow")
        wr = skel.index_of(f"{side}_wrist")
        uv_el = _detected_uv(frame, "body", 3 if side == "right" else 6)
        uv_wr = _detected_uv(frame, "body", 4 if side == "right" else 7)
        sh_pos = rest_pos[sh]
        if uv_el is None or uv_wr is None:
            continue
        L_up = scale * float(np.linalg.norm(skel.rest_offset[el]))
        L_fore = scale * float(np.linalg.norm(skel.rest_offset[wr]))
        # Elbows stay near the body plane; wrists come toward the camera.
        el_pos = _lift_on_ray(camera, uv_el, sh_pos, L_up, "plane", sh_pos[2])
        wr_pos = _lift_on_ray(camera, uv_wr, el_pos, L_fore, "toward", el_pos[2])

        aa_sh = aim(np.eye(3), skel.rest_offset[el], el_pos - sh_pos)
        joints[body_names.index(f"{side}_shoulder")] = aa_sh
        R_sh = axis_angle_to_matrix(aa_sh)
        aa_el = aim(R_sh, skel.rest_offset[wr], wr_pos - el_pos)
        joints[body_names.index(f"{side}_elbow")] = aa_el
        R_wrist_world = R_sh @ axis_angle_to_matrix(aa_el)  # wrist joint stays at zero

        array = f"{side}_hand"
        rows = hand_rows[side]
        hand_joints = skel.left_hand_joints if side == "left" else skel.right_hand_joints
        for finger in range(5):
            chain = [hand_joints[3 * finger + seg] for seg in range(3)]
            parent_rot, parent_pos = R_wrist_world, wr_pos
            for seg in range(3):
                j = chain[seg]
                this_pos = parent_pos + parent_rot @ (scale * skel.rest_offset[j])
                # The next point along the chain constrains this joint's bend.
                if seg < 2:
                    child_off = scale * skel.rest_offset[chain[seg + 1]]
                    kp_child = 4 * finger + 2 + seg
                else:
                    tip = tip_sites.get((array, 4 * finger + 4))
                    if tip is None:
                        break
                    child_off = scale * tip[1]
                    kp_child = 4 * finger + 4
                uv = _detected_uv(frame, array, kp_child)
                if uv is None:
                    break
                child_pos = _lift_on_ray(
                    camera,
                    uv,
                    this_pos,
                    float(np.linalg.norm(child_off)),
                    "flexplane",
                    side_dir=parent_rot @ np.array([0.0, 0.0, 1.0]),
                )
                aa = aim(parent_rot, child_off, child_pos - this_pos)
                rows[3 * finger + seg] = aa
                parent_rot = parent_rot @ axis_angle_to_matrix(aa)
                parent_pos = this_pos

    return FitState(
        body=BodyPose(joints, t),
        left=HandPose(hand_rows["left"]),
        right=HandPose(hand_rows["right"]),
        camera=camera,
    )


def fit_frame(
    skel: Skeleton,
    camera: Camera,
    frame,
    cfg: ObjectiveConfig,
    prev_state: Optional[FitState] = None,
    constraint: Optional[ConstraintSpec] = None,
    rps: Optional[dict] = None,
    frame_t: float = 0.0,
    core: Optional[CoreInterval] = None,
    basis: Optional[HandBasis] = None,
    scale: float = 1.0,
    optimize_scale: bool = False,
    dominant: str = "right",
    solver: SolveOptions = SolveOptions(),
    x0_state: Optional[FitState] = None,
    polish: bool = True,
):
    """Fit one frame; x0 comes from prev_state when present, else the rest pose
    (or the explicit ``x0_state``). Returns (FitState, scale, SolveReport).

    Cold starts (no previous state) first run a warmup solve with a very wide
    robustifier, which is effectively plain least squares and immune to the
    redescending robustifier's local minima far from the optimum; the final
    solve then runs at the configured sigma.
    """

    def build(stage_cfg):
        return assemble_objective(
            skel,
            camera,
            frame,
            stage_cfg,
            constraint=constraint,
            rps=rps,
            frame_t=frame_t,
            core=core,
            prev_state=prev_state,
            basis=basis,
            fixed_scale=scale,
            optimize_scale=optimize_scale,
            dominant=dominant,
        )

    start = prev_state if prev_state is not None else x0_state
    if start is None:
        raise FitError("fit_frame needs either a previous state or an explicit start state")
    layout = ParamLayout(skel, basis=basis, optimize_scale=optimize_scale)
    x = layout.pack(start, scale=scale)

    if prev_state is None and cfg.robustifier_sigma < 1e5:
        warm_cfg = dataclasses.replace(cfg, robustifier_sigma=1e6)
        warm_obj = build(warm_cfg)
        x, _ = solve_trust_region_ncg(
            warm_obj,
            x,
            warm_obj.hessian_model,
            dataclasses.replace(solver, grad_tol=max(solver.grad_tol, 1e-4)),
        )

    # Bulk descent under the Gauss-Newton model, then a short exact-curvature
    # polish (finite-difference Hessian products) to finish off the soft
    # directions the GN model underestimates.
    obj = build(cfg)
    bulk_opts = solver if prev_state is None else dataclasses.replace(
        solver, max_iter=min(solver.max_iter, 40)
    )
    x_star, report = solve_trust_region_ncg(obj, x, obj.hessian_model, bulk_opts)
    if polish:
        polish_opts = dataclasses.replace(
            solver, max_iter=min(solver.max_iter, 12), initial_radius=0.1, f_tol=max(solver.f_tol, 1e-11)
        )
        x_star, tail = solve_trust_region_ncg(
            obj, x_star, opts=polish_opts, hessp=fd_hessian_product(obj)
        )
        tail.iterations += report.iterations
        tail.initial_value = report.initial_value
        tail.trace = report.trace + tail.trace
        report = tail
    report.term_breakdown = obj.term_values(x_star)
    state, scale_out = layout.unpack(x_star, camera)
    return state, scale_out, report


@dataclass
class PreparedSequence:
    """Everything the per-frame solve needs, computed once per sequence."""

    seq: KeypointSequence  # trimmed working sequence
    trim: tuple  # (start, end) in original frame indices
    core: CoreInterval
    camera: Camera
    scale: float
    rps: dict  # hand -> {"static": RPS|None, "transitioning": RPS|None}
    features: Optional[object] = None
    warnings: list = field(default_factory=list)
    prelim_reports: dict = field(default_factory=dict)


def prepare_sequence(
    seq: KeypointSequence,
    run: RunConfig,
    skel: Skeleton,
    basis: Optional[HandBasis] = None,
    camera: Optional[Camera] = None,
    rps_in: Optional[dict] = None,
) -> PreparedSequence:
    """Trim, initialize the camera, run preliminary candidate fits, estimate
    per-hand reference pose sequences (both modes, best effort), and fix the
    bone-scale factor at the median of per-candidate estimates."""
    warnings = []
    if run.assume_trimmed:
        start, end = 0, len(seq) - 1
    else:
        start, end = trim_sequence(seq, run.trim)
    work_frames = seq.frames[start : end + 1]
    work = KeypointSequence(
        tuple(work_frames), fps=seq.fps, image_size=seq.image_size, y_up=seq.y_up
    )
    core = core_interval(len(work))

    if camera is None:
        if run.camera_override is not None:
            f, cx, cy, depth = run.camera_override
            camera = Camera(focal=f, principal_point=(cx, cy), root_depth=depth)
        else:
            camera = init_camera(work, skel, focal=run.focal)

    # Candidate frames per hand and mode (best effort; a hand with no reliable
    # frames simply gets no RPS and only errors if a constraint needs it).
    candidates = {}
    for hand in ("left", "right"):
        entry = {}
        for mode in ("static", "transitioning"):
            try:
                entry[mode] = select_candidate_frames(work, core, mode, hand, run.candidates)
            except ValueError as exc:
                entry[mode] = None
                warnings.append(f"{hand}/{mode}: {exc}")
        candidates[hand] = entry

    if rps_in is not None:
        rps = {
            hand: {
                "static": rps_in.get(hand) if getattr(rps_in.get(hand), "mode", None) == "static" else None,
                "transitioning": rps_in.get(hand) if getattr(rps_in.get(hand), "mode", None) == "transitioning" else None,
            }
            for hand in ("left", "right")
        }
        return PreparedSequence(work, (start, end), core, camera, 1.0, rps, warnings=warnings)

    needed_frames = set()
    for hand in ("left", "right"):
        picked = candidates[hand]["static"]
        if picked:
            needed_frames.update(picked)
        pair = candidates[hand]["transitioning"]
        if pair:
            needed_frames.update(pair[0])
            needed_frames.update(pair[1])

    # Preliminary per-frame fits with all linguistic terms off and a free
    # bone-scale parameter.
    prelim = {}
    scales = []
    for t in sorted(needed_frames):
        state, s, report = fit_frame(
            skel,
            camera,
            work.frames[t],
            run.weights,
            constraint=None,
            basis=basis,
            optimize_scale=True,
            dominant=run.dominant_hand,
            solver=dataclasses.replace(run.solver, max_iter=min(run.solver.max_iter, 60), grad_tol=max(run.solver.grad_tol, 1e-5)),
            x0_state=lift_initialize(skel, camera, work, work.frames[t]),
            polish=False,
        )
        prelim[t] = (state, report)
        scales.append(s)
    scale = float(np.median(scales)) if scales else 1.0

    rps = {}
    for hand in ("left", "right"):
        entry = {"static": None, "transitioning": None}
        pose_of = lambda t: getattr(prelim[t][0], hand)
        picked = candidates[hand]["static"]
        if picked:
            entry["static"] = estimate_rps([pose_of(t) for t in picked], "static", hand)
        pair = candidates[hand]["transitioning"]
        if pair:
            entry["transitioning"] = estimate_rps(
                ([pose_of(t) for t in pair[0]], [pose_of(t) for t in pair[1]]),
                "transitioning",
                hand,
            )
        rps[hand] = entry

    return PreparedSequence(
        work,
        (start, end),
        core,
        camera,
        scale,
        rps,
        warnings=warnings,
        prelim_reports={t: r for t, (_, r) in prelim.items()},
    )


def resolve_group(
    seq: KeypointSequence,
    prepared: PreparedSequence,
    tree: Optional[DecisionTree] = None,
):
    """Classify the sequence into a sign group from the prepared RPS.

    Requires transitioning-mode RPS for both hands; raises FitError otherwise.
    """
    left = prepared.rps["left"]["transitioning"]
    right = prepared.rps["right"]["transitioning"]
    if left is None or right is None:
        raise FitError("cannot classify: missing transitioning reference poses")
    work_norm = normalize_sequence(prepared.seq)
    features = extract_features(work_norm, left, right)
    tree = tree or fallback_tree()
    return tree.predict(features), features


def _pick_rps(prepared: PreparedSequence, constraint: ConstraintSpec, dominant: str) -> dict:
    nondominant = "left" if dominant == "right" else "right"
    out = {}
    for hand, mode in (
        (dominant, constraint.dominant_invariance),
        (nondominant, constraint.nondominant_invariance),
    ):
        if mode is InvarianceMode.OFF:
            continue
        rps = prepared.rps[hand][mode.value]
        if rps is None:
            raise FitError(
                f"constraint needs a {mode.value} reference pose for the {hand} hand "
                "but none could be estimated"
            )
        out[hand] = rps
    return out


@dataclass
class SequenceFitResult:
    states: list
    reports: list
    frame_indices: list  # original sequence indices
    camera: Camera
    scale: float
    constraint: ConstraintSpec
    sign_class: Optional[SignClass]
    group: Optional[SignGroup]
    rps: dict  # hand -> RPS used (possibly empty)
    trim: tuple
    core: CoreInterval
    warnings: list
    features: Optional[object] = None


def fit_prepared(
    prepared: PreparedSequence,
    constraint: ConstraintSpec,
    run: RunConfig,
    skel: Skeleton,
    basis: Optional[HandBasis] = None,
    sign_class: Optional[SignClass] = None,
    group: Optional[SignGroup] = None,
) -> SequenceFitResult:
    """Sequential per-frame fit under a fixed constraint specification."""
    rps = _pick_rps(prepared, constraint, run.dominant_hand)
    states, reports, indices = [], [], []
    prev = None
    for t, frame in enumerate(prepared.seq.frames):
        state, _, report = fit_frame(
            skel,
            prepared.camera,
            frame,
            run.weights,
            prev_state=prev,
            constraint=constraint,
            rps=rps,
            frame_t=float(t),
            core=prepared.core,
            basis=basis,
            scale=prepared.scale,
            dominant=run.dominant_hand,
            solver=run.solver,
            x0_state=lift_initialize(skel, prepared.camera, prepared.seq, frame, prepared.scale)
            if prev is None
            else None,
        )
        states.append(state)
        reports.append(report)
        indices.append(prepared.trim[0] + t)
        prev = state
    return SequenceFitResult(
        states=states,
        reports=reports,
        frame_indices=indices,
        camera=prepared.camera,
        scale=prepared.scale,
        constraint=constraint,
        sign_class=sign_class,
        group=group,
        rps=rps,
        trim=prepared.trim,
        core=prepared.core,
        warnings=list(prepared.warnings),
    )


def fit_sequence(
    seq: KeypointSequence,
    sign_class,  # SignClass | "auto"
    run: RunConfig,
    skel: Optional[Skeleton] = None,
    basis: Optional[HandBasis] = None,
    camera: Optional[Camera] = None,
    tree: Optional[DecisionTree] = None,
    rps_in: Optional[dict] = None,
) -> SequenceFitResult:
    """Full pipeline: trim, preliminary fits, reference poses, (optional)
    sign-group classification, then the constrained sequential fit.

    ``sign_class`` may be a SignClass (classifier skipped) or "auto"; a
    classifier failure in auto mode falls back to class 0b with a warning.
    """
    if skel is None:
        skel = default_skeleton()
    prepared = prepare_sequence(seq, run, skel, basis=basis, camera=camera, rps_in=rps_in)

    features = None
    group = None
    if sign_class == "auto":
        try:
            group, features = resolve_group(seq, prepared, tree=tree)
            constraint = constraints_for_group(group)
            cls = None
        except (FitError, ValueError) as exc:
            prepared.warnings.append(
                f"classifier failed ({exc}); falling back to class 0b"
            )
            cls = SignClass.C0B
            group = group_of_class(cls)
            constraint = constraints_for_class(cls)
    else:
        cls = sign_class if isinstance(sign_class, SignClass) else SignClass.parse(sign_class)
        group = group_of_class(cls)
        constraint = constraints_for_class(cls)

    result = fit_prepared(
        prepared, constraint, run, skel, basis=basis, sign_class=cls, group=group
    )
    result.features = features
    return result


# -- pose file output -----------------------------------------------------------


def result_to_dict(result: SequenceFitResult, run: RunConfig, skel: Skeleton) -> dict:
    frames = []
    for idx, state, report in zip(result.frame_indices, result.states, result.reports):
        frames.append(
            {
                "index": idx,
                "root_translation": [float(v) for v in state.body.root_translation],
                "body_pose": [float(v) for v in state.body.joints.reshape(-1)],
                "left_hand": [float(v) for v in state.left.joints.reshape(-1)],
                "right_hand": [float(v) for v in state.right.joints.reshape(-1)],
                "objective": {
                    "total": report.final_value,
                    **{k: float(v) for k, v in report.term_breakdown.items()},
                },
                "iterations": report.iterations,
                "convergence": report.convergence_reason,
            }
        )
    cam = result.camera
    return {
        "header": {
            "format": "signfit-pose-v1",
            "skeleton_hash": skel.content_hash(),
            "camera": {
                "focal": cam.focal,
                "principal_point": list(cam.principal_point),
                "root_depth": cam.root_depth,
            },
            "config": run.to_dict(),
            "sign_class": result.sign_class.value if result.sign_class else None,
            "group": result.group.value if result.group else None,
            "constraint": {
                "symmetry": result.constraint.symmetry,
                "dominant_invariance": result.constraint.dominant_invariance.value,
                "nondominant_invariance": result.constraint.nondominant_invariance.value,
            },
            "scale": result.scale,
            "trim": list(result.trim),
            "core": [result.core.t_start, result.core.t_end, result.core.T],
            "warnings": list(result.warnings),
        },
        "frames": frames,
    }


def save_result(result: SequenceFitResult, run: RunConfig, skel: Skeleton, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_to_dict(result, run, skel), fh, indent=1, sort_keys=True)
        fh.write("\n")
