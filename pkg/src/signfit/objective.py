"""Per-frame fitting objective: robust keypoint reprojection, pose priors,
temporal and standing terms, plus the linguistic symmetry/invariance losses.

Parameter vector layout (documented contract, see :class:`ParamLayout`):

    [ root_translation(3) | body axis-angles (3 per body joint, skeleton
      order) | left hand parameters | right hand parameters | scale? ]

Hand parameters are flattened axis-angles (45 per hand) under the identity
basis, or K basis coefficients when a linear hand basis is active. The
optional trailing scale multiplies all skeleton rest offsets and is only
present during preliminary fits that estimate bone scale.

Gradients are analytic throughout. The reprojection term differentiates
forward kinematics through the SO(3) left-Jacobian identity
d(p_site)/d(aa_k) = -[p_site - p_k]_x @ W_parent(k) @ J_l(aa_k)
for every ancestor joint k of the observed site.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .keypoints import FOOT_KEYPOINTS, KeypointFrame
from .kinematics import (
    Camera,
    HandBasis,
    HandPose,
    BodyPose,
    Skeleton,
    identity_hand_basis,
)
from .linguistic import ConstraintSpec, InvarianceMode, rps_pose_at
from .rotations import batch_axis_angle_to_matrix, batch_left_jacobian, batch_skew

TERM_NAMES = (
    "reprojection",
    "body_prior",
    "hand_prior",
    "elbow_prior",
    "temporal",
    "standing",
    "symmetry",
    "invariance",
)


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights and robustifier settings for the fitting objective.

    Defaults are tuned on the synthetic suite (see the acceptance tests); every
    value is overridable through the run configuration.
    """

    lambda_body_prior: float = 0.005
    lambda_hand_prior: float = 0.01
    lambda_elbow: float = 0.2
    lambda_temporal: float = 0.5
    lambda_standing: float = 10.0
    lambda_symmetry: float = 10.0
    lambda_invariance: float = 2.0
    robustifier_sigma: float = 100.0  # pixels, pre-normalization
    keypoint_conf_floor: float = 0.2

    def __post_init__(self):
        for name in (
            "lambda_body_prior",
            "lambda_hand_prior",
            "lambda_elbow",
            "lambda_temporal",
            "lambda_standing",
            "lambda_symmetry",
            "lambda_invariance",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.robustifier_sigma > 0:
            raise ValueError("robustifier_sigma must be positive")


@dataclass(frozen=True)
class FitState:
    """Optimizable state for one frame; the camera is fixed after initialization."""

    body: BodyPose
    left: HandPose
    right: HandPose
    camera: Camera


class ParamLayout:
    """Slices of the flat parameter vector for a given skeleton and hand basis."""

    def __init__(
        self,
        skel: Skeleton,
        basis: Optional[HandBasis] = None,
        optimize_scale: bool = False,
    ):
        self.skel = skel
        self.basis = basis or identity_hand_basis()
        self.body_joints = list(skel.body_joints)
        k = self.basis.dim
        nb = len(self.body_joints)
        self.translation = slice(0, 3)
        self.body = slice(3, 3 + 3 * nb)
        self.left = slice(self.body.stop, self.body.stop + k)
        self.right = slice(self.left.stop, self.left.stop + k)
        self.scale_index = self.right.stop if optimize_scale else None
        self.n_params = self.right.stop + (1 if optimize_scale else 0)

        # Column indices into the flattened (3n,) axis-angle space.
        def aa_cols(joints):
            return np.concatenate([np.arange(3 * j, 3 * j + 3) for j in joints])

        self._aa_cols_body = aa_cols(self.body_joints)
        self._aa_cols_left = aa_cols(skel.left_hand_joints)
        self._aa_cols_right = aa_cols(skel.right_hand_joints)

    @property
    def optimize_scale(self) -> bool:
        return self.scale_index is not None

    def pose_coordinate_mask(self) -> np.ndarray:
        """True for rotation/hand-parameter coordinates (the temporal-term set)."""
        mask = np.zeros(self.n_params, dtype=bool)
        mask[self.body] = True
        mask[self.left] = True
        mask[self.right] = True
        return mask

    def pack(self, state: FitState, scale: float = 1.0) -> np.ndarray:
        x = np.zeros(self.n_params)
        x[self.translation] = state.body.root_translation
        x[self.body] = state.body.joints.reshape(-1)
        x[self.left] = self._hand_coeffs(state.left)
        x[self.right] = self._hand_coeffs(state.right)
        if self.optimize_scale:
            x[self.scale_index] = scale
        return x

    def _hand_coeffs(self, pose: HandPose) -> np.ndarray:
        if pose.basis_coeffs is not None and pose.basis_coeffs.size == self.basis.dim:
            return pose.basis_coeffs
        if self.basis.is_identity:
            return pose.flat()
        return self.basis.project(pose)

    def unpack(self, x: np.ndarray, camera: Camera):
        body = BodyPose(x[self.body].reshape(-1, 3), x[self.translation])
        left = self.basis.pose_from_coeffs(x[self.left])
        right = self.basis.pose_from_coeffs(x[self.right])
        scale = float(x[self.scale_index]) if self.optimize_scale else 1.0
        return FitState(body=body, left=left, right=right, camera=camera), scale

    def local_rotations(self, x: np.ndarray) -> np.ndarray:
        aa = np.zeros((self.skel.n_joints, 3))
        aa[self.body_joints] = x[self.body].reshape(-1, 3)
        left_flat = self.basis.mean + self.basis.matrix @ x[self.left]
        right_flat = self.basis.mean + self.basis.matrix @ x[self.right]
        aa[list(self.skel.left_hand_joints)] = left_flat.reshape(-1, 3)
        aa[list(self.skel.right_hand_joints)] = right_flat.reshape(-1, 3)
        return aa

    def map_rows(self, J_aa: np.ndarray, J_t: np.ndarray, J_s: Optional[np.ndarray]) -> np.ndarray:
        """Map rows over (flattened axis-angles, translation, scale) into rows
        over the parameter vector, chaining through the hand basis."""
        m = J_aa.shape[0]
        out = np.zeros((m, self.n_params))
        out[:, self.translation] = J_t
        out[:, self.body] = J_aa[:, self._aa_cols_body]
        if self.basis.is_identity:
            out[:, self.left] = J_aa[:, self._aa_cols_left]
            out[:, self.right] = J_aa[:, self._aa_cols_right]
        else:
            out[:, self.left] = J_aa[:, self._aa_cols_left] @ self.basis.matrix
            out[:, self.right] = J_aa[:, self._aa_cols_right] @ self.basis.matrix
        if self.optimize_scale and J_s is not None:
            out[:, self.scale_index] = J_s
        return out

    def distribute(self, d_aa: np.ndarray, d_t: np.ndarray, d_scale: float = 0.0) -> np.ndarray:
        row = self.map_rows(
            d_aa.reshape(1, -1), np.asarray(d_t).reshape(1, 3), np.array([d_scale])
        )
        return row[0]


def hand_param_target(layout: ParamLayout, pose: HandPose) -> np.ndarray:
    """Reference hand pose expressed in the active hand parameterization."""
    if layout.basis.is_identity:
        return pose.flat()
    return layout.basis.project(pose)


def geman_mcclure(sq_norm, sigma: float):
    """Redescending robustifier sigma^2 * e^2 / (e^2 + sigma^2) on a squared norm."""
    s2 = sigma * sigma
    return s2 * sq_norm / (sq_norm + s2)


def geman_mcclure_weight(sq_norm, sigma: float):
    """The factor w with d(rho)/d(residual) = w * residual."""
    s2 = sigma * sigma
    return 2.0 * s2 * s2 / ((sq_norm + s2) ** 2)


class FrameObjective:
    """Callable objective x -> (value, gradient) with a PSD Hessian model.

    The Hessian model combines a robust Gauss-Newton approximation of the
    reprojection term with exact Hessians of the quadratic terms and the
    (diagonal, positive) elbow-prior curvature, so it is PSD by construction
    and the Steihaug negative-curvature branch is a safety net only.
    """

    def __init__(
        self,
        layout: ParamLayout,
        camera: Camera,
        frame: KeypointFrame,
        cfg: ObjectiveConfig,
        symmetry_on: bool = False,
        invariance_targets: Optional[dict] = None,  # hand -> param vector
        prev_pose_coords: Optional[np.ndarray] = None,
        fixed_scale: float = 1.0,
    ):
        self.layout = layout
        self.camera = camera
        self.frame = frame
        self.cfg = cfg
        self.symmetry_on = symmetry_on
        self.invariance_targets = dict(invariance_targets or {})
        self.prev_pose_coords = (
            None if prev_pose_coords is None else np.asarray(prev_pose_coords, dtype=np.float64)
        )
        self.fixed_scale = float(fixed_scale)

        skel = layout.skel
        n = skel.n_joints
        self._n = n
        self._topo = skel.topological_order()
        self._parent = skel.parent
        self._rest_offset = np.asarray(skel.rest_offset)

        # Active observations (confidence at/above the floor).
        chains = _ancestor_chains(skel)
        sj, soff, obs, conf, chain_rows = [], [], [], [], []
        for site in skel.keypoint_map:
            row = frame.array(site.array)[site.index]
            if row[2] < cfg.keypoint_conf_floor or row[2] <= 0.0:
                continue
            sj.append(site.joint)
            soff.append(site.offset)
            obs.append(row[:2])
            conf.append(row[2])
            chain = chains[site.joint] if np.any(site.offset) else chains[site.joint][:-1]
            chain_rows.append(chain)
        self._S = len(sj)
        self._site_joint = np.asarray(sj, dtype=np.int64)
        self._site_offset = np.asarray(soff, dtype=np.float64).reshape(self._S, 3)
        self._site_has_offset = np.any(self._site_offset != 0.0, axis=1)
        self._obs = np.asarray(obs, dtype=np.float64).reshape(self._S, 2)
        self._conf = np.asarray(conf, dtype=np.float64)
        L = max((len(c) for c in chain_rows), default=1)
        self._chain_idx = np.zeros((self._S, L), dtype=np.int64)
        self._chain_valid = np.zeros((self._S, L), dtype=bool)
        for i, c in enumerate(chain_rows):
            self._chain_idx[i, : len(c)] = c
            self._chain_valid[i, : len(c)] = True

        self._feet_detected = bool(np.any(frame.body[list(FOOT_KEYPOINTS), 2] > 0.0))
        self._standing_rows = [layout.body_joints.index(j) for j in skel.standing_joints]
        self._elbow_cols = [
            (layout.body.start + 3 * layout.body_joints.index(j) + comp, sign)
            for j, comp, sign in skel.elbow_bend
        ]
        self._pose_mask = layout.pose_coordinate_mask()
        if self.prev_pose_coords is not None and self.prev_pose_coords.size != int(
            self._pose_mask.sum()
        ):
            raise ValueError("previous pose coordinate vector has the wrong length")
        self._reflect_M, self._reflect_b = layout.basis.reflection_in_coeffs(
            skel.mirror_plane_axis
        )

    # -- evaluation --------------------------------------------------------------

    def __call__(self, x: np.ndarray):
        value, grad, _ = self._evaluate(x, want_grad=True)
        return value, grad

    def value(self, x: np.ndarray) -> float:
        value, _, _ = self._evaluate(x, want_grad=False)
        return value

    def term_values(self, x: np.ndarray) -> dict:
        _, _, terms = self._evaluate(x, want_grad=False)
        return terms

    def _scale(self, x: np.ndarray) -> float:
        if self.layout.optimize_scale:
            return float(x[self.layout.scale_index])
        return self.fixed_scale

    def _fk(self, x: np.ndarray):
        scale = self._scale(x)
        aa = self.layout.local_rotations(x)
        R_loc = batch_axis_angle_to_matrix(aa)
        n = self._n
        rots = np.empty((n, 3, 3))
        pos = np.empty((n, 3))
        offs = scale * self._rest_offset
        t = x[self.layout.translation]
        for i in self._topo:
            p = self._parent[i]
            if p < 0:
                rots[i] = R_loc[i]
                pos[i] = t
            else:
                rots[i] = rots[p] @ R_loc[i]
                pos[i] = pos[p] + rots[p] @ offs[i]
        return aa, rots, pos, scale

    def _site_positions(self, rots, pos, scale):
        p = pos[self._site_joint].copy()
        if np.any(self._site_has_offset):
            idx = np.flatnonzero(self._site_has_offset)
            R = rots[self._site_joint[idx]]
            p[idx] += np.einsum("sab,sb->sa", R, scale * self._site_offset[idx])
        return p

    def _evaluate(self, x: np.ndarray, want_grad: bool):
        x = np.asarray(x, dtype=np.float64)
        lay = self.layout
        cfg = self.cfg
        terms = {name: 0.0 for name in TERM_NAMES}
        grad = np.zeros(lay.n_params) if want_grad else None

        aa, rots, pos, scale = self._fk(x)

        if self._S:
            p = self._site_positions(rots, pos, scale)
            if np.any(p[:, 2] <= 1e-9):
                return np.inf, (np.zeros(lay.n_params) if want_grad else None), terms
            uv = _project_points(self.camera, p)
            r = uv - self._obs
            sq = np.einsum("sa,sa->s", r, r)
            terms["reprojection"] = float(
                np.dot(self._conf, geman_mcclure(sq, cfg.robustifier_sigma))
            )
            if want_grad:
                w = self._conf * geman_mcclure_weight(sq, cfg.robustifier_sigma)
                g_uv = w[:, None] * r
                P = _projection_jacobians(self.camera, p)
                g_p = np.einsum("sab,sa->sb", P, g_uv)
                d_t = g_p.sum(axis=0)
                M = self._rotation_jacobians(aa, rots)
                d = p[:, None, :] - pos[self._chain_idx]  # (S, L, 3)
                crs = np.cross(d, g_p[:, None, :])
                contrib = np.einsum("slba,slb->sla", M[self._chain_idx], crs)
                d_aa = np.zeros((self._n, 3))
                np.add.at(d_aa, self._chain_idx[self._chain_valid], contrib[self._chain_valid])
                d_scale = (
                    float(np.einsum("sa,sa->", g_p, p - x[lay.translation])) / scale
                    if lay.optimize_scale
                    else 0.0
                )
                grad += lay.distribute(d_aa.reshape(-1), d_t, d_scale)

        # Body prior: L2 on body rotations excluding the root/global orientation.
        body_vec = x[lay.body][3:]
        terms["body_prior"] = cfg.lambda_body_prior * float(body_vec @ body_vec)
        if want_grad:
            grad[lay.body.start + 3 : lay.body.stop] += 2.0 * cfg.lambda_body_prior * body_vec

        # Hand prior: L2 on the hand parameters of each hand.
        for sl in (lay.left, lay.right):
            h = x[sl]
            terms["hand_prior"] += cfg.lambda_hand_prior * float(h @ h)
            if want_grad:
                grad[sl] += 2.0 * cfg.lambda_hand_prior * h

        # Elbow bending prior: exp of the signed bend component.
        for col, sign in self._elbow_cols:
            e = cfg.lambda_elbow * float(np.exp(sign * x[col]))
            terms["elbow_prior"] += e
            if want_grad:
                grad[col] += sign * e

        # Temporal zero-velocity term on pose coordinates.
        if self.prev_pose_coords is not None and cfg.lambda_temporal > 0.0:
            diff = x[self._pose_mask] - self.prev_pose_coords
            terms["temporal"] = cfg.lambda_temporal * float(diff @ diff)
            if want_grad:
                grad[self._pose_mask] += 2.0 * cfg.lambda_temporal * diff

        # Standing term: spine/below-pelvis joints pulled to the rest pose when
        # no foot keypoint is detected.
        if not self._feet_detected and self._standing_rows and cfg.lambda_standing > 0.0:
            for row in self._standing_rows:
                sl = slice(lay.body.start + 3 * row, lay.body.start + 3 * row + 3)
                v = x[sl]
                terms["standing"] += cfg.lambda_standing * float(v @ v)
                if want_grad:
                    grad[sl] += 2.0 * cfg.lambda_standing * v

        # Linguistic terms in hand parameter space.
        if self.symmetry_on and cfg.lambda_symmetry > 0.0:
            cr, cl = x[lay.right], x[lay.left]
            resid = cr - (self._reflect_M @ cl + self._reflect_b)
            terms["symmetry"] = cfg.lambda_symmetry * float(resid @ resid)
            if want_grad:
                grad[lay.right] += 2.0 * cfg.lambda_symmetry * resid
                grad[lay.left] += -2.0 * cfg.lambda_symmetry * (self._reflect_M.T @ resid)

        if cfg.lambda_invariance > 0.0:
            for hand, sl in (("left", lay.left), ("right", lay.right)):
                target = self.invariance_targets.get(hand)
                if target is None:
                    continue
                diff = x[sl] - target
                terms["invariance"] += cfg.lambda_invariance * float(diff @ diff)
                if want_grad:
                    grad[sl] += 2.0 * cfg.lambda_invariance * diff

        return sum(terms.values()), grad, terms

    def _rotation_jacobians(self, aa, rots):
        """M_k = W_parent(k) @ J_l(aa_k) per joint (identity at the root)."""
        Jl = batch_left_jacobian(aa)
        parent_rots = np.where(
            (self._parent >= 0)[:, None, None],
            rots[np.maximum(self._parent, 0)],
            np.eye(3)[None],
        )
        return parent_rots @ Jl

    # -- Hessian model ------------------------------------------------------------

    def hessian_model(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        lay = self.layout
        cfg = self.cfg
        n = lay.n_params
        H = np.zeros((n, n))

        aa, rots, pos, scale = self._fk(x)
        if self._S:
            p = self._site_positions(rots, pos, scale)
            valid = p[:, 2] > 1e-9
            uv = np.zeros((self._S, 2))
            uv[valid] = _project_points(self.camera, p[valid])
            r = uv - self._obs
            sq = np.einsum("sa,sa->s", r, r)
            w = self._conf * geman_mcclure_weight(sq, cfg.robustifier_sigma)
            w[~valid] = 0.0
            P = np.zeros((self._S, 2, 3))
            P[valid] = _projection_jacobians(self.camera, p[valid])

            M = self._rotation_jacobians(aa, rots)
            d = p[:, None, :] - pos[self._chain_idx]
            dP3d = -batch_skew(d.reshape(-1, 3)).reshape(self._S, -1, 3, 3) @ M[self._chain_idx]
            block = np.einsum("sab,slbc->slac", P, dP3d)  # (S, L, 2, 3)
            block[~self._chain_valid] = 0.0

            S, L = self._chain_idx.shape
            J_aa = np.zeros((2 * S, 3 * self._n))
            cols = (3 * self._chain_idx[:, :, None] + np.arange(3)[None, None, :]).reshape(S, -1)
            flat = block.transpose(0, 2, 1, 3).reshape(S, 2, 3 * L)
            for s in range(S):
                # duplicate chain entries cannot occur, so assignment is safe
                J_aa[2 * s, cols[s]] = flat[s, 0]
                J_aa[2 * s + 1, cols[s]] = flat[s, 1]
            J_t = P.reshape(2 * S, 3)
            if lay.optimize_scale:
                d_scale_vec = (p - x[lay.translation]) / scale
                J_s = np.einsum("sab,sb->sa", P, d_scale_vec).reshape(2 * S)
            else:
                J_s = None
            J = lay.map_rows(J_aa, J_t, J_s)
            J *= np.sqrt(np.repeat(w, 2))[:, None]
            H += J.T @ J

        diag = np.zeros(n)
        body_diag = np.zeros(lay.body.stop - lay.body.start)
        body_diag[3:] = 2.0 * cfg.lambda_body_prior
        diag[lay.body] += body_diag
        diag[lay.left] += 2.0 * cfg.lambda_hand_prior
        diag[lay.right] += 2.0 * cfg.lambda_hand_prior
        for col, sign in self._elbow_cols:
            diag[col] += cfg.lambda_elbow * float(np.exp(sign * x[col]))
        if self.prev_pose_coords is not None and cfg.lambda_temporal > 0.0:
            diag[self._pose_mask] += 2.0 * cfg.lambda_temporal
        if not self._feet_detected and cfg.lambda_standing > 0.0:
            for row in self._standing_rows:
                sl = slice(lay.body.start + 3 * row, lay.body.start + 3 * row + 3)
                diag[sl] += 2.0 * cfg.lambda_standing
        if cfg.lambda_invariance > 0.0:
            for hand, sl in (("left", lay.left), ("right", lay.right)):
                if self.invariance_targets.get(hand) is not None:
                    diag[sl] += 2.0 * cfg.lambda_invariance
        H[np.diag_indices(n)] += diag

        if self.symmetry_on and cfg.lambda_symmetry > 0.0:
            Mr = self._reflect_M
            lam = 2.0 * cfg.lambda_symmetry
            H[lay.right, lay.right] += lam * np.eye(Mr.shape[0])
            H[lay.left, lay.left] += lam * (Mr.T @ Mr)
            H[lay.right, lay.left] += -lam * Mr
            H[lay.left, lay.right] += -lam * Mr.T
        return H


def assemble_objective(
    skel: Skeleton,
    camera: Camera,
    frame: KeypointFrame,
    cfg: ObjectiveConfig,
    constraint: Optional[ConstraintSpec] = None,
    rps: Optional[dict] = None,  # hand -> ReferencePoseSequence
    frame_t: float = 0.0,
    core=None,
    prev_state: Optional[FitState] = None,
    basis: Optional[HandBasis] = None,
    fixed_scale: float = 1.0,
    optimize_scale: bool = False,
    dominant: str = "right",
) -> FrameObjective:
    """Build the full per-frame objective for a constraint specification.

    The constraint's dominant/non-dominant invariance modes are mapped onto
    physical hands via ``dominant``; an enabled invariance without an RPS for
    that hand is an error.
    """
    layout = ParamLayout(skel, basis=basis, optimize_scale=optimize_scale)
    rps = rps or {}
    symmetry_on = False
    targets = {}
    if constraint is not None:
        symmetry_on = constraint.symmetry
        nondominant = "left" if dominant == "right" else "right"
        for hand, mode in (
            (dominant, constraint.dominant_invariance),
            (nondominant, constraint.nondominant_invariance),
        ):
            if mode is InvarianceMode.OFF:
                continue
            rps_h = rps.get(hand)
            if rps_h is None:
                raise ValueError(
                    f"invariance enabled for the {hand} hand but no reference pose sequence given"
                )
            if core is None:
                raise ValueError("invariance requires the core interval for pose lookup")
            pose_t = rps_pose_at(rps_h, frame_t, core)
            targets[hand] = hand_param_target(layout, pose_t)
    prev_coords = None
    if prev_state is not None:
        prev_x = layout.pack(prev_state, scale=fixed_scale)
        prev_coords = prev_x[layout.pose_coordinate_mask()]
    return FrameObjective(
        layout,
        camera,
        frame,
        cfg,
        symmetry_on=symmetry_on,
        invariance_targets=targets,
        prev_pose_coords=prev_coords,
        fixed_scale=fixed_scale,
    )


# -- internals ---------------------------------------------------------------------


def _ancestor_chains(skel: Skeleton):
    """chains[j] = joints from the root down to j inclusive."""
    chains = {}
    for j in range(skel.n_joints):
        chain, k = [], j
        while k >= 0:
            chain.append(k)
            k = int(skel.parent[k])
        chains[j] = list(reversed(chain))
    return chains


def _project_point(cam: Camera, p: np.ndarray) -> np.ndarray:
    cx, cy = cam.principal_point
    return np.array([cam.focal * p[0] / p[2] + cx, cam.focal * p[1] / p[2] + cy])


def _project_points(cam: Camera, p: np.ndarray) -> np.ndarray:
    cx, cy = cam.principal_point
    out = np.empty((p.shape[0], 2))
    out[:, 0] = cam.focal * p[:, 0] / p[:, 2] + cx
    out[:, 1] = cam.focal * p[:, 1] / p[:, 2] + cy
    return out


def _projection_jacobians(cam: Camera, p: np.ndarray) -> np.ndarray:
    f = cam.focal
    z = p[:, 2]
    out = np.zeros((p.shape[0], 2, 3))
    out[:, 0, 0] = f / z
    out[:, 1, 1] = f / z
    out[:, 0, 2] = -f * p[:, 0] / (z * z)
    out[:, 1, 2] = -f * p[:, 1] / (z * z)
    return out
