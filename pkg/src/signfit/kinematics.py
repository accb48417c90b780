"""Articulated skeleton, forward kinematics, pose types, and camera projection.

Coordinate conventions
----------------------
The camera frame doubles as the world frame: x points right in the image,
y points down (image convention), z is depth away from the camera. A signer
facing the camera therefore has "up" along -y and their right side toward -x,
so the sagittal mirror plane is x = 0 and reflecting a rotation across it
negates axis-angle components 1 and 2 (see :func:`reflect_axis_angle`).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .rotations import (
    axis_angle_to_matrix,
    canonicalize_axis_angle,
    mean_axis_angle,
    slerp_axis_angle,
)

HAND_JOINT_COUNT = 15  # 3 joints per finger, thumb..pinky
DEFAULT_MIRROR_COMPONENTS = (1, 2)

KEYPOINT_ARRAYS = ("body", "left_hand", "right_hand")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class JointRotation:
    """A single joint rotation as an axis-angle 3-vector (radians * unit axis)."""

    axis_angle: np.ndarray

    def __post_init__(self):
        v = _readonly(np.asarray(self.axis_angle, dtype=np.float64).reshape(3))
        if not np.all(np.isfinite(v)):
            raise ValueError("axis-angle components must be finite")
        object.__setattr__(self, "axis_angle", v)

    def canonical(self) -> "JointRotation":
        return JointRotation(canonicalize_axis_angle(self.axis_angle))


@dataclass(frozen=True)
class HandPose:
    """Finger articulation of one hand: 15 axis-angle joint rotations.

    ``basis_coeffs`` is present when the pose was produced through a linear
    hand basis; then ``joints == basis.mean + basis.matrix @ basis_coeffs``.
    """

    joints: np.ndarray  # (15, 3)
    basis_coeffs: Optional[np.ndarray] = None

    def __post_init__(self):
        j = np.asarray(self.joints, dtype=np.float64)
        if j.shape != (HAND_JOINT_COUNT, 3):
            raise ValueError(f"hand pose must have shape (15, 3), got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("hand pose contains non-finite values")
        object.__setattr__(self, "joints", _readonly(j))
        if self.basis_coeffs is not None:
            c = _readonly(np.asarray(self.basis_coeffs, dtype=np.float64).reshape(-1))
            object.__setattr__(self, "basis_coeffs", c)

    @staticmethod
    def zero() -> "HandPose":
        return HandPose(np.zeros((HAND_JOINT_COUNT, 3)))

    @staticmethod
    def from_flat(flat: np.ndarray) -> "HandPose":
        return HandPose(np.asarray(flat, dtype=np.float64).reshape(HAND_JOINT_COUNT, 3))

    def flat(self) -> np.ndarray:
        return self.joints.reshape(-1).copy()

    def joint(self, i: int) -> JointRotation:
        return JointRotation(self.joints[i])

    def canonical(self) -> "HandPose":
        rows = [canonicalize_axis_angle(r) for r in self.joints]
        return HandPose(np.stack(rows), basis_coeffs=self.basis_coeffs)


@dataclass(frozen=True)
class BodyPose:
    """Body-chain joint rotations (row 0 is the root/global orientation) plus
    root translation in meters."""

    joints: np.ndarray  # (n_body, 3)
    root_translation: np.ndarray  # (3,)

    def __post_init__(self):
        j = np.asarray(self.joints, dtype=np.float64)
        if j.ndim != 2 or j.shape[1] != 3:
            raise ValueError("body pose joints must have shape (n, 3)")
        t = np.asarray(self.root_translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(j)) and np.all(np.isfinite(t))):
            raise ValueError("body pose contains non-finite values")
        object.__setattr__(self, "joints", _readonly(j))
        object.__setattr__(self, "root_translation", _readonly(t))

    @staticmethod
    def zero(n_joints: int, depth: float = 0.0) -> "BodyPose":
        return BodyPose(np.zeros((n_joints, 3)), np.array([0.0, 0.0, depth]))


@dataclass(frozen=True)
class KeypointSite:
    """Maps a skeleton location to one observed 2D keypoint.

    The observed point corresponds to the joint position plus ``offset``
    expressed in the joint's local frame (zero offset for the joint itself;
    nonzero for attachment sites such as fingertips or the nose).
    """

    joint: int
    array: str  # "body" | "left_hand" | "right_hand"
    index: int
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.array not in KEYPOINT_ARRAYS:
            raise ValueError(f"unknown keypoint array {self.array!r}")
        object.__setattr__(self, "offset", _readonly(np.asarray(self.offset, dtype=np.float64).reshape(3)))


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree with rest offsets (meters) and keypoint attachments."""

    joint_names: tuple
    parent: np.ndarray  # (n,) int, -1 for the root
    rest_offset: np.ndarray  # (n, 3)
    mirror_map: np.ndarray  # (n,) int, involutive permutation
    mirror_plane_axis: tuple = DEFAULT_MIRROR_COMPONENTS
    keypoint_map: tuple = ()
    left_hand_joints: tuple = ()
    right_hand_joints: tuple = ()
    standing_joints: tuple = ()
    elbow_bend: tuple = ()  # (joint index, component, sign) triples

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64)
        n = len(self.joint_names)
        if parent.shape != (n,):
            raise ValueError("parent array length must match joint_names")
        roots = np.flatnonzero(parent < 0)
        if len(roots) != 1:
            raise ValueError(f"skeleton must have exactly one root, found {len(roots)}")
        for i, p in enumerate(parent):
            if p >= 0:
                # walk up; a cycle would revisit i
                seen, k = {i}, int(p)
                while k >= 0:
                    if k in seen:
                        raise ValueError(f"parent pointers contain a cycle at joint {i}")
                    seen.add(k)
                    k = int(parent[k])
        mirror = np.asarray(self.mirror_map, dtype=np.int64)
        if mirror.shape != (n,) or not np.array_equal(mirror[mirror], np.arange(n)):
            raise ValueError("mirror_map must be an involutive permutation")
        offs = np.asarray(self.rest_offset, dtype=np.float64)
        if offs.shape != (n, 3):
            raise ValueError("rest_offset must have shape (n, 3)")
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "rest_offset", _readonly(offs))
        object.__setattr__(self, "mirror_map", mirror)
        object.__setattr__(self, "keypoint_map", tuple(self.keypoint_map))
        object.__setattr__(self, "left_hand_joints", tuple(self.left_hand_joints))
        object.__setattr__(self, "right_hand_joints", tuple(self.right_hand_joints))
        object.__setattr__(self, "standing_joints", tuple(self.standing_joints))
        object.__setattr__(self, "elbow_bend", tuple(tuple(e) for e in self.elbow_bend))
        self.parent.setflags(write=False)
        self.mirror_map.setflags(write=False)

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent < 0)[0])

    @property
    def body_joints(self) -> tuple:
        """Indices of non-finger joints, in skeleton order. Row order of BodyPose."""
        hands = set(self.left_hand_joints) | set(self.right_hand_joints)
        return tuple(i for i in range(self.n_joints) if i not in hands)

    def index_of(self, name: str) -> int:
        return self.joint_names.index(name)

    def topological_order(self) -> np.ndarray:
        order, placed = [], np.zeros(self.n_joints, dtype=bool)
        pending = list(range(self.n_joints))
        while pending:
            rest = []
            for i in pending:
                p = int(self.parent[i])
                if p < 0 or placed[p]:
                    order.append(i)
                    placed[i] = True
                else:
                    rest.append(i)
            pending = rest
        return np.asarray(order)

    def content_hash(self) -> str:
        blob = json.dumps(skeleton_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_scale(self, scale: float) -> "Skeleton":
        return replace(self, rest_offset=self.rest_offset * float(scale))


def local_rotations(skel: Skeleton, body: BodyPose, left: HandPose, right: HandPose) -> np.ndarray:
    """Assemble the per-joint local axis-angle array from the three pose objects."""
    body_idx = skel.body_joints
    if body.joints.shape[0] != len(body_idx):
        raise ValueError(
            f"body pose has {body.joints.shape[0]} joints, skeleton defines {len(body_idx)}"
        )
    aa = np.zeros((skel.n_joints, 3))
    aa[list(body_idx)] = body.joints
    aa[list(skel.left_hand_joints)] = left.joints
    aa[list(skel.right_hand_joints)] = right.joints
    return aa


def fk_transforms(skel: Skeleton, aa: np.ndarray, root_translation: np.ndarray):
    """Per-joint world rotations (n,3,3) and positions (n,3).

    The root sits at ``root_translation``; child positions accumulate
    parent-rotated rest offsets.
    """
    n = skel.n_joints
    rots = np.empty((n, 3, 3))
    pos = np.empty((n, 3))
    for i in skel.topological_order():
        R = axis_angle_to_matrix(aa[i])
        p = int(skel.parent[i])
        if p < 0:
            rots[i] = R
            pos[i] = root_translation
        else:
            rots[i] = rots[p] @ R
            pos[i] = pos[p] + rots[p] @ skel.rest_offset[i]
    return rots, pos


def forward_kinematics(
    skel: Skeleton, body: BodyPose, left: HandPose, right: HandPose
) -> np.ndarray:
    """World-space joint positions (n, 3) in meters."""
    aa = local_rotations(skel, body, left, right)
    _, pos = fk_transforms(skel, aa, body.root_translation)
    return pos


def site_position(rots: np.ndarray, pos: np.ndarray, site: KeypointSite) -> np.ndarray:
    if not np.any(site.offset):
        return pos[site.joint]
    return pos[site.joint] + rots[site.joint] @ site.offset


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; ``root_depth`` is the initialization depth of the body root."""

    focal: float
    principal_point: tuple
    root_depth: float

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError("focal length must be positive")
        if not self.root_depth > 0:
            raise ValueError("root depth must be positive")
        object.__setattr__(self, "principal_point", (float(self.principal_point[0]), float(self.principal_point[1])))


def project(cam: Camera, points3d: np.ndarray) -> np.ndarray:
    """Pinhole projection of (N, 3) camera-frame points (meters) to pixels."""
    pts = np.atleast_2d(np.asarray(points3d, dtype=np.float64))
    z = pts[:, 2]
    bad = np.flatnonzero(z <= 0.0)
    if bad.size:
        raise ValueError(f"point {int(bad[0])} has non-positive depth {z[bad[0]]:.6g}")
    cx, cy = cam.principal_point
    uv = np.empty((pts.shape[0], 2))
    uv[:, 0] = cam.focal * pts[:, 0] / z + cx
    uv[:, 1] = cam.focal * pts[:, 1] / z + cy
    return uv


def slerp_pose(pose_i: HandPose, pose_f: HandPose, t: float) -> HandPose:
    """Per-joint shortest-arc SLERP between two hand poses; t must be in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter must be in [0, 1], got {t}")
    if t == 0.0:
        return pose_i
    if t == 1.0:
        return pose_f
    rows = [slerp_axis_angle(a, b, t) for a, b in zip(pose_i.joints, pose_f.joints)]
    return HandPose(np.stack(rows))


def reflect_axis_angle(vectors: np.ndarray, components: Sequence[int] = DEFAULT_MIRROR_COMPONENTS) -> np.ndarray:
    """Mirror axis-angle rows across the sagittal plane by negating the given
    components. Linear, involutive, and bit-exact (IEEE negation)."""
    out = np.array(vectors, dtype=np.float64)
    out[..., list(components)] *= -1.0
    return out


def reflect_hand_pose(
    pose: HandPose,
    components: Sequence[int] = DEFAULT_MIRROR_COMPONENTS,
    joint_perm: Optional[Sequence[int]] = None,
) -> HandPose:
    """Mirror a hand pose into the opposite hand's frame.

    The default convention (negate components 1 and 2, identity joint order)
    matches skeletons whose two hands use x-mirrored rest offsets and the same
    finger ordering, as the shipped skeleton does.
    """
    joints = reflect_axis_angle(pose.joints, components)
    if joint_perm is not None:
        joints = joints[list(joint_perm)]
    return HandPose(joints)


def mean_pose(poses: Sequence[HandPose]) -> HandPose:
    """Per-joint chordal quaternion mean of hand poses, canonical axis-angle out."""
    poses = list(poses)
    if not poses:
        raise ValueError("cannot average an empty list of hand poses")
    rows = []
    for j in range(HAND_JOINT_COUNT):
        rows.append(mean_axis_angle(np.stack([p.joints[j] for p in poses])))
    return HandPose(np.stack(rows))


def cos_dist(a: HandPose, b: HandPose) -> float:
    """Cosine distance in [0, 2] between flattened canonical axis-angle vectors.

    Both vectors zero -> 0; exactly one zero -> 1 (direction undefined, treated
    as orthogonal).
    """
    va = a.canonical().flat()
    vb = b.canonical().flat()
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 and nb == 0.0:
        return 0.0
    if na == 0.0 or nb == 0.0:
        return 1.0
    c = float(np.dot(va, vb) / (na * nb))
    return 1.0 - max(-1.0, min(1.0, c))


@dataclass(frozen=True)
class HandBasis:
    """Linear hand-pose basis: flattened joints = mean + matrix @ coeffs.

    The identity basis (mean 0, matrix I) makes coefficients equal to the
    axis-angle components, which is the default parameterization.
    """

    mean: np.ndarray  # (45,)
    matrix: np.ndarray  # (45, K)

    def __post_init__(self):
        m = _readonly(np.asarray(self.mean, dtype=np.float64).reshape(-1))
        B = _readonly(np.atleast_2d(np.asarray(self.matrix, dtype=np.float64)))
        if m.shape[0] != HAND_JOINT_COUNT * 3 or B.shape[0] != HAND_JOINT_COUNT * 3:
            raise ValueError("hand basis must live in the 45-dim flattened pose space")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "matrix", B)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_identity(self) -> bool:
        return self.dim == HAND_JOINT_COUNT * 3 and not np.any(self.mean) and np.array_equal(
            self.matrix, np.eye(HAND_JOINT_COUNT * 3)
        )

    def pose_from_coeffs(self, coeffs: np.ndarray) -> HandPose:
        c = np.asarray(coeffs, dtype=np.float64).reshape(self.dim)
        flat = self.mean + self.matrix @ c
        return HandPose(flat.reshape(HAND_JOINT_COUNT, 3), basis_coeffs=c)

    def project(self, pose: HandPose) -> np.ndarray:
        """Least-squares coefficients reproducing the pose (exact for identity)."""
        flat = pose.flat() - self.mean
        coeffs, *_ = np.linalg.lstsq(self.matrix, flat, rcond=None)
        return coeffs

    def reflection_in_coeffs(self, components: Sequence[int] = DEFAULT_MIRROR_COMPONENTS):
        """Affine map (M, b) such that coeffs of a reflected pose ~= M @ c + b.

        Exact whenever the mirrored basis span equals the original span; for the
        identity basis this reduces to the component sign flips.
        """
        sign = np.ones(HAND_JOINT_COUNT * 3)
        sign.reshape(HAND_JOINT_COUNT, 3)[:, list(components)] = -1.0
        S = np.diag(sign)
        pinv = np.linalg.pinv(self.matrix)
        M = pinv @ S @ self.matrix
        b = pinv @ (S @ self.mean - self.mean)
        return M, b


def identity_hand_basis() -> HandBasis:
    return HandBasis(np.zeros(HAND_JOINT_COUNT * 3), np.eye(HAND_JOINT_COUNT * 3))


def load_hand_basis(path) -> HandBasis:
    """Read a hand basis file: JSON with "mean" (45 numbers) and "basis" (K rows of 45)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    mean = np.asarray(raw["mean"], dtype=np.float64)
    rows = np.asarray(raw["basis"], dtype=np.float64)
    return HandBasis(mean, rows.T)


def anatomical_hand_basis() -> HandBasis:
    """The shipped 20-coefficient anatomical basis (hinged outer finger joints)."""
    ref = resources.files("signfit").joinpath("data/anatomical_hand_basis.json")
    with ref.open("r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return HandBasis(np.asarray(raw["mean"]), np.asarray(raw["basis"]).T)


# -- skeleton (de)serialization ------------------------------------------------

def skeleton_to_dict(skel: Skeleton) -> dict:
    names = skel.joint_names
    return {
        "joints": [
            {
                "name": names[i],
                "parent": None if skel.parent[i] < 0 else names[int(skel.parent[i])],
                "offset": [float(v) for v in skel.rest_offset[i]],
            }
            for i in range(skel.n_joints)
        ],
        "mirror_pairs": sorted(
            [names[i], names[int(skel.mirror_map[i])]]
            for i in range(skel.n_joints)
            if int(skel.mirror_map[i]) > i
        ),
        "mirror_plane_axis": list(skel.mirror_plane_axis),
        "left_hand_joints": [names[i] for i in skel.left_hand_joints],
        "right_hand_joints": [names[i] for i in skel.right_hand_joints],
        "standing_joints": [names[i] for i in skel.standing_joints],
        "elbow_bend": [
            {"joint": names[j], "component": int(c), "sign": float(s)}
            for j, c, s in skel.elbow_bend
        ],
        "keypoint_map": [
            {
                "joint": names[site.joint],
                "array": site.array,
                "index": site.index,
                "offset": [float(v) for v in site.offset],
            }
            for site in skel.keypoint_map
        ],
    }


def skeleton_from_dict(raw: dict) -> Skeleton:
    joints = raw["joints"]
    names = [j["name"] for j in joints]
    if len(set(names)) != len(names):
        raise ValueError("duplicate joint names in skeleton definition")
    idx = {n: i for i, n in enumerate(names)}
    parent = np.array(
        [-1 if j["parent"] is None else idx[j["parent"]] for j in joints], dtype=np.int64
    )
    offsets = np.array([j["offset"] for j in joints], dtype=np.float64)
    mirror = np.arange(len(names))
    for a, b in raw.get("mirror_pairs", []):
        mirror[idx[a]], mirror[idx[b]] = idx[b], idx[a]
    sites = tuple(
        KeypointSite(
            joint=idx[s["joint"]],
            array=s["array"],
            index=int(s["index"]),
            offset=np.asarray(s.get("offset", [0.0, 0.0, 0.0]), dtype=np.float64),
        )
        for s in raw.get("keypoint_map", [])
    )
    return Skeleton(
        joint_names=tuple(names),
        parent=parent,
        rest_offset=offsets,
        mirror_map=mirror,
        mirror_plane_axis=tuple(raw.get("mirror_plane_axis", DEFAULT_MIRROR_COMPONENTS)),
        keypoint_map=sites,
        left_hand_joints=tuple(idx[n] for n in raw.get("left_hand_joints", [])),
        right_hand_joints=tuple(idx[n] for n in raw.get("right_hand_joints", [])),
        standing_joints=tuple(idx[n] for n in raw.get("standing_joints", [])),
        elbow_bend=tuple(
            (idx[e["joint"]], int(e["component"]), float(e["sign"]))
            for e in raw.get("elbow_bend", [])
        ),
    )


def load_skeleton(path) -> Skeleton:
    with open(path, "r", encoding="utf-8") as fh:
        return skeleton_from_dict(json.load(fh))


def save_skeleton(skel: Skeleton, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(skeleton_to_dict(skel), fh, indent=1, sort_keys=True)
        fh.write("\n")


def default_skeleton() -> Skeleton:
    """The upper-body-plus-hands skeleton shipped with the package (41 joints)."""
    ref = resources.files("signfit").joinpath("data/default_skeleton.json")
    with ref.open("r", encoding="utf-8") as fh:
        return skeleton_from_dict(json.load(fh))
