"""Regenerate src/signfit/data/default_skeleton.json.

Run from the repo root: python tools/gen_default_skeleton.py
"""

import json
import os

FINGERS = ("thumb", "index", "middle", "ring", "pinky")

# Right-hand finger geometry (meters), in the wrist's local frame with the arm
# extended along -x; x components are negated for the left hand. Each finger is
# (base offset from wrist, proximal offset, distal offset, tip-site offset).
FINGER_GEOMETRY = {
    "thumb": ((-0.030, 0.028, 0.0), (-0.035, 0.008, 0.0), (-0.030, 0.006, 0.0), (-0.025, 0.004, 0.0)),
    "index": ((-0.090, 0.0, -0.025), (-0.040, 0.0, 0.0), (-0.025, 0.0, 0.0), (-0.022, 0.0, 0.0)),
    "middle": ((-0.095, 0.0, 0.0), (-0.045, 0.0, 0.0), (-0.028, 0.0, 0.0), (-0.025, 0.0, 0.0)),
    "ring": ((-0.090, 0.0, 0.022), (-0.040, 0.0, 0.0), (-0.026, 0.0, 0.0), (-0.023, 0.0, 0.0)),
    "pinky": ((-0.082, 0.0, 0.042), (-0.032, 0.0, 0.0), (-0.022, 0.0, 0.0), (-0.020, 0.0, 0.0)),
}

# OpenPose-style 21-point hand array: wrist, then 4 points per finger
# (base, proximal, distal, tip) in thumb..pinky order.
HAND_KP_BASE = {"thumb": 1, "index": 5, "middle": 9, "ring": 13, "pinky": 17}


def mirror_x(v):
    return [-v[0], v[1], v[2]]


def build():
    joints = [
        {"name": "pelvis", "parent": None, "offset": [0.0, 0.0, 0.0]},
        {"name": "spine_lower", "parent": "pelvis", "offset": [0.0, -0.15, 0.0]},
        {"name": "spine_upper", "parent": "spine_lower", "offset": [0.0, -0.175, 0.0]},
        {"name": "neck", "parent": "spine_upper", "offset": [0.0, -0.175, 0.0]},
        {"name": "head", "parent": "neck", "offset": [0.0, -0.12, 0.0]},
        {"name": "right_shoulder", "parent": "neck", "offset": [-0.18, 0.02, 0.0]},
        {"name": "right_elbow", "parent": "right_shoulder", "offset": [-0.26, 0.0, 0.0]},
        {"name": "right_wrist", "parent": "right_elbow", "offset": [-0.25, 0.0, 0.0]},
        {"name": "left_shoulder", "parent": "neck", "offset": [0.18, 0.02, 0.0]},
        {"name": "left_elbow", "parent": "left_shoulder", "offset": [0.26, 0.0, 0.0]},
        {"name": "left_wrist", "parent": "left_elbow", "offset": [0.25, 0.0, 0.0]},
    ]
    keypoint_map = [
        {"joint": "pelvis", "array": "body", "index": 8},
        {"joint": "neck", "array": "body", "index": 1},
        {"joint": "head", "array": "body", "index": 0, "offset": [0.0, -0.04, -0.10]},
        {"joint": "right_shoulder", "array": "body", "index": 2},
        {"joint": "right_elbow", "array": "body", "index": 3},
        {"joint": "right_wrist", "array": "body", "index": 4},
        {"joint": "left_shoulder", "array": "body", "index": 5},
        {"joint": "left_elbow", "array": "body", "index": 6},
        {"joint": "left_wrist", "array": "body", "index": 7},
        {"joint": "right_wrist", "array": "right_hand", "index": 0},
        {"joint": "left_wrist", "array": "left_hand", "index": 0},
    ]

    hand_joint_lists = {"right": [], "left": []}
    mirror_pairs = [
        ["right_shoulder", "left_shoulder"],
        ["right_elbow", "left_elbow"],
        ["right_wrist", "left_wrist"],
    ]

    for side, array in (("right", "right_hand"), ("left", "left_hand")):
        wrist = f"{side}_wrist"
        for finger in FINGERS:
            base, prox, dist, tip = FINGER_GEOMETRY[finger]
            if side == "left":
                base, prox, dist, tip = map(mirror_x, (base, prox, dist, tip))
            chain = [f"{side}_{finger}{k}" for k in (1, 2, 3)]
            joints.append({"name": chain[0], "parent": wrist, "offset": list(base)})
            joints.append({"name": chain[1], "parent": chain[0], "offset": list(prox)})
            joints.append({"name": chain[2], "parent": chain[1], "offset": list(dist)})
            hand_joint_lists[side].extend(chain)
            kp = HAND_KP_BASE[finger]
            for k, name in enumerate(chain):
                keypoint_map.append({"joint": name, "array": array, "index": kp + k})
            keypoint_map.append(
                {"joint": chain[2], "array": array, "index": kp + 3, "offset": list(tip)}
            )

    for finger in FINGERS:
        for k in (1, 2, 3):
            mirror_pairs.append([f"right_{finger}{k}", f"left_{finger}{k}"])

    return {
        "joints": joints,
        "mirror_pairs": mirror_pairs,
        "mirror_plane_axis": [1, 2],
        "left_hand_joints": hand_joint_lists["left"],
        "right_hand_joints": hand_joint_lists["right"],
        "standing_joints": ["spine_lower", "spine_upper"],
        "elbow_bend": [
            {"joint": "right_elbow", "component": 1, "sign": 1.0},
            {"joint": "left_elbow", "component": 1, "sign": -1.0},
        ],
        "keypoint_map": keypoint_map,
    }


if __name__ == "__main__":
    out = os.path.join(os.path.dirname(__file__), "..", "src", "signfit", "data", "default_skeleton.json")
    os.makedirs(os.path.dirname(out), exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(build(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {os.path.normpath(out)}: {len(build()['joints'])} joints")
