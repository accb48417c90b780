"""Sign-group classification: three handedness-invariant features and a small
CART decision tree (Gini impurity, midpoint thresholds, deterministic ties).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .keypoints import KeypointSequence, wrist_track
from .kinematics import cos_dist, reflect_hand_pose
from .linguistic import ReferencePoseSequence, SignGroup

FEATURE_NAMES = ("f1_min_wrist_range", "f2_init_pose_dist", "f3_max_pose_change")


@dataclass(frozen=True)
class FeatureVector:
    """The three sign-group features.

    f1: min over hands of the wrist height range across the sequence
        (normalized torso units, up-positive).
    f2: cosine distance between the two hands' initial reference poses, the
        left pose reflected into the right-hand frame first.
    f3: max over hands of the cosine distance between initial and final
        reference poses.
    """

    f1_min_wrist_range: float
    f2_init_pose_dist: float
    f3_max_pose_change: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.f1_min_wrist_range, self.f2_init_pose_dist, self.f3_max_pose_change]
        )

    def feature(self, index: int) -> float:
        """1-based feature access matching the published feature numbering."""
        return float(self.as_array()[index - 1])


def _wrist_height_range(seq: KeypointSequence, hand: str) -> float:
    track = wrist_track(seq, hand)
    heights = track[track[:, 2] > 0.0, 1]
    if heights.size == 0:
        raise ValueError(f"{hand} wrist never detected; cannot compute height range")
    return float(heights.max() - heights.min())


def extract_features(
    seq: KeypointSequence,
    rps_left: ReferencePoseSequence,
    rps_right: ReferencePoseSequence,
) -> FeatureVector:
    """Compute the feature vector from a normalized sequence and per-hand
    transitioning-mode reference pose sequences."""
    if not seq.y_up:
        raise ValueError("features require a normalized sequence (up-positive heights)")
    for rps, hand in ((rps_left, "left"), (rps_right, "right")):
        if rps.mode != "transitioning":
            raise ValueError(f"{hand} RPS must be transitioning-mode for feature extraction")
    f1 = min(_wrist_height_range(seq, "left"), _wrist_height_range(seq, "right"))
    f2 = cos_dist(rps_right.pose_initial, reflect_hand_pose(rps_left.pose_initial))
    f3 = max(
        cos_dist(rps_right.pose_initial, rps_right.pose_final),
        cos_dist(rps_left.pose_initial, rps_left.pose_final),
    )
    return FeatureVector(f1, f2, f3)


# -- decision tree ----------------------------------------------------------------


@dataclass
class TreeNode:
    feature: Optional[int] = None  # 1-based feature index; None for leaves
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    label: Optional[SignGroup] = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


@dataclass
class DecisionTree:
    root: TreeNode
    depth: int = 0
    impurity: str = "gini"

    def predict(self, f: FeatureVector) -> SignGroup:
        node = self.root
        while not node.is_leaf:
            node = node.left if f.feature(node.feature) <= node.threshold else node.right
        return node.label


@dataclass(frozen=True)
class TreeParams:
    max_depth: Optional[int] = 4
    min_leaf: int = 2  # smallest node that may still be split


_GROUP_ORDER = list(SignGroup)


def _gini(labels) -> float:
    n = len(labels)
    if n == 0:
        return 0.0
    counts = {}
    for g in labels:
        counts[g] = counts.get(g, 0) + 1
    return 1.0 - sum((c / n) ** 2 for c in counts.values())


def _majority(labels) -> SignGroup:
    counts = {}
    for g in labels:
        counts[g] = counts.get(g, 0) + 1
    best = max(counts.values())
    for g in _GROUP_ORDER:  # enumeration order breaks ties
        if counts.get(g) == best:
            return g
    raise AssertionError("unreachable")


def _best_split(X: np.ndarray, y):
    """Lowest-weighted-Gini split; ties resolved by scanning features then
    thresholds in ascending order and keeping the first strict improvement."""
    n = len(y)
    best = None  # (score, feature_index_1based, threshold)
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        for a, b in zip(values, values[1:]):
            thr = 0.5 * (a + b)
            mask = X[:, f] <= thr
            yl = [y[i] for i in range(n) if mask[i]]
            yr = [y[i] for i in range(n) if not mask[i]]
            score = (len(yl) * _gini(yl) + len(yr) * _gini(yr)) / n
            if best is None or score < best[0] - 1e-15:
                best = (score, f + 1, thr)
    return best


def fit_tree(dataset: Sequence, params: TreeParams = TreeParams()) -> DecisionTree:
    """CART fit on (FeatureVector, SignGroup) pairs. Deterministic: identical
    datasets always produce identical trees."""
    dataset = list(dataset)
    if not dataset:
        raise ValueError("cannot fit a decision tree on an empty dataset")
    X = np.stack([fv.as_array() for fv, _ in dataset])
    y = [g for _, g in dataset]

    max_depth_reached = 0

    def grow(idx, depth) -> TreeNode:
        nonlocal max_depth_reached
        max_depth_reached = max(max_depth_reached, depth)
        labels = [y[i] for i in idx]
        if (
            _gini(labels) == 0.0
            or len(idx) < params.min_leaf
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            return TreeNode(label=_majority(labels))
        # Impure nodes split whenever any candidate threshold exists (splits
        # strictly shrink both sides, so recursion terminates); identical
        # feature rows with conflicting labels fall through to a majority leaf.
        split = _best_split(X[idx], labels)
        if split is None:
            return TreeNode(label=_majority(labels))
        _, feat, thr = split
        mask = X[idx, feat - 1] <= thr
        left_idx = [i for i, m in zip(idx, mask) if m]
        right_idx = [i for i, m in zip(idx, mask) if not m]
        return TreeNode(
            feature=feat,
            threshold=thr,
            left=grow(left_idx, depth + 1),
            right=grow(right_idx, depth + 1),
        )

    root = grow(list(range(len(dataset))), 0)
    return DecisionTree(root=root, depth=max_depth_reached)


def predict(tree: DecisionTree, f: FeatureVector) -> SignGroup:
    return tree.predict(f)


# -- (de)serialization ---------------------------------------------------------


class TreeFormatError(ValueError):
    pass


def _collect_nodes(root: TreeNode):
    nodes, order = {}, []

    def visit(node) -> int:
        nid = len(order)
        order.append(node)
        nodes[id(node)] = nid
        if not node.is_leaf:
            visit(node.left)
            visit(node.right)
        return nid

    visit(root)
    return order, nodes


def tree_to_dict(tree: DecisionTree) -> dict:
    order, ids = _collect_nodes(tree.root)
    rows = []
    for node in order:
        nid = ids[id(node)]
        if node.is_leaf:
            rows.append({"id": nid, "leaf": node.label.value})
        else:
            rows.append(
                {
                    "id": nid,
                    "feature": node.feature,
                    "threshold": node.threshold,
                    "left": ids[id(node.left)],
                    "right": ids[id(node.right)],
                }
            )
    return {"impurity": tree.impurity, "depth": tree.depth, "nodes": rows}


def tree_from_dict(raw: dict) -> DecisionTree:
    rows = raw.get("nodes")
    if not rows:
        raise TreeFormatError("tree file defines no nodes")
    by_id = {}
    for row in rows:
        if "id" not in row:
            raise TreeFormatError(f"node without id: {row!r}")
        by_id[int(row["id"])] = row
    if 0 not in by_id:
        raise TreeFormatError("tree file has no root node (id 0)")

    def build(nid: int, seen) -> TreeNode:
        if nid in seen:
            raise TreeFormatError(f"node {nid} is reachable through a cycle")
        if nid not in by_id:
            raise TreeFormatError(f"node {nid} is referenced but not defined")
        seen = seen | {nid}
        row = by_id[nid]
        if "leaf" in row:
            try:
                return TreeNode(label=SignGroup.parse(row["leaf"]))
            except ValueError as exc:
                raise TreeFormatError(f"node {nid}: {exc}") from exc
        for key in ("feature", "threshold", "left", "right"):
            if key not in row:
                raise TreeFormatError(f"node {nid} is missing field {key!r}")
        feat = int(row["feature"])
        if feat not in (1, 2, 3):
            raise TreeFormatError(f"node {nid}: feature index {feat} outside 1..3")
        thr = float(row["threshold"])
        if not np.isfinite(thr):
            raise TreeFormatError(f"node {nid}: threshold is not finite")
        return TreeNode(
            feature=feat,
            threshold=thr,
            left=build(int(row["left"]), seen),
            right=build(int(row["right"]), seen),
        )

    root = build(0, frozenset())
    return DecisionTree(root=root, depth=int(raw.get("depth", 0)), impurity=raw.get("impurity", "gini"))


def save_tree(tree: DecisionTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tree_to_dict(tree), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_tree(path) -> DecisionTree:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TreeFormatError(f"{path}: invalid tree file: {exc}") from exc
    return tree_from_dict(raw)


def fallback_tree() -> DecisionTree:
    """The shipped hand-crafted tree used when no training corpus is available.

    Routes on f1 (two-active vs one-active hands), f3 (static vs
    transitioning), and f2 (same vs different initial poses); thresholds are
    heuristics stored in the data file, not learned values.
    """
    ref = resources.files("signfit").joinpath("data/fallback_tree.json")
    with ref.open("r", encoding="utf-8") as fh:
        return tree_from_dict(json.load(fh))


def training_accuracy(tree: DecisionTree, dataset: Sequence) -> float:
    dataset = list(dataset)
    hits = sum(1 for fv, g in dataset if tree.predict(fv) is g)
    return hits / len(dataset)


def read_feature_file(path):
    """Read training rows "f1,f2,f3,group" (comma-separated, # comments)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ValueError(f"{path}:{line_no}: expected 4 columns, got {len(parts)}")
            fv = FeatureVector(float(parts[0]), float(parts[1]), float(parts[2]))
            rows.append((fv, SignGroup.parse(parts[3])))
    return rows


def write_feature_file(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# f1,f2,f3,group\n")
        for fv, g in rows:
            fh.write(
                f"{fv.f1_min_wrist_range!r},{fv.f2_init_pose_dist!r},{fv.f3_max_pose_change!r},{g.value}\n"
            )
