import numpy as np
import pytest

from signfit.classifier import (
    DecisionTree,
    FeatureVector,
    TreeFormatError,
    TreeParams,
    extract_features,
    fallback_tree,
    fit_tree,
    load_tree,
    predict,
    read_feature_file,
    save_tree,
    training_accuracy,
    tree_from_dict,
    tree_to_dict,
    write_feature_file,
)
from signfit.keypoints import (
    BODY_LEFT_WRIST,
    BODY_MID_HIP,
    BODY_NECK,
    BODY_RIGHT_WRIST,
    KeypointFrame,
    KeypointSequence,
    normalize_sequence,
)
from signfit.kinematics import HandPose, reflect_hand_pose
from signfit.linguistic import ReferencePoseSequence, SignGroup
from signfit.synthetic import handshape


def make_sequence(right_heights, left_heights):
    frames = []
    for t, (ry, ly) in enumerate(zip(right_heights, left_heights)):
        body = np.zeros((25, 3))
        body[BODY_NECK] = [300.0, 100.0, 1.0]
        body[BODY_MID_HIP] = [300.0, 200.0, 1.0]
        body[BODY_RIGHT_WRIST] = [250.0, ry, 1.0]
        body[BODY_LEFT_WRIST] = [350.0, ly, 1.0]
        frames.append(KeypointFrame(body, np.zeros((21, 3)), np.zeros((21, 3)), t))
    return normalize_sequence(
        KeypointSequence(tuple(frames), fps=30.0, image_size=(600, 400))
    )


def rps_pair(right_i, right_f, left_i, left_f):
    right = ReferencePoseSequence(
        mode="transitioning", hand="right", pose_initial=right_i, pose_final=right_f
    )
    left = ReferencePoseSequence(
        mode="transitioning", hand="left", pose_initial=left_i, pose_final=left_f
    )
    return left, right


class TestFeatures:
    def test_static_equal_wrists_give_zero_f1(self):
        seq = make_sequence([150.0] * 5, [150.0] * 5)
        fist_r = handshape("fist", "right")
        left, right = rps_pair(fist_r, fist_r, handshape("fist", "left"), handshape("fist", "left"))
        f = extract_features(seq, left, right)
        assert f.f1_min_wrist_range == pytest.approx(0.0)

    def test_mirrored_initial_poses_give_zero_f2(self):
        seq = make_sequence([150.0, 140.0], [150.0, 140.0])
        spread_r = handshape("spread", "right")
        spread_l = handshape("spread", "left")  # exact mirror of spread_r
        left, right = rps_pair(spread_r, spread_r, spread_l, spread_l)
        f = extract_features(seq, left, right)
        assert f.f2_init_pose_dist == pytest.approx(0.0, abs=1e-12)

    def test_static_sign_gives_zero_f3(self):
        seq = make_sequence([150.0, 140.0], [150.0, 140.0])
        p = handshape("point", "right")
        left, right = rps_pair(p, p, handshape("point", "left"), handshape("point", "left"))
        f = extract_features(seq, left, right)
        assert f.f3_max_pose_change == pytest.approx(0.0, abs=1e-12)

    def test_handedness_invariance(self):
        """Swapping hands (and mirroring every pose) leaves features unchanged."""
        rng = np.random.default_rng(0)

        def rand_pose():
            joints = rng.standard_normal((15, 3)) * 0.4
            return HandPose(joints)

        ri, rf, li, lf = rand_pose(), rand_pose(), rand_pose(), rand_pose()
        seq = make_sequence([150.0, 120.0, 160.0], [150.0, 135.0, 140.0])
        left, right = rps_pair(ri, rf, li, lf)
        f1 = extract_features(seq, left, right)

        # swapped signer: left/right exchanged and mirrored
        seq_swapped = make_sequence([150.0, 135.0, 140.0], [150.0, 120.0, 160.0])
        left2, right2 = rps_pair(
            reflect_hand_pose(li), reflect_hand_pose(lf),
            reflect_hand_pose(ri), reflect_hand_pose(rf),
        )
        f2 = extract_features(seq_swapped, left2, right2)
        assert f1.f1_min_wrist_range == pytest.approx(f2.f1_min_wrist_range, abs=1e-9)
        assert f1.f2_init_pose_dist == pytest.approx(f2.f2_init_pose_dist, abs=1e-9)
        assert f1.f3_max_pose_change == pytest.approx(f2.f3_max_pose_change, abs=1e-9)

    def test_feature_ranges(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            poses = [HandPose(rng.standard_normal((15, 3)) * 0.5) for _ in range(4)]
            seq = make_sequence([150.0, 130.0], [150.0, 145.0])
            left, right = rps_pair(*poses)
            f = extract_features(seq, left, right)
            assert f.f1_min_wrist_range >= 0.0
            assert 0.0 <= f.f2_init_pose_dist <= 2.0
            assert 0.0 <= f.f3_max_pose_change <= 2.0

    def test_wrist_never_detected(self):
        frames = []
        for t in range(3):
            body = np.zeros((25, 3))
            body[BODY_NECK] = [300.0, 100.0, 1.0]
            body[BODY_MID_HIP] = [300.0, 200.0, 1.0]
            body[BODY_RIGHT_WRIST] = [250.0, 150.0, 1.0]
            frames.append(KeypointFrame(body, np.zeros((21, 3)), np.zeros((21, 3)), t))
        seq = normalize_sequence(
            KeypointSequence(tuple(frames), fps=30.0, image_size=(600, 400))
        )
        p = handshape("fist", "right")
        left, right = rps_pair(p, p, p, p)
        with pytest.raises(ValueError, match="left wrist"):
            extract_features(seq, left, right)


def fv(f1, f2, f3):
    return FeatureVector(f1, f2, f3)


class TestFitTree:
    def test_single_label(self):
        tree = fit_tree([(fv(0.1, 0.2, 0.3), SignGroup.G0A)] * 4)
        assert tree.root.is_leaf
        assert tree.predict(fv(9.0, 9.0, 9.0)) is SignGroup.G0A

    def test_two_point_split_midpoint(self):
        """Separable on f3 at 0.05 vs 1.5: split threshold (0.05+1.5)/2."""
        data = [
            (fv(0.5, 0.1, 0.05), SignGroup.G1A2A),
            (fv(0.5, 0.1, 1.5), SignGroup.G1B),
        ]
        tree = fit_tree(data)
        assert not tree.root.is_leaf
        assert tree.root.feature == 3
        assert tree.root.threshold == pytest.approx(0.775)
        assert tree.predict(fv(0.5, 0.1, 0.05)) is SignGroup.G1A2A
        assert tree.predict(fv(0.5, 0.1, 0.775)) is SignGroup.G1A2A  # ties go left
        assert tree.predict(fv(0.5, 0.1, 1.4)) is SignGroup.G1B

    def test_conflicting_identical_features_majority(self):
        data = [
            (fv(0.1, 0.1, 0.1), SignGroup.G0B),
            (fv(0.1, 0.1, 0.1), SignGroup.G0B),
            (fv(0.1, 0.1, 0.1), SignGroup.G3A),
        ]
        tree = fit_tree(data)
        assert tree.root.is_leaf
        assert tree.root.label is SignGroup.G0B

    def test_conflict_tie_broken_by_enumeration_order(self):
        data = [
            (fv(0.1, 0.1, 0.1), SignGroup.G3A),
            (fv(0.1, 0.1, 0.1), SignGroup.G0A),
        ]
        tree = fit_tree(data)
        assert tree.root.label is SignGroup.G0A  # G0A enumerates before G3A

    def test_full_accuracy_on_consistent_data(self):
        rng = np.random.default_rng(2)
        data = []
        for i, g in enumerate(SignGroup):
            for _ in range(12):
                data.append(
                    (fv(*(rng.uniform(0, 2, size=3) + 3 * i)), g)
                )
        tree = fit_tree(data, TreeParams(max_depth=None, min_leaf=1))
        assert training_accuracy(tree, data) == 1.0

    def test_deterministic_retraining(self):
        rng = np.random.default_rng(3)
        data = [
            (fv(*rng.uniform(0, 2, size=3)), list(SignGroup)[rng.integers(0, 6)])
            for _ in range(60)
        ]
        t1 = fit_tree(data)
        t2 = fit_tree(data)
        assert tree_to_dict(t1) == tree_to_dict(t2)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            fit_tree([])


class TestTreeSerialization:
    def test_round_trip_predictions(self, tmp_path):
        rng = np.random.default_rng(4)
        data = [
            (fv(*rng.uniform(0, 2, size=3)), list(SignGroup)[rng.integers(0, 6)])
            for _ in range(40)
        ]
        tree = fit_tree(data, TreeParams(max_depth=None, min_leaf=1))
        path = tmp_path / "tree.json"
        save_tree(tree, path)
        again = load_tree(path)
        for _ in range(1000):
            f = fv(*rng.uniform(-1, 3, size=3))
            assert predict(tree, f) is predict(again, f)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"nodes": [{"id": 0, "feature": 1')
        with pytest.raises(TreeFormatError):
            load_tree(path)

    def test_bad_feature_index(self):
        raw = {
            "nodes": [
                {"id": 0, "feature": 4, "threshold": 0.5, "left": 1, "right": 2},
                {"id": 1, "leaf": "G0a"},
                {"id": 2, "leaf": "G0b"},
            ]
        }
        with pytest.raises(TreeFormatError, match="feature index 4"):
            tree_from_dict(raw)

    def test_missing_child(self):
        raw = {"nodes": [{"id": 0, "feature": 1, "threshold": 0.5, "left": 1, "right": 2}]}
        with pytest.raises(TreeFormatError, match="referenced but not defined"):
            tree_from_dict(raw)

    def test_cycle_detected(self):
        raw = {
            "nodes": [
                {"id": 0, "feature": 1, "threshold": 0.5, "left": 0, "right": 1},
                {"id": 1, "leaf": "G0a"},
            ]
        }
        with pytest.raises(TreeFormatError, match="cycle"):
            tree_from_dict(raw)


class TestFallbackTree:
    def test_loads_and_always_predicts(self):
        tree = fallback_tree()
        rng = np.random.default_rng(5)
        for _ in range(200):
            g = tree.predict(fv(*rng.uniform(0, 2, size=3)))
            assert isinstance(g, SignGroup)

    def test_routes_two_active_static_to_g1a2a(self):
        tree = fallback_tree()
        assert tree.predict(fv(1.2, 0.05, 0.05)) is SignGroup.G1A2A
        assert tree.predict(fv(1.2, 0.05, 0.9)) is SignGroup.G1B


class TestFeatureFile:
    def test_round_trip(self, tmp_path):
        rows = [
            (fv(0.25, 0.5, 0.75), SignGroup.G2B3B),
            (fv(1.0, 0.0, 2.0), SignGroup.G0A),
        ]
        path = tmp_path / "features.csv"
        write_feature_file(rows, path)
        again = read_feature_file(path)
        assert len(again) == 2
        assert again[0][0].f1_min_wrist_range == 0.25
        assert again[0][1] is SignGroup.G2B3B

    def test_wrong_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.1,0.2\n")
        with pytest.raises(ValueError, match="4 columns"):
            read_feature_file(path)
