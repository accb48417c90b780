import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signfit.rotations import (
    axis_angle_to_matrix,
    axis_angle_to_quaternion,
    batch_axis_angle_to_matrix,
    batch_left_jacobian,
    canonicalize_axis_angle,
    chordal_mean_quaternion,
    geodesic_angle,
    mean_axis_angle,
    quaternion_slerp,
    quaternion_to_axis_angle,
    rotation_left_jacobian,
    slerp_axis_angle,
)


def random_axis_angle(rng, scale=np.pi * 0.9):
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    return v * rng.uniform(0.0, scale)


class TestConversions:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            v = random_axis_angle(rng)
            q = axis_angle_to_quaternion(v)
            assert abs(np.linalg.norm(q) - 1.0) < 1e-12
            back = quaternion_to_axis_angle(q)
            assert np.allclose(back, v, atol=1e-12)

    def test_small_angles(self):
        v = np.array([1e-10, -2e-10, 5e-11])
        q = axis_angle_to_quaternion(v)
        assert np.allclose(quaternion_to_axis_angle(q), v, atol=1e-18)
        R = axis_angle_to_matrix(v)
        assert np.allclose(R, np.eye(3), atol=1e-9)

    def test_canonicalize_wraps_large_angles(self):
        axis = np.array([1.0, 0.0, 0.0])
        v = axis * (2.0 * np.pi + 0.3)
        c = canonicalize_axis_angle(v)
        assert np.allclose(c, axis * 0.3, atol=1e-12)
        # angle in (pi, 2pi) flips the axis
        v2 = axis * (2.0 * np.pi - 0.4)
        c2 = canonicalize_axis_angle(v2)
        assert np.allclose(c2, -axis * 0.4, atol=1e-12)

    def test_canonical_range_is_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            v = random_axis_angle(rng)
            assert np.array_equal(canonicalize_axis_angle(v), v)

    def test_matrix_matches_quaternion_rotation(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            v = random_axis_angle(rng)
            R = axis_angle_to_matrix(v)
            assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
            assert np.isclose(np.linalg.det(R), 1.0)


class TestBatched:
    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        V = np.stack([random_axis_angle(rng) for _ in range(40)])
        V[0] = 0.0  # include the identity
        R = batch_axis_angle_to_matrix(V)
        J = batch_left_jacobian(V)
        for i in range(V.shape[0]):
            assert np.allclose(R[i], axis_angle_to_matrix(V[i]), atol=1e-12)
            assert np.allclose(J[i], rotation_left_jacobian(V[i]), atol=1e-12)

    def test_left_jacobian_identity(self):
        """d(exp(v))/dv_c exp(v)^T equals [J_l(v) e_c]_x (finite differences)."""
        rng = np.random.default_rng(4)
        for _ in range(20):
            v = random_axis_angle(rng)
            Jl = rotation_left_jacobian(v)
            R = axis_angle_to_matrix(v)
            eps = 1e-7
            for c in range(3):
                dv = np.zeros(3)
                dv[c] = eps
                dR = (axis_angle_to_matrix(v + dv) - axis_angle_to_matrix(v - dv)) / (2 * eps)
                S = dR @ R.T
                w = np.array([S[2, 1], S[0, 2], S[1, 0]])
                assert np.allclose(w, Jl[:, c], atol=1e-6)


class TestSlerp:
    def test_endpoints_exact(self):
        rng = np.random.default_rng(5)
        a, b = random_axis_angle(rng), random_axis_angle(rng)
        assert np.array_equal(slerp_axis_angle(a, b, 0.0), a)
        assert np.array_equal(slerp_axis_angle(a, b, 1.0), b)

    def test_single_axis_midpoint(self):
        a = np.array([0.0, 0.0, 0.0])
        b = np.array([np.pi / 2, 0.0, 0.0])
        mid = slerp_axis_angle(a, b, 0.5)
        assert np.allclose(mid, [np.pi / 4, 0.0, 0.0], atol=1e-12)

    def test_angular_linearity_in_t(self):
        rng = np.random.default_rng(6)
        axis = np.array([0.0, 1.0, 0.0])
        a = axis * 0.2
        b = axis * 1.4
        for t in np.linspace(0, 1, 11):
            v = slerp_axis_angle(a, b, t)
            expected = 0.2 + t * 1.2
            assert abs(np.linalg.norm(v) - expected) < 1e-9

    def test_antipodal_quaternion_input(self):
        """q and -q are the same rotation; slerp must ignore the sign."""
        rng = np.random.default_rng(7)
        for _ in range(20):
            v = random_axis_angle(rng)
            q = axis_angle_to_quaternion(v)
            for t in (0.0, 0.3, 0.7, 1.0):
                out = quaternion_slerp(q, -q, t)
                # same rotation as q throughout
                assert geodesic_angle(quaternion_to_axis_angle(out), v) < 1e-9


def grid_chordal_mean_angle(angles, lo=-np.pi, hi=np.pi):
    """Oracle: minimize summed squared chordal (sign-aligned quaternion)
    distance over a fine grid plus ternary refinement, single shared axis."""
    quats = [np.array([np.cos(a / 2), np.sin(a / 2), 0.0, 0.0]) for a in angles]

    def cost(theta):
        q = np.array([np.cos(theta / 2), np.sin(theta / 2), 0.0, 0.0])
        total = 0.0
        for qi in quats:
            total += min(np.sum((q - qi) ** 2), np.sum((q + qi) ** 2))
        return total

    grid = np.linspace(lo, hi, 4001)
    best = grid[int(np.argmin([cost(t) for t in grid]))]
    a, b = best - 2e-3, best + 2e-3
    for _ in range(80):
        m1 = a + (b - a) / 3
        m2 = b - (b - a) / 3
        if cost(m1) < cost(m2):
            b = m2
        else:
            a = m1
    return 0.5 * (a + b)


class TestChordalMean:
    def test_same_axis_midpoint_vs_grid_oracle(self):
        angles = [np.deg2rad(10), np.deg2rad(30)]
        oracle = grid_chordal_mean_angle(angles)
        vecs = np.array([[a, 0.0, 0.0] for a in angles])
        mean = mean_axis_angle(vecs)
        assert abs(np.linalg.norm(mean) - oracle) < 1e-6
        assert abs(np.linalg.norm(mean) - np.deg2rad(20)) < 1e-9

    def test_idempotent_on_identical_inputs(self):
        rng = np.random.default_rng(8)
        v = random_axis_angle(rng)
        mean = mean_axis_angle(np.stack([v] * 5))
        assert geodesic_angle(mean, v) < 1e-9

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        vs = np.stack([random_axis_angle(rng) for _ in range(6)])
        m1 = mean_axis_angle(vs)
        m2 = mean_axis_angle(vs[::-1])
        assert geodesic_angle(m1, m2) < 1e-9

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(10)
        quats = np.stack(
            [axis_angle_to_quaternion(random_axis_angle(rng)) for _ in range(8)]
        )
        m1 = chordal_mean_quaternion(quats)
        flipped = quats.copy()
        flipped[::2] *= -1.0
        m2 = chordal_mean_quaternion(flipped)
        assert min(np.linalg.norm(m1 - m2), np.linalg.norm(m1 + m2)) < 1e-9

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            chordal_mean_quaternion(np.zeros((0, 4)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3))
def test_slerp_self_is_identity(comps):
    v = np.asarray(comps)
    out = slerp_axis_angle(v, v, 0.5)
    assert geodesic_angle(out, v) < 1e-9
