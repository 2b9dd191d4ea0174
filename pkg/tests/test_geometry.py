import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codedscene.geometry import (
    Intrinsics,
    Pose,
    ProximityMap,
    backproject,
    depth_from_proximity,
    project,
    proximity_from_depth,
    se3_exp,
    se3_log,
)


def default_k():
    return Intrinsics(60.0, 60.0, 31.5, 23.5, 64, 48)


class TestProjection:
    def test_optical_axis(self):
        k = Intrinsics(1.0, 1.0, 0.0, 0.0, 4, 4)
        uv, ok = project(np.array([0.0, 0.0, 1.0]), k)
        assert ok
        np.testing.assert_allclose(uv, [0.0, 0.0])

    def test_offset_point(self):
        # u = fx * X/Z + cx = 100 * 0.5 + 50
        k = Intrinsics(100.0, 100.0, 50.0, 50.0, 200, 200)
        uv, ok = project(np.array([1.0, 0.0, 2.0]), k)
        assert ok
        assert uv[0] == pytest.approx(100.0, abs=1e-12)

    def test_behind_camera_flagged(self):
        uv, ok = project(np.array([0.0, 0.0, -1.0]), default_k())
        assert not ok

    def test_backproject_principal_point(self):
        k = default_k()
        pt = backproject(np.array([k.cx, k.cy]), 3.0, k)
        np.testing.assert_allclose(pt, [0.0, 0.0, 3.0])

    def test_round_trip_sampled(self):
        # 1000 random pixels/depths: backproject then project is the identity
        k = default_k()
        rng = np.random.default_rng(0)
        uv = rng.uniform([0, 0], [k.width - 1, k.height - 1], size=(1000, 2))
        depth = rng.uniform(0.3, 9.0, size=1000)
        pts = backproject(uv, depth, k)
        uv_back, ok = project(pts, k)
        assert ok.all()
        assert np.abs(uv_back - uv).max() < 1e-9

    def test_backproject_matches_scalar_formula(self):
        # independent scalar-arithmetic oracle
        k = default_k()
        rng = np.random.default_rng(1)
        for _ in range(100):
            u = rng.uniform(0, k.width - 1)
            v = rng.uniform(0, k.height - 1)
            d = rng.uniform(0.2, 8.0)
            expected = ((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d)
            got = backproject(np.array([u, v]), d, k)
            np.testing.assert_allclose(got, expected, rtol=0, atol=1e-14)

    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            Intrinsics(-1.0, 1.0, 0.0, 0.0, 4, 4)
        with pytest.raises(ValueError):
            Intrinsics(1.0, 1.0, 10.0, 0.0, 4, 4)


class TestProximity:
    def test_midpoint(self):
        assert proximity_from_depth(2.0, 2.0) == pytest.approx(0.5)

    def test_zero_depth_boundary(self):
        assert proximity_from_depth(0.0, 2.0) == 1.0

    def test_hand_value(self):
        # p = a / (a + d) = 2 / 8
        assert proximity_from_depth(6.0, 2.0) == pytest.approx(0.25)

    def test_round_trip(self):
        d = np.linspace(0.01, 50.0, 500)
        back = depth_from_proximity(proximity_from_depth(d, 2.0), 2.0)
        assert np.abs(back - d).max() / d.max() < 1e-6

    @given(st.floats(min_value=0.0, max_value=1e6), st.floats(min_value=1e6, max_value=1e9))
    def test_monotone_decreasing(self, d, extra):
        a = 2.0
        p1 = proximity_from_depth(d, a)
        p2 = proximity_from_depth(d + extra, a)
        assert 0.0 < p2 < p1 <= 1.0

    def test_map_masks_infinite_depth(self):
        m = ProximityMap(np.array([[0.5, 1e-9], [1.0, 0.25]]))
        depth, finite = m.to_depth()
        assert finite.tolist() == [[True, False], [True, True]]
        assert depth[1][0] == 0.0


class TestSE3:
    def test_exp_zero_is_identity(self):
        pose = se3_exp(np.zeros(6))
        np.testing.assert_allclose(pose.quaternion, [1, 0, 0, 0])
        np.testing.assert_allclose(pose.translation, 0)

    def test_log_exp_round_trip_sampled(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(1000):
            delta = rng.uniform(-1, 1, 6)
            delta /= max(1.0, np.linalg.norm(delta))  # ||delta|| < 1
            worst = max(worst, np.abs(se3_log(se3_exp(delta)) - delta).max())
        assert worst < 1e-8

    def test_compose_with_inverse(self):
        t = se3_exp([0.3, -0.1, 0.8, 0.4, -0.2, 0.9])
        ident = t.compose(t.inverse())
        assert np.abs(se3_log(ident)).max() < 1e-9

    def test_associativity(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a, b, c = (se3_exp(rng.uniform(-1, 1, 6)) for _ in range(3))
            left = a.compose(b).compose(c)
            right = a.compose(b.compose(c))
            assert np.abs(se3_log(left.inverse().compose(right))).max() < 1e-9

    def test_near_pi_rotation(self):
        axis = np.array([1.0, 2.0, -0.5])
        axis /= np.linalg.norm(axis)
        delta = np.concatenate([[0.2, -0.1, 0.4], axis * (np.pi - 1e-7)])
        back = se3_log(se3_exp(delta))
        assert np.abs(back - delta).max() < 1e-6

    def test_quaternion_stays_unit(self):
        pose = se3_exp([0.1, 0.2, 0.3, 0.5, 0.6, 0.7])
        for _ in range(100):
            pose = pose.compose(se3_exp([0.01] * 6))
        assert abs(np.linalg.norm(pose.quaternion) - 1.0) < 1e-9

    def test_transform_batch(self):
        # 90-degree yaw plus unit x-translation, built directly
        q = np.array([np.cos(np.pi / 4), 0.0, np.sin(np.pi / 4), 0.0])
        pose = Pose(q, np.array([1.0, 0.0, 0.0]))
        pts = pose.transform(np.array([[0.0, 0.0, 1.0]]))
        np.testing.assert_allclose(pts[0], [2.0, 0.0, 0.0], atol=1e-12)

    @settings(max_examples=50)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_exp_log_property(self, seed):
        delta = np.random.default_rng(seed).uniform(-0.9, 0.9, 6)
        assert np.abs(se3_log(se3_exp(delta)) - delta).max() < 1e-8
