import numpy as np
import pytest

from codedscene.decoder import argmax_labels, predict_depth, predict_semantics, softmax_probs
from codedscene.geometry import Pose, project, proximity_from_depth, se3_exp, se3_log
from codedscene.image_io import read_pfm, read_pgm
from codedscene.slam import (
    Keyframe,
    MapWindow,
    SlamConfig,
    SlamSystem,
    export_map,
    map_update,
    should_spawn_keyframe,
    track,
)
from codedscene.worlds import lattice_pair, slam_sequence


def make_keyframe(frame, pose=None, use_truth_codes=True):
    code_d = frame.truth.code_depth if use_truth_codes else np.zeros(frame.bundle.code_size)
    code_s = frame.truth.code_sem if use_truth_codes else np.zeros(frame.bundle.code_size)
    return Keyframe(0, frame.view.image, pose or frame.view.pose, code_d.copy(), code_s.copy(), frame.bundle)


class TestTracking:
    def test_identity_frame(self):
        sw = slam_sequence(0, 2)
        kf = make_keyframe(sw.frames[0])
        result = track(sw.frames[0].view.image, kf, sw.intrinsics, SlamConfig())
        assert not result.lost
        assert np.abs(se3_log(result.pose)).max() < 1e-6

    def test_sequence_steps_within_tolerance(self):
        # consecutive frames at the target motion statistics
        sw = slam_sequence(0, 10)
        cfg = SlamConfig()
        prev = None
        for t in range(9):
            fa, fb = sw.frames[t], sw.frames[t + 1]
            kf = make_keyframe(fa)
            result = track(fb.view.image, kf, sw.intrinsics, cfg, init_pose=prev)
            assert not result.lost
            gt_rel = fb.view.pose.inverse().compose(fa.view.pose)
            err = se3_log(result.pose.compose(gt_rel.inverse()))
            assert np.rad2deg(np.linalg.norm(err[3:])) < 0.5
            assert np.linalg.norm(err[:3]) < 0.01
            prev = result.pose

    def test_pure_rotation_does_not_lose_track(self):
        sw = slam_sequence(3, 8, pure_rotation=True)
        cfg = SlamConfig()
        prev = None
        for t in range(7):
            kf = make_keyframe(sw.frames[t])
            result = track(sw.frames[t + 1].view.image, kf, sw.intrinsics, cfg, init_pose=prev)
            assert not result.lost
            prev = result.pose

    def test_unrelated_frame_raises_lost_flag(self):
        # tracking against noise cannot align: large residual flags lost
        sw = slam_sequence(0, 1)
        kf = make_keyframe(sw.frames[0])
        rng = np.random.default_rng(0)
        noise = rng.uniform(0.0, 1.0, kf.image.shape)
        result = track(noise, kf, sw.intrinsics, SlamConfig())
        assert result.lost
        assert "residual" in result.reason or "overlap" in result.reason


class TestKeyframePolicy:
    def test_identity_no_spawn(self):
        spawn, reason = should_spawn_keyframe(Pose.identity(), 1.0, SlamConfig())
        assert not spawn

    def test_rotation_rule(self):
        pose = se3_exp([0, 0, 0, 0, np.deg2rad(15.0), 0])
        spawn, reason = should_spawn_keyframe(pose, 1.0, SlamConfig())
        assert spawn and "rotation" in reason

    def test_translation_rule(self):
        pose = Pose(translation=np.array([0.2, 0.0, 0.0]))
        spawn, reason = should_spawn_keyframe(pose, 1.0, SlamConfig())
        assert spawn and "translation" in reason

    def test_overlap_rule(self):
        spawn, reason = should_spawn_keyframe(Pose.identity(), 0.5, SlamConfig())
        assert spawn and "overlap" in reason


class TestMapping:
    def test_window_of_one_is_noop(self):
        sw = slam_sequence(1, 1)
        window = MapWindow()
        window.add(make_keyframe(sw.frames[0]))
        assert map_update(window, sw.intrinsics, SlamConfig()) == []

    def test_two_view_map_update_recovers_truth(self):
        lp = lattice_pair(2)
        fa, fb = lp.frames
        rng = np.random.default_rng(5)
        pert = np.concatenate([0.03 * rng.normal(size=3), np.deg2rad(1.5) * rng.normal(size=3)])
        window = MapWindow(gauge_id=0)
        window.add(Keyframe(0, fa.view.image, Pose.identity(), np.zeros(16), np.zeros(16), fa.bundle))
        window.add(Keyframe(1, fb.view.image, se3_exp(pert).compose(lp.pose_b),
                            np.zeros(16), np.zeros(16), fb.bundle))
        reports = map_update(window, lp.intrinsics, SlamConfig())
        assert len(reports) == 3
        for kf, frame in zip(window.keyframes, (fa, fb)):
            prox = predict_depth(kf.bundle, kf.code_depth).proximity.values
            rmse = np.sqrt(np.mean((prox - proximity_from_depth(frame.view.depth)) ** 2))
            assert rmse < 1e-3
            labels = argmax_labels(softmax_probs(predict_semantics(kf.bundle, kf.code_sem)))
            assert np.mean(labels == frame.view.labels) >= 0.95
        err = se3_log(window.keyframes[1].pose.compose(lp.pose_b.inverse()))
        assert np.rad2deg(np.linalg.norm(err[3:])) < 0.1

    def test_gauge_survives_window_slide(self):
        window = MapWindow(max_size=2, gauge_id=0)
        sw = slam_sequence(1, 3)
        for k in range(3):
            window.add(make_keyframe(sw.frames[k]))
        assert len(window.keyframes) == 2
        assert window.gauge_id == window.keyframes[0].kf_id


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    out = tmp_path_factory.mktemp("map")
    sw = slam_sequence(2, 1)
    window = MapWindow()
    kf = make_keyframe(sw.frames[0], pose=se3_exp([0.2, -0.1, 0.05, 0.03, 0.1, -0.02]))
    window.add(kf)
    export_map(window, sw.intrinsics, out)
    return out, kf, sw


class TestExport:

    def test_poses_round_trip_bit_exact(self, exported):
        out, kf, _ = exported
        from codedscene.dataset import parse_pose_line

        _, pose = parse_pose_line((out / "keyframes.txt").read_text().splitlines()[0])
        assert np.array_equal(pose.quaternion, kf.pose.quaternion)
        assert np.array_equal(pose.translation, kf.pose.translation)

    def test_label_map_is_argmax_of_exported_logits(self, exported):
        out, kf, _ = exported
        labels = read_pgm(out / "kf_0000_labels.pgm").astype(np.int64)
        logits = np.stack(
            [read_pfm(out / f"kf_0000_logits_class{c}.pfm") for c in range(kf.bundle.class_count)],
            axis=-1,
        )
        assert np.array_equal(labels, np.argmax(logits, axis=-1))

    def test_point_cloud_reprojects(self, exported):
        out, kf, sw = exported
        lines = (out / "cloud.ply").read_text().splitlines()
        n = int(next(l for l in lines if l.startswith("element vertex")).split()[-1])
        body = lines[lines.index("end_header") + 1 :]
        assert len(body) == n
        pts = np.array([[float(x) for x in line.split()[:3]] for line in body])
        cam = kf.pose.inverse().transform(pts)
        uv, ok = project(cam, sw.intrinsics)
        assert ok.all()
        u_grid, v_grid = sw.intrinsics.pixel_grid()
        depth, finite = predict_depth(kf.bundle, kf.code_depth).proximity.to_depth()
        expect = np.stack([u_grid, v_grid], axis=-1)[finite.ravel()]
        assert np.abs(uv - expect).max() < 0.5


class TestEndToEnd:
    def test_short_run_drift(self):
        sw = slam_sequence(0, 10)
        system = SlamSystem(sw.intrinsics, SlamConfig())
        result = system.run((f.view.image, f.bundle) for f in sw.frames)
        assert not result.lost
        assert len(result.keyframes) >= 2
        fid, est = result.trajectory[-1]
        anchor = sw.poses[result.trajectory[0][0]]
        est_w = anchor.compose(est)
        err = se3_log(est_w.compose(sw.poses[fid].inverse()))
        assert np.rad2deg(np.linalg.norm(err[3:])) < 1.0
        assert np.linalg.norm(est_w.translation - sw.poses[fid].translation) < 0.02
