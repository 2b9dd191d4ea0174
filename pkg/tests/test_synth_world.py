import numpy as np
import pytest

from codedscene.decoder import (
    argmax_labels,
    entropy_map,
    predict_depth,
    predict_semantics,
    softmax_probs,
)
from codedscene.geometry import Pose, proximity_from_depth
from codedscene.synth import (
    AlbedoSpec,
    AmbiguityRegion,
    PlaneSpec,
    SceneSpec,
    generate_scene,
    gt_logits,
    make_bundle,
    render_view,
)
from codedscene.worlds import (
    ambiguity_world,
    default_intrinsics,
    lattice_pair,
    slam_sequence,
    textured_room_spec,
)


def wall_scene(depth=3.0):
    wall = PlaneSpec((-3.0, -2.0, depth), (6.0, 0, 0), (0, 4.0, 0), 1, AlbedoSpec())
    spec = SceneSpec(seed=0, planes=(wall,), class_count=2, extents=(-1, 1, -1, 1, -1, 1))
    return generate_scene(spec)


class TestRenderer:
    def test_same_seed_bit_identical(self):
        k = default_intrinsics()
        scene = generate_scene(textured_room_spec(4))
        a = render_view(scene, Pose.identity(), k)
        b = render_view(generate_scene(textured_room_spec(4)), Pose.identity(), k)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.labels, b.labels)

    def test_fronto_wall_depth_exact(self):
        view = render_view(wall_scene(3.0), Pose.identity(), default_intrinsics())
        np.testing.assert_array_equal(view.depth, 3.0)
        assert (view.labels == 1).all()

    def test_normals_match_plane(self):
        view = render_view(wall_scene(), Pose.identity(), default_intrinsics())
        # fronto-parallel wall: normals point straight back at the camera
        assert np.abs(view.normals - np.array([0.0, 0.0, -1.0])).max() < 1e-9

    def test_camera_outside_extents_rejected(self):
        scene = wall_scene()
        with pytest.raises(ValueError, match="extents"):
            render_view(scene, Pose(translation=np.array([5.0, 0, 0])), default_intrinsics())

    def test_escaped_ray_rejected(self):
        # a tiny wall cannot cover the field of view
        wall = PlaneSpec((-0.1, -0.1, 3.0), (0.2, 0, 0), (0, 0.2, 0), 0, AlbedoSpec())
        scene = generate_scene(
            SceneSpec(seed=0, planes=(wall,), class_count=1, extents=(-1, 1, -1, 1, -1, 1))
        )
        with pytest.raises(ValueError, match="escaped"):
            render_view(scene, Pose.identity(), default_intrinsics())

    def test_image_in_unit_range(self):
        view = render_view(generate_scene(textured_room_spec(0)), Pose.identity(), default_intrinsics())
        assert view.image.min() >= 0.0 and view.image.max() <= 1.0


class TestMakeBundle:
    def test_truth_codes_reproduce_ground_truth(self):
        view = render_view(wall_scene(), Pose.identity(), default_intrinsics())
        rng = np.random.default_rng(0)
        bundle, truth = make_bundle(view, rng.normal(0, 0.4, 12), rng.normal(0, 0.2, 12), seed=5, class_count=2)
        prox = predict_depth(bundle, truth.code_depth).proximity.values
        assert np.abs(prox - proximity_from_depth(view.depth)).max() < 1e-6
        logits = predict_semantics(bundle, truth.code_sem)
        assert np.abs(logits - gt_logits(view, 2)).max() < 1e-6

    def test_code_norm_guard(self):
        view = render_view(wall_scene(), Pose.identity(), default_intrinsics())
        with pytest.raises(ValueError, match="prior scale"):
            make_bundle(view, np.full(12, 2.0), np.zeros(12), seed=0, class_count=2)

    def test_missing_region_rejected(self):
        view = render_view(wall_scene(), Pose.identity(), default_intrinsics())
        with pytest.raises(ValueError, match="not visible"):
            make_bundle(
                view, np.zeros(12), np.zeros(12), seed=0, class_count=2,
                ambiguity=(AmbiguityRegion(true_class=0, wrong_class=1),),
            )

    def test_ambiguity_statistics(self):
        # wrong labels inside the region, intact outside, elevated entropy
        wrong_in, correct_out, ratios = [], [], []
        for seed in range(6):
            world = ambiguity_world(seed, 2)
            frame = world.frames[1]
            mask = frame.truth.ambiguity_mask
            assert mask.any()
            probs = softmax_probs(predict_semantics(frame.bundle, np.zeros(frame.bundle.code_size)))
            labels = argmax_labels(probs)
            wrong_in.append(np.mean(labels[mask] != frame.view.labels[mask]))
            correct_out.append(np.mean(labels[~mask] == frame.view.labels[~mask]))
            ent = entropy_map(probs)
            ratios.append(ent[mask].mean() / ent[~mask].mean())
        assert min(wrong_in) >= 0.8
        assert min(correct_out) >= 0.95
        assert min(ratios) > 2.0

    def test_reference_frame_is_clean(self):
        world = ambiguity_world(0, 2)
        ref = world.frames[0]
        labels = argmax_labels(softmax_probs(predict_semantics(ref.bundle, np.zeros(16))))
        assert np.mean(labels == ref.view.labels) > 0.99


class TestTwoViewConsistency:
    def test_lattice_views_agree_through_warp(self):
        from codedscene import kernels
        from codedscene.geometry import ProximityMap
        from codedscene.residuals import validity_and_slant, warp

        lp = lattice_pair(0)
        fa, fb = lp.frames
        prox_a = ProximityMap(proximity_from_depth(fa.view.depth), 2.0)
        prox_b = ProximityMap(proximity_from_depth(fb.view.depth), 2.0)
        corr = warp(prox_a, lp.pose_b.inverse(), lp.intrinsics)
        weight = validity_and_slant(corr, prox_a, prox_b, lp.intrinsics)
        live = weight > 0
        d_hat, _, _, ok = kernels.bilinear_map(prox_b.values, corr.warped[:, 0], corr.warped[:, 1])
        depth_b = 2.0 * (1 - d_hat[live]) / d_hat[live]
        assert np.abs(depth_b - corr.points_b[live, 2]).max() < 1e-6
        # labels transfer exactly at integer disparities
        lab_b = fb.view.labels.ravel()
        u = np.rint(corr.warped[live, 0]).astype(int)
        v = np.rint(corr.warped[live, 1]).astype(int)
        idx = v * lp.intrinsics.width + u
        assert np.array_equal(fa.view.labels.ravel()[live], lab_b[idx])

    def test_sequence_determinism(self):
        a = slam_sequence(2, 3)
        b = slam_sequence(2, 3)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa.view.image, fb.view.image)
            assert np.array_equal(fa.bundle.s0, fb.bundle.s0)
            assert np.array_equal(fa.truth.code_sem, fb.truth.code_sem)
