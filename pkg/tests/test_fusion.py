import numpy as np
import pytest

from codedscene.decoder import argmax_labels, predict_semantics, softmax_probs
from codedscene.fusion import (
    FusionFrame,
    FusionInput,
    compute_metrics,
    fuse_average,
    fuse_codes,
    fuse_multiplicative,
)
from codedscene.worlds import ambiguity_world


def fusion_input(world, n=None):
    frames = [
        FusionFrame(f.bundle, f.view.pose, gt_depth=f.view.depth, gt_labels=f.view.labels)
        for f in (world.frames if n is None else world.frames[:n])
    ]
    return FusionInput(frames, world.intrinsics)


def zero_code_labels(world):
    return [
        argmax_labels(softmax_probs(predict_semantics(f.bundle, np.zeros(f.bundle.code_size))))
        for f in world.frames
    ]


class TestElementwiseRules:
    def test_multiplicative_hand_example(self):
        # two views voting (0.6, 0.4): product 0.36/0.16 renormalizes to
        # 0.36/0.52 and 0.16/0.52
        p = np.array([0.6, 0.4])
        prod = p * p
        fused = prod / prod.sum()
        assert fused[0] == pytest.approx(0.36 / 0.52, abs=1e-15)
        assert fused[1] == pytest.approx(0.16 / 0.52, abs=1e-15)

    def test_multiplicative_uniform_is_identity(self):
        world = ambiguity_world(0, 2)
        inp = fusion_input(world)
        # replace the later frame's probabilities with uniform by zeroing its
        # logits: fusing uniform evidence must leave the reference unchanged
        s0_uniform = np.zeros_like(world.frames[1].bundle.s0)
        from dataclasses import replace

        uniform_bundle = replace(world.frames[1].bundle, s0=s0_uniform,
                                 js=np.zeros_like(world.frames[1].bundle.js))
        inp.frames[1] = FusionFrame(uniform_bundle, world.frames[1].view.pose,
                                    gt_depth=world.frames[1].view.depth)
        result = fuse_multiplicative(inp)
        own = softmax_probs(predict_semantics(world.frames[0].bundle, np.zeros(16)))
        assert np.abs(result.probs[0] - own).max() < 1e-9

    def test_multiplicative_order_invariant(self):
        world = ambiguity_world(1, 3)
        inp = fusion_input(world)
        res_a = fuse_multiplicative(inp)
        swapped = FusionInput([inp.frames[0], inp.frames[2], inp.frames[1]], inp.intrinsics)
        res_b = fuse_multiplicative(swapped)
        assert np.abs(res_a.probs[0] - res_b.probs[0]).max() < 1e-12

    def test_average_identical_views_unchanged(self):
        world = ambiguity_world(2, 2)
        inp = FusionInput([fusion_input(world).frames[0]] * 2, world.intrinsics)
        result = fuse_average(inp)
        own = softmax_probs(predict_semantics(world.frames[0].bundle, np.zeros(16)))
        # identical frames at the same pose: warp is the identity, mean of
        # equal distributions is itself (away from interpolation borders)
        inner = np.abs(result.probs[0] - own)[2:-2, 2:-2]
        assert inner.max() < 1e-9

    def test_average_of_opposed_one_hots(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        np.testing.assert_allclose((a + b) / 2, [0.5, 0.5])

    def test_average_stays_on_simplex(self):
        world = ambiguity_world(3, 3)
        result = fuse_average(fusion_input(world))
        for probs in result.probs:
            assert np.abs(probs.sum(axis=-1) - 1.0).max() < 1e-9
            assert probs.min() >= 0


class TestCodeFusion:
    def test_identical_frames_keep_zero_code_labels(self):
        world = ambiguity_world(4, 2)
        base = fusion_input(world).frames[0]
        inp = FusionInput([base, base], world.intrinsics)
        result = fuse_codes(inp)
        zc = argmax_labels(softmax_probs(predict_semantics(base.bundle, np.zeros(16))))
        assert np.array_equal(result.labels[0], zc)
        assert np.array_equal(result.labels[1], zc)
        assert max(np.abs(c).max() for c in result.codes) < 1e-6

    def test_single_frame_returns_zero_code_exactly(self):
        world = ambiguity_world(5, 1)
        result = fuse_codes(fusion_input(world, 1))
        zc = zero_code_labels(world)[0]
        assert np.array_equal(result.labels[0], zc)
        assert np.abs(result.codes[0]).max() == 0.0

    def test_corrects_ambiguous_frame(self):
        world = ambiguity_world(6, 2)
        result = fuse_codes(fusion_input(world))
        frame = world.frames[1]
        mask = frame.truth.ambiguity_mask
        corrected = np.mean(result.labels[1][mask] == frame.view.labels[mask])
        assert corrected >= 0.9
        ent_drop = result.entropy_init[1][mask].mean() - result.entropy_opt[1][mask].mean()
        assert ent_drop > 0

    def test_non_reference_order_invariant(self):
        world = ambiguity_world(7, 3)
        inp = fusion_input(world)
        res_a = fuse_codes(inp)
        swapped = FusionInput([inp.frames[0], inp.frames[2], inp.frames[1]], inp.intrinsics)
        res_b = fuse_codes(swapped)
        assert np.abs(res_a.labels[0] - res_b.labels[0]).max() == 0
        assert np.array_equal(res_a.labels[1], res_b.labels[2])
        assert np.array_equal(res_a.labels[2], res_b.labels[1])

    def test_no_prior_flag(self):
        world = ambiguity_world(8, 2)
        result = fuse_codes(fusion_input(world), use_prior=False)
        assert result.report.semantic_prior_disabled


class TestMetrics:
    def test_perfect_prediction(self):
        gt = np.array([[0, 1], [2, 1]])
        m = compute_metrics(gt, gt)
        assert m.pixel_accuracy == 1.0 and m.class_accuracy == 1.0 and m.miou == 1.0

    def test_hand_counted_example(self):
        pred = np.array([[0, 1], [1, 1]])
        gt = np.array([[0, 1], [0, 1]])
        m = compute_metrics(pred, gt)
        assert m.pixel_accuracy == pytest.approx(0.75)
        assert m.class_accuracy == pytest.approx(0.75)  # mean(1/2, 1)
        assert m.miou == pytest.approx((0.5 + 2.0 / 3.0) / 2.0)

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            c = int(rng.integers(2, 7))
            pred = rng.integers(0, c, (10, 12))
            gt = rng.integers(0, c, (10, 12))
            m = compute_metrics(pred, gt, class_count=c)
            # naive counting oracle
            recalls, ious = [], []
            for cls in range(c):
                tp = fp = fn = 0
                for v in range(10):
                    for u in range(12):
                        p_hit = pred[v, u] == cls
                        g_hit = gt[v, u] == cls
                        tp += p_hit and g_hit
                        fp += p_hit and not g_hit
                        fn += g_hit and not p_hit
                if tp + fn > 0:
                    recalls.append(tp / (tp + fn))
                    ious.append(tp / (tp + fp + fn))
            assert m.pixel_accuracy == pytest.approx(np.mean(pred == gt))
            assert m.class_accuracy == pytest.approx(np.mean(recalls))
            assert m.miou == pytest.approx(np.mean(ious))

    def test_ignore_mask(self):
        pred = np.array([[0, 1], [1, 1]])
        gt = np.array([[0, 1], [0, 1]])
        ignore = np.array([[False, False], [True, False]])
        m = compute_metrics(pred, gt, ignore_mask=ignore)
        assert m.pixel_accuracy == 1.0
        assert m.valid_count == 3

    def test_zero_valid_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics(np.zeros((2, 2)), np.zeros((2, 2)), ignore_mask=np.ones((2, 2), dtype=bool))
