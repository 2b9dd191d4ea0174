"""Multi-view semantic label fusion and segmentation metrics.

Three fusion rules over a set of overlapping frames, sharing one warp and
occlusion machinery so the rule is the only difference:

* code fusion: jointly optimize every frame's semantic code over pairwise
  softmax-consistency residuals (all later frames paired to the reference)
  plus zero-code priors, then decode. Corrections propagate through the
  code, so they cover whole regions rather than only corresponded pixels.
* multiplicative / average: classic element-wise baselines; for each frame,
  the other frames' zero-code probabilities are warped in and combined
  per pixel.

Frames carry ground-truth depth and poses when the association mode is
``ground_truth`` (the isolation protocol: fusion quality is measured without
estimation error); ``estimated`` uses the decoded zero-code depth instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .decoder import (
    DecoderBundle,
    argmax_labels,
    entropy_map,
    predict_depth,
    predict_semantics,
    softmax_probs,
)
from .geometry import Intrinsics, Pose, ProximityMap, proximity_from_depth
from .residuals import validity_and_slant, warp
from .solver import (
    FrameState,
    Problem,
    SolveReport,
    SolverConfig,
    add_prior,
    gauss_newton,
)


@dataclass
class FusionFrame:
    bundle: DecoderBundle
    pose: Pose
    gt_depth: np.ndarray | None = None
    gt_labels: np.ndarray | None = None


@dataclass
class FusionInput:
    frames: list[FusionFrame]
    intrinsics: Intrinsics
    reference: int = 0
    association: str = "ground_truth"  # or "estimated"

    def __post_init__(self):
        if not self.frames:
            raise ValueError("fusion needs at least one frame")
        if self.association not in ("ground_truth", "estimated"):
            raise ValueError(f"unknown association mode {self.association!r}")
        if self.association == "ground_truth":
            for k, f in enumerate(self.frames):
                if f.gt_depth is None:
                    raise ValueError(f"frame {k} lacks ground-truth depth for ground_truth association")


def _warp_proximity(inp: FusionInput, k: int) -> ProximityMap:
    frame = inp.frames[k]
    if inp.association == "ground_truth":
        return ProximityMap(
            proximity_from_depth(frame.gt_depth, frame.bundle.avg_depth), frame.bundle.avg_depth
        )
    return predict_depth(frame.bundle, np.zeros(frame.bundle.code_size)).proximity


@dataclass
class FusionResult:
    codes: list[np.ndarray]
    logits: list[np.ndarray]
    probs: list[np.ndarray]
    labels: list[np.ndarray]
    entropy_init: list[np.ndarray]
    entropy_opt: list[np.ndarray]
    report: SolveReport | None = None
    fallback_flags: list[np.ndarray] = field(default_factory=list)


def _result_from_logits(logits_init, logits_opt, report=None, fallback=None) -> FusionResult:
    probs = [softmax_probs(lg) for lg in logits_opt]
    return FusionResult(
        codes=[],
        logits=list(logits_opt),
        probs=probs,
        labels=[argmax_labels(p) for p in probs],
        entropy_init=[entropy_map(softmax_probs(lg)) for lg in logits_init],
        entropy_opt=[entropy_map(p) for p in probs],
        report=report,
        fallback_flags=fallback or [],
    )


def fuse_codes(
    inp: FusionInput,
    config: SolverConfig | None = None,
    *,
    use_prior: bool = True,
    pairing: str = "reference",
    max_iters: int | None = None,
) -> FusionResult:
    """Joint semantic-code optimization across the frame set.

    Codes start at zero (the most likely single-view prediction) and minimize
    pairwise semantic residuals plus zero-code priors; ``use_prior=False``
    drops the priors (the ablation) and is flagged in the report. Occluded
    correspondences are masked by the shared occlusion test.
    """
    config = config or SolverConfig()
    if not use_prior:
        config = SolverConfig(**{**config.__dict__, "lambda_prior_sem": 0.0})
    states = []
    for k, frame in enumerate(inp.frames):
        states.append(
            FrameState(
                pose=frame.pose,
                code_depth=np.zeros(frame.bundle.code_size),
                code_sem=np.zeros(frame.bundle.code_size),
                bundle=frame.bundle,
                pose_frozen=True,
                depth_frozen=True,
                fixed_prox=_warp_proximity(inp, k),
            )
        )
    problem = Problem(states, inp.intrinsics, config=config)
    if pairing == "reference":
        pairs = [(inp.reference, k) for k in range(len(inp.frames)) if k != inp.reference]
    elif pairing == "all":
        pairs = [(i, j) for i in range(len(inp.frames)) for j in range(i + 1, len(inp.frames))]
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    for a, b in pairs:
        problem.add_pair("sem", a, b)
    for k in range(len(inp.frames)):
        add_prior(problem, k, "semantic")

    report = gauss_newton(problem, max_iters, kinds={"sem", "prior_sem"}, active_groups={"sem"})

    logits_init = [predict_semantics(f.bundle, np.zeros(f.bundle.code_size)) for f in inp.frames]
    logits_opt = [predict_semantics(f.bundle, s.code_sem) for f, s in zip(inp.frames, states)]
    result = _result_from_logits(logits_init, logits_opt, report)
    result.codes = [s.code_sem.copy() for s in states]
    return result


def _gathered_probs(inp: FusionInput, f: int, occlusion_tau_rel: float):
    """Other frames' zero-code probabilities at frame f's pixels, with masks."""
    intr = inp.intrinsics
    prox_f = _warp_proximity(inp, f)
    gathered = []
    for g, frame_g in enumerate(inp.frames):
        if g == f:
            continue
        pose_gf = frame_g.pose.inverse().compose(inp.frames[f].pose)
        corr = warp(prox_f, pose_gf, intr)
        prox_g = _warp_proximity(inp, g)
        weight = validity_and_slant(
            corr, prox_f, prox_g, intr,
            occlusion_tau=occlusion_tau_rel * prox_f.avg_depth,
        )
        probs_g = softmax_probs(predict_semantics(frame_g.bundle, np.zeros(frame_g.bundle.code_size)))
        sampled, ok = kernels.bilinear_volume_values(probs_g, corr.warped[:, 0], corr.warped[:, 1])
        usable = (weight > 0) & ok
        h, w = prox_f.values.shape
        gathered.append((sampled.reshape(h, w, -1), usable.reshape(h, w)))
    return gathered


def fuse_multiplicative(inp: FusionInput, occlusion_tau_rel: float = 0.05) -> FusionResult:
    """Per-pixel product of corresponding probabilities, renormalized.

    Pixels whose product collapses to zero fall back to the frame's own
    probabilities and are flagged.
    """
    logits_init = [predict_semantics(f.bundle, np.zeros(f.bundle.code_size)) for f in inp.frames]
    fused_logits = []
    flags = []
    for f in range(len(inp.frames)):
        own = softmax_probs(logits_init[f])
        acc = own.copy()
        for sampled, usable in _gathered_probs(inp, f, occlusion_tau_rel):
            acc[usable] *= sampled[usable]
        total = acc.sum(axis=-1, keepdims=True)
        dead = total[..., 0] <= 0.0
        acc = np.where(dead[..., None], own, acc / np.maximum(total, 1e-300))
        fused_logits.append(np.log(np.maximum(acc, 1e-300)))
        flags.append(dead)
    return _result_from_logits(logits_init, fused_logits, fallback=flags)


def fuse_average(inp: FusionInput, occlusion_tau_rel: float = 0.05) -> FusionResult:
    """Arithmetic mean of corresponding probabilities (stays on the simplex)."""
    logits_init = [predict_semantics(f.bundle, np.zeros(f.bundle.code_size)) for f in inp.frames]
    fused_logits = []
    for f in range(len(inp.frames)):
        own = softmax_probs(logits_init[f])
        acc = own.copy()
        count = np.ones(own.shape[:2])
        for sampled, usable in _gathered_probs(inp, f, occlusion_tau_rel):
            acc[usable] += sampled[usable]
            count[usable] += 1
        acc = acc / count[..., None]
        fused_logits.append(np.log(np.maximum(acc, 1e-300)))
    return _result_from_logits(logits_init, fused_logits)


@dataclass(frozen=True)
class SegMetrics:
    pixel_accuracy: float
    class_accuracy: float
    miou: float
    per_class_iou: np.ndarray  # NaN for classes absent from the ground truth
    valid_count: int


def compute_metrics(
    pred: np.ndarray,
    gt: np.ndarray,
    ignore_mask: np.ndarray | None = None,
    class_count: int | None = None,
) -> SegMetrics:
    """Pixel accuracy, mean per-class recall, and mean IoU over present classes."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth shapes differ")
    valid = np.ones(gt.shape, dtype=bool) if ignore_mask is None else ~np.asarray(ignore_mask)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid pixels to evaluate")
    if class_count is None:
        class_count = int(max(pred.max(), gt.max())) + 1

    p = pred[valid]
    g = gt[valid]
    pixel_acc = float(np.mean(p == g))
    recalls = []
    ious = np.full(class_count, np.nan)
    for c in range(class_count):
        gt_c = g == c
        if not gt_c.any():
            continue
        pred_c = p == c
        tp = float(np.sum(gt_c & pred_c))
        recalls.append(tp / float(gt_c.sum()))
        union = float(np.sum(gt_c | pred_c))
        ious[c] = tp / union
    present = ~np.isnan(ious)
    return SegMetrics(
        pixel_accuracy=pixel_acc,
        class_accuracy=float(np.mean(recalls)),
        miou=float(np.nanmean(ious[present])),
        per_class_iou=ious,
        valid_count=n_valid,
    )
