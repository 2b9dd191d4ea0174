"""Keyframe-based monocular dense semantic SLAM at desk scale.

Front-end: every incoming frame is aligned to the last keyframe with
photometric-only Gauss-Newton on a coarse-to-fine pyramid, initialized by a
constant-velocity model. Back-end: when the tracked motion or overlap
crosses a threshold, the frame becomes a keyframe (codes start at zero,
pose from tracking) and the sliding window is re-optimized with the
three-phase mapping schedule over all co-visible pairs. The first keyframe
is the gauge and its pose is never touched. There is no relocalization:
losing track ends the run with a report.

Tracking and mapping alternate in one thread; mapping works on the window
keyframe objects while tracking only ever reads the last published
keyframe's pose, image, and decoded depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .decoder import DecoderBundle, predict_depth
from .geometry import Intrinsics, Pose, ProximityMap
from .residuals import warp
from .solver import (
    FrameState,
    Problem,
    SolveReport,
    SolverConfig,
    SolverError,
    add_prior,
    gauss_newton,
    schedule_mapping_pass,
)


@dataclass
class SlamConfig:
    solver: SolverConfig = field(default_factory=lambda: SolverConfig.noise_normalized())
    pyramid_levels: int = 3
    track_iterations: int = 15
    mapping_iterations: int = 12
    window_size: int = 5
    keyframe_rotation_deg: float = 10.0
    keyframe_translation: float = 0.15
    keyframe_min_overlap: float = 0.6
    covisibility_min_overlap: float = 0.3
    lost_min_overlap: float = 0.2
    lost_max_residual: float = 0.12  # mean |photometric| after alignment


@dataclass
class Keyframe:
    kf_id: int
    image: np.ndarray
    pose: Pose  # world-from-camera
    code_depth: np.ndarray
    code_sem: np.ndarray
    bundle: DecoderBundle
    links: set[int] = field(default_factory=set)
    frame_id: int = -1  # source frame in the input sequence

    def __post_init__(self):
        if self.frame_id < 0:
            self.frame_id = self.kf_id

    def decoded_proximity(self) -> ProximityMap:
        return predict_depth(self.bundle, self.code_depth).proximity


@dataclass
class MapWindow:
    max_size: int = 5
    keyframes: list[Keyframe] = field(default_factory=list)
    gauge_id: int = 0

    def add(self, kf: Keyframe):
        self.keyframes.append(kf)
        if len(self.keyframes) > self.max_size:
            dropped = self.keyframes.pop(0)
            if dropped.kf_id == self.gauge_id:
                self.gauge_id = self.keyframes[0].kf_id

    @property
    def last(self) -> Keyframe:
        return self.keyframes[-1]


def downsample2(image: np.ndarray) -> np.ndarray:
    h, w = image.shape
    return image[: h - h % 2, : w - w % 2].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def build_pyramid(image: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [np.asarray(image, dtype=np.float64)]
    for _ in range(levels - 1):
        pyr.append(downsample2(pyr[-1]))
    return pyr


@dataclass
class TrackResult:
    pose: Pose  # frame-from-keyframe: x_frame = pose * x_keyframe
    valid_ratio: float
    mean_residual: float
    lost: bool
    reason: str
    reports: list[SolveReport]


def track(
    image: np.ndarray,
    keyframe: Keyframe,
    intrinsics: Intrinsics,
    config: SlamConfig,
    init_pose: Pose | None = None,
) -> TrackResult:
    """Photometric pyramid alignment of a frame against the last keyframe.

    Only the relative pose moves; the keyframe's decoded depth provides the
    warp. Divergence (cost not reducible at the finest level with a large
    remaining residual) or a collapsed overlap raises the lost flag.
    """
    rel = init_pose or Pose.identity()  # frame-from-keyframe
    kf_prox_full = keyframe.decoded_proximity()

    prox_pyr = [kf_prox_full.values]
    img_kf_pyr = build_pyramid(keyframe.image, config.pyramid_levels)
    img_f_pyr = build_pyramid(image, config.pyramid_levels)
    intr_pyr = [intrinsics]
    for _ in range(config.pyramid_levels - 1):
        prox_pyr.append(downsample2(prox_pyr[-1]))
        intr_pyr.append(intr_pyr[-1].scaled(2.0))

    reports = []
    for level in reversed(range(config.pyramid_levels)):
        frames = [
            FrameState(
                Pose.identity(),
                np.zeros(1),
                np.zeros(1),
                image=img_kf_pyr[level],
                pose_frozen=True,
                depth_frozen=True,
                sem_frozen=True,
                fixed_prox=ProximityMap(prox_pyr[level], kf_prox_full.avg_depth),
            ),
            FrameState(
                rel.inverse(),  # world(=keyframe)-from-frame
                np.zeros(1),
                np.zeros(1),
                image=img_f_pyr[level],
                depth_frozen=True,
                sem_frozen=True,
            ),
        ]
        problem = Problem(frames, intr_pyr[level], config=config.solver)
        problem.add_pair("photo", 0, 1)
        report = gauss_newton(
            problem, config.track_iterations, kinds={"photo"}, active_groups={"pose"}
        )
        reports.append(report)
        rel = frames[1].pose.inverse()

    # final alignment quality at full resolution
    corr = warp(kf_prox_full, rel, intrinsics)
    valid_ratio = corr.valid_ratio
    sampled, _, _, ok = kernels.bilinear_map(image, corr.warped[:, 0], corr.warped[:, 1])
    ui = corr.pixels_u.astype(np.intp)
    vi = corr.pixels_v.astype(np.intp)
    live = corr.valid & ok
    mean_res = float(np.mean(np.abs(keyframe.image[vi, ui][live] - sampled[live]))) if live.any() else 1.0

    lost = False
    reason = "ok"
    if valid_ratio < config.lost_min_overlap:
        lost, reason = True, f"overlap collapsed ({valid_ratio:.2f})"
    elif mean_res > config.lost_max_residual:
        lost, reason = True, f"residual too high after alignment ({mean_res:.3f})"
    return TrackResult(rel, valid_ratio, mean_res, lost, reason, reports)


def should_spawn_keyframe(
    rel_pose: Pose, valid_ratio: float, config: SlamConfig
) -> tuple[bool, str]:
    """Spawn on rotation, translation, or overlap thresholds."""
    angle = np.rad2deg(rel_pose.rotation_angle())
    dist = float(np.linalg.norm(rel_pose.translation))
    if angle > config.keyframe_rotation_deg:
        return True, f"rotation {angle:.1f} deg"
    if dist > config.keyframe_translation:
        return True, f"translation {dist:.3f} m"
    if valid_ratio < config.keyframe_min_overlap:
        return True, f"overlap {valid_ratio:.2f}"
    return False, "within thresholds"


def _overlap_ratio(kf_a: Keyframe, kf_b: Keyframe, intrinsics: Intrinsics) -> float:
    pose_ba = kf_b.pose.inverse().compose(kf_a.pose)
    corr = warp(kf_a.decoded_proximity(), pose_ba, intrinsics)
    return corr.valid_ratio


def map_update(window: MapWindow, intrinsics: Intrinsics, config: SlamConfig) -> list[SolveReport]:
    """Joint three-phase optimization of the window; updates keyframes in place.

    Pairwise photo/geo/sem blocks are added between every co-visible pair at
    the current estimates; the gauge keyframe's pose stays frozen. On a
    non-finite solve the window is rolled back unchanged.
    """
    kfs = window.keyframes
    if len(kfs) < 2:
        return []
    frames = [
        FrameState(
            kf.pose,
            kf.code_depth,
            kf.code_sem,
            bundle=kf.bundle,
            image=kf.image,
            pose_frozen=(kf.kf_id == window.gauge_id),
        )
        for kf in kfs
    ]
    problem = Problem(frames, intrinsics, config=config.solver)
    n_pairs = 0
    for i in range(len(kfs)):
        for j in range(i + 1, len(kfs)):
            if _overlap_ratio(kfs[i], kfs[j], intrinsics) > config.covisibility_min_overlap:
                for kind in ("photo", "geo", "sem"):
                    problem.add_pair(kind, i, j)
                kfs[i].links.add(kfs[j].kf_id)
                kfs[j].links.add(kfs[i].kf_id)
                n_pairs += 1
    if n_pairs == 0:
        return []
    for k in range(len(kfs)):
        add_prior(problem, k, "depth")
        add_prior(problem, k, "semantic")

    snapshot = [(kf.pose, kf.code_depth.copy(), kf.code_sem.copy()) for kf in kfs]
    try:
        reports = schedule_mapping_pass(problem, config.mapping_iterations)
    except SolverError:
        for kf, (pose, cd, cs) in zip(kfs, snapshot):
            kf.pose, kf.code_depth, kf.code_sem = pose, cd, cs
        raise
    for kf, state in zip(kfs, frames):
        kf.pose = state.pose
        kf.code_depth = state.code_depth
        kf.code_sem = state.code_sem
    return reports


def export_map(window: MapWindow, intrinsics: Intrinsics, out_dir) -> None:
    """Write per-keyframe maps, poses, and a labeled world-frame point cloud.

    Per keyframe: metric depth (PFM exact + normalized PGM preview), label
    maps (raw-id PGM + palette PPM), and per-class logit PFMs. Poses go to
    ``keyframes.txt`` with full float precision; the cloud is ASCII PLY with
    a class id per point.
    """
    import json
    from pathlib import Path

    from .dataset import pose_line
    from .decoder import argmax_labels, predict_semantics, softmax_probs
    from .geometry import backproject
    from .image_io import write_labels, write_pfm, write_pgm, write_pgm_normalized

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cloud: list[str] = []
    names = []
    for kf in window.keyframes:
        prox = kf.decoded_proximity()
        depth, finite = prox.to_depth()
        logits = predict_semantics(kf.bundle, kf.code_sem)
        labels = argmax_labels(softmax_probs(logits))
        stem = f"kf_{kf.frame_id:04d}"
        names.append(stem)
        write_pfm(out / f"{stem}_depth.pfm", depth)
        write_pgm_normalized(out / f"{stem}_depth.pgm", depth)
        write_pgm(out / f"{stem}_labels.pgm", labels.astype(np.uint8))
        write_labels(out / f"{stem}_labels.ppm", labels, kf.bundle.class_count)
        for c in range(kf.bundle.class_count):
            write_pfm(out / f"{stem}_logits_class{c}.pfm", logits[:, :, c])

        u, v = intrinsics.pixel_grid()
        pts_cam = backproject(np.stack([u, v], axis=-1), depth.ravel(), intrinsics)
        keep = finite.ravel()
        pts_world = kf.pose.transform(pts_cam[keep])
        for p, cls in zip(pts_world, labels.ravel()[keep]):
            cloud.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {cls}")

    lines = [pose_line(kf.frame_id, kf.pose) for kf in window.keyframes]
    (out / "keyframes.txt").write_text("\n".join(lines) + "\n")
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\nproperty float y\nproperty float z\nproperty uchar class\n"
        "end_header\n"
    )
    (out / "cloud.ply").write_text(header + "\n".join(cloud) + "\n")
    (out / "map_meta.json").write_text(
        json.dumps({"keyframes": names, "points": len(cloud)}, indent=2) + "\n"
    )


@dataclass
class SlamResult:
    trajectory: list[tuple[int, Pose]]  # per input frame, world-from-camera
    keyframes: list[Keyframe]  # all keyframes ever spawned
    window: MapWindow
    mapping_reports: list[list[SolveReport]]
    lost: bool
    lost_reason: str
    keyframe_frame_ids: list[int]


class SlamSystem:
    """Tracking/mapping alternation over a frame stream."""

    def __init__(self, intrinsics: Intrinsics, config: SlamConfig | None = None):
        self.intrinsics = intrinsics
        self.config = config or SlamConfig()
        self.window = MapWindow(max_size=self.config.window_size)
        self.all_keyframes: list[Keyframe] = []
        self.trajectory: list[tuple[int, Pose]] = []
        self.keyframe_frame_ids: list[int] = []
        self.mapping_reports: list[list[SolveReport]] = []
        self._last_rel = Pose.identity()  # frame-from-keyframe at previous frame
        self._last_step = Pose.identity()  # frame-to-frame motion estimate
        self._next_kf_id = 0

    def _spawn(self, frame_id: int, image: np.ndarray, bundle: DecoderBundle, pose: Pose):
        kf = Keyframe(
            kf_id=self._next_kf_id,
            image=np.asarray(image, dtype=np.float64),
            pose=pose,
            code_depth=np.zeros(bundle.code_size),
            code_sem=np.zeros(bundle.code_size),
            bundle=bundle,
            frame_id=frame_id,
        )
        self._next_kf_id += 1
        self.window.add(kf)
        self.all_keyframes.append(kf)
        self.keyframe_frame_ids.append(frame_id)
        self._last_rel = Pose.identity()
        if len(self.window.keyframes) >= 2:
            self.mapping_reports.append(map_update(self.window, self.intrinsics, self.config))

    def run(self, stream) -> SlamResult:
        """Process an iterable of (image, bundle) pairs."""
        lost = False
        reason = ""
        for frame_id, (image, bundle) in enumerate(stream):
            if not self.all_keyframes:
                self._spawn(frame_id, image, bundle, Pose.identity())
                self.trajectory.append((frame_id, Pose.identity()))
                continue
            kf = self.window.last
            init = self._last_step.compose(self._last_rel)
            result = track(image, kf, self.intrinsics, self.config, init_pose=init)
            if result.lost:
                lost, reason = True, result.reason
                break
            self._last_step = result.pose.compose(self._last_rel.inverse())
            self._last_rel = result.pose
            pose_w = kf.pose.compose(result.pose.inverse())
            self.trajectory.append((frame_id, pose_w))
            spawn, _why = should_spawn_keyframe(result.pose, result.valid_ratio, self.config)
            if spawn:
                self._spawn(frame_id, image, bundle, pose_w)
                self.trajectory[-1] = (frame_id, self.window.last.pose)
        return SlamResult(
            trajectory=self.trajectory,
            keyframes=self.all_keyframes,
            window=self.window,
            mapping_reports=self.mapping_reports,
            lost=lost,
            lost_reason=reason,
            keyframe_frame_ids=self.keyframe_frame_ids,
        )
