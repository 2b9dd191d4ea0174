"""Canned synthetic worlds used by the test suites and the CLI presets.

Each builder is a pure function of a seed. Highlights:

* ``lattice_pair``: two fronto-parallel layers under a pure-x baseline whose
  warp lands exactly on the pixel lattice, so every residual vanishes to
  float roundoff at the true codes and pose -- the clean recovery oracle.
* ``ambiguity_world``: a multi-view fusion scene. Later frames mislabel a
  large board (reachably), a foreground chair hides part of the board from
  the reference frame (element-wise fusion cannot reach those pixels), and
  two fragile objects outside the reference view are entangled with weakly
  supported edge modes -- the directions an unregularized optimizer abuses.
* ``stripe_world``: a flat, untextured wall whose painted class stripes are
  the only cue pinning in-plane motion; geometry and photometrics leave it
  unobservable.
* ``slam_sequence``: a textured closed room with a smooth sweep trajectory
  whose per-frame motion matches the target statistics (mean ~6 degrees,
  ~0.15 m), plus a pure-rotation variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import DecoderBundle
from .geometry import Intrinsics, Pose, se3_exp
from .synth import (
    TextureWave,
    AlbedoSpec,
    AmbiguityRegion,
    BundleTruth,
    GroundTruthView,
    PlaneSpec,
    Scene,
    SceneSpec,
    generate_scene,
    make_bundle,
    render_view,
    smooth_mask,
)

DESK_CODE_SIZE = 16
DESK_CLASS_COUNT = 6


def default_intrinsics(width: int = 64, height: int = 48, focal: float = 60.0) -> Intrinsics:
    return Intrinsics(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


@dataclass
class FrameData:
    """One synthetic frame: rendering, bundle, and the codes reaching its truth."""

    view: GroundTruthView
    bundle: DecoderBundle
    truth: BundleTruth


def _albedo(rng: np.random.Generator, base=0.52, amplitude=0.24) -> AlbedoSpec:
    return AlbedoSpec(
        base=base,
        amplitude=amplitude,
        freq_u=float(rng.uniform(1.2, 3.0)),
        freq_v=float(rng.uniform(1.0, 2.5)),
        phase_u=float(rng.uniform(0, 1)),
        phase_v=float(rng.uniform(0, 1)),
    )


# ---------------------------------------------------------------------------
# lattice-aligned two-view pairs


@dataclass
class LatticePair:
    scene: Scene
    intrinsics: Intrinsics
    frames: list[FrameData]  # two frames; frame 0 at identity
    pose_b: Pose  # true world-from-camera pose of frame 1
    baseline: float


def lattice_pair(seed: int, *, code_size: int = DESK_CODE_SIZE) -> LatticePair:
    """Two fronto-parallel layers at 2 m and 3 m, baseline 0.1 m along x.

    fx = 60 makes the true disparities exactly 3 px and 2 px, so ground-truth
    warps hit integer pixels and bilinear lookups are exact.
    """
    rng = np.random.default_rng(seed)
    intr = default_intrinsics()
    wall = PlaneSpec(
        origin=(-2.3, -1.6, 3.0),
        edge_u=(5.0, 0.0, 0.0),
        edge_v=(0.0, 3.2, 0.0),
        class_id=1,
        albedo=_albedo(rng, base=0.5, amplitude=0.22),
    )
    panel = PlaneSpec(
        origin=(-0.55, -0.45, 2.0),
        edge_u=(0.9, 0.0, 0.0),
        edge_v=(0.0, 0.9, 0.0),
        class_id=2,
        albedo=_albedo(rng, base=0.58, amplitude=0.22),
    )
    spec = SceneSpec(
        seed=seed,
        planes=(wall, panel),
        class_count=DESK_CLASS_COUNT,
        extents=(-1.5, 1.5, -1.0, 1.0, -0.5, 1.0),
    )
    scene = generate_scene(spec)
    pose_a = Pose.identity()
    pose_b = Pose(translation=np.array([0.1, 0.0, 0.0]))

    frames = []
    for k, pose in enumerate((pose_a, pose_b)):
        view = render_view(scene, pose, intr)
        sub = np.random.default_rng((seed, 17, k))
        code_d = sub.normal(0.0, 0.5, code_size)
        code_s = sub.normal(0.0, 0.25, code_size)
        bundle, truth = make_bundle(
            view, code_d, code_s, seed=int(sub.integers(2**31)), class_count=DESK_CLASS_COUNT
        )
        frames.append(FrameData(view, bundle, truth))
    return LatticePair(scene, intr, frames, pose_b, 0.1)


# ---------------------------------------------------------------------------
# general textured two-view pairs (Jacobian checks, tracking)


def textured_room_spec(seed: int) -> SceneSpec:
    """Closed textured box with coplanar painted panels.

    The room is convex, so there are no occlusion boundaries from inside:
    depth is continuous everywhere, corner views mix three plane
    orientations (ideal 6-DOF conditioning), and the only image edges are
    texture and label boundaries. Panels are painted *onto* the walls
    (exactly coplanar) for semantic variety without depth steps.
    """
    rng = np.random.default_rng((seed, 5))
    x0, x1 = -2.4, 2.4
    y0, y1 = -1.3, 1.3
    z0, z1 = -2.4, 3.4

    def wall_with_panel(origin, eu, ev, wall_class, panel_class):
        """One wall split into a painted central panel and its surround."""
        origin = np.asarray(origin, float)
        eu = np.asarray(eu, float)
        ev = np.asarray(ev, float)
        s0, s1 = rng.uniform(0.15, 0.3), rng.uniform(0.6, 0.85)
        return [
            PlaneSpec(tuple(origin), tuple(eu * s0), tuple(ev), wall_class, _albedo(rng)),
            PlaneSpec(tuple(origin + eu * s1), tuple(eu * (1 - s1)), tuple(ev), wall_class, _albedo(rng)),
            PlaneSpec(
                tuple(origin + eu * s0), tuple(eu * (s1 - s0)), tuple(ev), panel_class,
                _albedo(rng, amplitude=0.3),
            ),
        ]

    planes = [
        # floor and ceiling close the box: every ray hits something
        PlaneSpec((x0, y1, z0), (x1 - x0, 0, 0), (0, 0, z1 - z0), 0, _albedo(rng)),
        PlaneSpec((x0, y0, z0), (x1 - x0, 0, 0), (0, 0, z1 - z0), 0, _albedo(rng)),
    ]
    planes += wall_with_panel((x0, y0, z1), (x1 - x0, 0, 0), (0, y1 - y0, 0), 1, 2)
    planes += wall_with_panel((x0, y0, z0), (x1 - x0, 0, 0), (0, y1 - y0, 0), 1, 3)
    planes += wall_with_panel((x0, y0, z0), (0, 0, z1 - z0), (0, y1 - y0, 0), 1, 4)
    planes += wall_with_panel((x1, y0, z0), (0, 0, z1 - z0), (0, y1 - y0, 0), 1, 5)

    # continuous world-space texture and flat lighting: the rendered image
    # has no intensity steps anywhere (class boundaries are labels only), so
    # direct alignment sees a smooth, unbiased cost surface
    waves = []
    for _ in range(5):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        omega = direction * rng.uniform(1.5, 4.5)
        waves.append(TextureWave(float(rng.uniform(0.045, 0.075)), tuple(omega), float(rng.uniform(0, 2 * np.pi))))
    return SceneSpec(
        seed=seed,
        planes=tuple(planes),
        class_count=DESK_CLASS_COUNT,
        extents=(x0 + 0.6, x1 - 0.6, y0 + 0.5, y1 - 0.5, z0 + 0.6, z1 - 1.2),
        ambient=1.0,
        texture_field=tuple(waves),
    )


@dataclass
class TwoViewWorld:
    scene: Scene
    intrinsics: Intrinsics
    frames: list[FrameData]
    pose_b: Pose


def jacobian_pair(seed: int, *, code_size: int = DESK_CODE_SIZE) -> TwoViewWorld:
    """General textured two-view pair with a random small relative motion."""
    rng = np.random.default_rng((seed, 29))
    intr = default_intrinsics()
    scene = generate_scene(textured_room_spec(seed))
    pose_a = Pose.identity()
    delta = np.concatenate(
        [rng.uniform(-0.08, 0.08, 3), rng.uniform(-1, 1, 3) * np.deg2rad(4.0)]
    )
    pose_b = se3_exp(delta)
    frames = []
    for k, pose in enumerate((pose_a, pose_b)):
        view = render_view(scene, pose, intr)
        sub = np.random.default_rng((seed, 31, k))
        bundle, truth = make_bundle(
            view,
            sub.normal(0.0, 0.4, code_size),
            sub.normal(0.0, 0.25, code_size),
            seed=int(sub.integers(2**31)),
            class_count=DESK_CLASS_COUNT,
        )
        frames.append(FrameData(view, bundle, truth))
    return TwoViewWorld(scene, intr, frames, pose_b)


# ---------------------------------------------------------------------------
# ambiguity fusion suite

BOARD_CLASS = 1
SCREEN_CLASS = 2  # the wrong class; never present in ground truth
POSTER_CLASS = 3
LAMP_CLASS = 4
CHAIR_CLASS = 5

FRAME_OFFSETS = (0.0, 0.55, 0.80, 1.05)


@dataclass
class AmbiguityWorld:
    scene: Scene
    intrinsics: Intrinsics
    frames: list[FrameData]
    board_class: int = BOARD_CLASS
    fragile_classes: tuple[int, ...] = (POSTER_CLASS, LAMP_CLASS)

    def board_mask(self, k: int) -> np.ndarray:
        return self.frames[k].view.labels == self.board_class


def _rim(mask: np.ndarray, half: str) -> np.ndarray:
    """Inner 2 px rim of a mask, restricted to its left or right half."""
    soft = smooth_mask(~mask, iterations=2)
    rim = mask & (soft > 1e-9)
    cols = np.arange(mask.shape[1])[None, :]
    occupied = np.flatnonzero(mask.any(axis=0))
    mid = (occupied[0] + occupied[-1]) / 2.0
    side = cols <= mid if half == "left" else cols > mid
    return rim & side


def ambiguity_world(seed: int, n_frames: int = 4, *, code_size: int = DESK_CODE_SIZE) -> AmbiguityWorld:
    """Fusion scene: a misread board, an occluding chair, and fragile objects.

    Frame 0 (the reference) is clean and never sees the poster and lamp.
    Later frames label the board as "screen" at zero code, reachably, and
    carry two entangled modes that couple the board's boundary band (weak,
    systematically noisy support) with the poster and lamp regions (their
    margins are modest). A zero-code prior keeps those modes parked; without
    one, fitting boundary mixing flips the fragile objects.
    """
    if not 1 <= n_frames <= len(FRAME_OFFSETS):
        raise ValueError(f"n_frames must be 1..{len(FRAME_OFFSETS)}")
    rng = np.random.default_rng((seed, 43))
    intr = default_intrinsics()
    planes = (
        PlaneSpec((-2.4, -2.0, 3.2), (6.6, 0, 0), (0, 4.0, 0), 0, _albedo(rng)),
        PlaneSpec((-0.85, -0.55, 3.05), (1.7, 0, 0), (0, 1.05, 0), BOARD_CLASS, _albedo(rng)),
        PlaneSpec(
            (1.78, -0.85, 3.05), (0.64, 0, 0), (0, 0.75, 0), POSTER_CLASS,
            _albedo(rng), logit_margin=2.6,
        ),
        PlaneSpec(
            (1.80, 0.15, 3.05), (0.60, 0, 0), (0, 0.70, 0), LAMP_CLASS,
            _albedo(rng), logit_margin=2.6,
        ),
        PlaneSpec((-0.12, -0.25, 2.0), (0.40, 0, 0), (0, 0.75, 0), CHAIR_CLASS, _albedo(rng)),
    )
    spec = SceneSpec(
        seed=seed,
        planes=planes,
        class_count=DESK_CLASS_COUNT,
        extents=(-0.5, 1.6, -0.5, 0.5, -0.5, 1.2),
    )
    scene = generate_scene(spec)
    margins = np.full(DESK_CLASS_COUNT, 5.0)
    for plane in planes:
        margins[plane.class_id] = plane.logit_margin

    frames = []
    for k in range(n_frames):
        pose = Pose(translation=np.array([FRAME_OFFSETS[k], 0.0, 0.0]))
        view = render_view(scene, pose, intr)
        sub = np.random.default_rng((seed, 61, k))
        code_d = sub.normal(0.0, 0.3, code_size)
        code_s = np.zeros(code_size)
        if k == 0:
            code_s[:code_size] = sub.normal(0.0, 0.25, code_size)
            bundle, truth = make_bundle(
                view, code_d, code_s,
                seed=int(sub.integers(2**31)),
                class_count=DESK_CLASS_COUNT,
                class_margins=margins,
            )
        else:
            board = view.labels == BOARD_CLASS
            poster = view.labels == POSTER_CLASS
            lamp = view.labels == LAMP_CLASS
            for name, mask in (("board", board), ("poster", poster), ("lamp", lamp)):
                if not mask.any():
                    raise ValueError(f"{name} not visible in frame {k}")
            # later frames misread the board toward different classes so the
            # element-wise baselines cannot simply multiply the error away
            wrong = SCREEN_CLASS if k % 2 == 1 else CHAIR_CLASS
            board_hard = board.astype(np.float64)
            extra = []
            for fragile_mask, fragile_class in ((poster, POSTER_CLASS), (lamp, LAMP_CLASS)):
                # a weak copy of the board-fix direction (same spatial profile
                # as the corruption mode) entangled with a fragile object:
                # without a prior it soaks up a share of the large board
                # correction and flips the object, with one it stays parked
                col = np.zeros(view.labels.shape + (DESK_CLASS_COUNT,))
                col[:, :, BOARD_CLASS] += 0.06 * board_hard
                col[:, :, wrong] -= 0.06 * board_hard
                blob = smooth_mask(fragile_mask)
                col[:, :, SCREEN_CLASS] += 0.22 * blob
                col[:, :, fragile_class] -= 0.22 * blob
                extra.append(col)
            n_reserved = 1 + len(extra)
            code_s[: code_size - n_reserved] = sub.normal(0.0, 0.25, code_size - n_reserved)
            bundle, truth = make_bundle(
                view, code_d, code_s,
                seed=int(sub.integers(2**31)),
                class_count=DESK_CLASS_COUNT,
                ambiguity=(AmbiguityRegion(BOARD_CLASS, wrong, strength=2.4, gain=1.45),),
                extra_columns=tuple(extra),
                class_margins=margins,
            )
        frames.append(FrameData(view, bundle, truth))
    return AmbiguityWorld(scene, intr, frames)


# ---------------------------------------------------------------------------
# textureless striped wall (semantics-aided alignment)


@dataclass
class StripeWorld:
    scene: Scene
    intrinsics: Intrinsics
    frames: list[FrameData]
    pose_b: Pose
    init_pose_b: Pose  # perturbed starting point for frame 1


def stripe_world(seed: int, *, code_size: int = DESK_CODE_SIZE) -> StripeWorld:
    """Flat untextured wall with class stripes; only semantics pin the slide.

    The wall is fronto-parallel and the albedo constant: photometric and
    geometric residuals ignore in-plane translation and yaw, so phase 1
    leaves the perturbed initialization largely in place. Class stripes
    painted on the same plane give the semantic term gradients that lock
    those degrees of freedom.
    """
    rng = np.random.default_rng((seed, 71))
    intr = default_intrinsics()
    flat = AlbedoSpec(base=0.55, amplitude=0.0)
    b1 = float(rng.uniform(-0.75, -0.3))
    b2 = float(rng.uniform(0.25, 0.7))
    h1 = float(rng.uniform(-0.35, 0.3))
    x0, x1 = -1.9, 2.1
    y0, y1 = -1.1, 1.1
    # 2 x 3 grid of painted classes: vertical boundaries pin sideways motion,
    # the horizontal boundary pins vertical motion
    planes = tuple(
        PlaneSpec((xa, ya, 2.5), (xb - xa, 0, 0), (0, yb - ya, 0), cls, flat)
        for (xa, xb, ya, yb, cls) in (
            (x0, b1, y0, h1, 1),
            (b1, b2, y0, h1, 2),
            (b2, x1, y0, h1, 3),
            (x0, b1, h1, y1, 4),
            (b1, b2, h1, y1, 5),
            (b2, x1, h1, y1, 0),
        )
    )
    spec = SceneSpec(
        seed=seed,
        planes=planes,
        class_count=DESK_CLASS_COUNT,
        extents=(-0.6, 0.8, -0.5, 0.5, -0.5, 0.8),
    )
    scene = generate_scene(spec)
    pose_a = Pose.identity()
    pose_b = Pose(translation=np.array([0.12, 0.0, 0.0]))

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    t_dir = rng.normal(size=3)
    t_dir /= np.linalg.norm(t_dir)
    perturbation = np.concatenate([0.05 * t_dir, np.deg2rad(2.0) * axis])
    init_pose_b = se3_exp(perturbation).compose(pose_b)

    frames = []
    for k, pose in enumerate((pose_a, pose_b)):
        view = render_view(scene, pose, intr)
        sub = np.random.default_rng((seed, 73, k))
        bundle, truth = make_bundle(
            view,
            sub.normal(0.0, 0.4, code_size),
            sub.normal(0.0, 0.25, code_size),
            seed=int(sub.integers(2**31)),
            class_count=DESK_CLASS_COUNT,
        )
        frames.append(FrameData(view, bundle, truth))
    return StripeWorld(scene, intr, frames, pose_b, init_pose_b)


# ---------------------------------------------------------------------------
# sequences for tracking / SLAM


@dataclass
class SequenceWorld:
    scene: Scene
    intrinsics: Intrinsics
    frames: list[FrameData]
    poses: list[Pose]  # ground-truth world-from-camera per frame


def sequence_poses(n_frames: int, *, pure_rotation: bool = False, period: int = 30) -> list[Pose]:
    """Orbit with per-frame motion at the target statistics (~5.95 deg / ~0.149 m).

    Constant cruise speed around a circle inside the room with a matching
    yaw sweep, eased in over the first frames so a constant-velocity motion
    model is a good initialization from the very start. The period is fixed:
    per-frame motion does not depend on the requested length, and 30 frames
    close the positional loop.
    """
    # arc-length profile with a 3-frame ease-in, renormalized so the mean
    # per-frame motion stays on target
    speeds = np.minimum(1.0, (np.arange(period) + 0.5) / 3.0)
    arc = np.concatenate([[0.0], np.cumsum(speeds)])
    arc = arc / arc[-1]
    mean_step = 1.0 / period

    radius = 0.149 / (2.0 * np.pi * mean_step)  # cruise step ~0.149 m
    yaw_total = np.deg2rad(5.95) / mean_step
    poses = []
    for t in range(n_frames):
        a = arc[min(t, period)] if t < len(arc) else t / period
        if pure_rotation:
            trans = np.zeros(3)
            yaw = np.deg2rad(40.0) * (1.0 - np.cos(2.0 * np.pi * t / period))
            pitch = 0.0
        else:
            angle = 2.0 * np.pi * a
            trans = np.array([radius * np.sin(angle), 0.0, 0.25 - radius * np.cos(angle) + radius])
            yaw = yaw_total * (a - 0.5)
            pitch = np.deg2rad(3.0) * np.sin(2.0 * np.pi * a)
        rot = se3_exp([0, 0, 0, 0, yaw, 0]).compose(se3_exp([0, 0, 0, pitch, 0, 0]))
        poses.append(Pose(rot.quaternion, trans))
    return poses


def slam_sequence(
    seed: int,
    n_frames: int = 30,
    *,
    pure_rotation: bool = False,
    code_size: int = DESK_CODE_SIZE,
) -> SequenceWorld:
    """Textured-room sequence with per-frame bundles.

    A wider lens than the two-view worlds: the extra perspective diversity
    separates sideways translation from yaw in photometric-only tracking.
    """
    intr = default_intrinsics(focal=42.0)
    scene = generate_scene(textured_room_spec(seed))
    poses = sequence_poses(n_frames, pure_rotation=pure_rotation)
    frames = []
    for t, pose in enumerate(poses):
        view = render_view(scene, pose, intr)
        sub = np.random.default_rng((seed, 97, t))
        bundle, truth = make_bundle(
            view,
            sub.normal(0.0, 0.3, code_size),
            sub.normal(0.0, 0.25, code_size),
            seed=int(sub.integers(2**31)),
            class_count=DESK_CLASS_COUNT,
        )
        frames.append(FrameData(view, bundle, truth))
    return SequenceWorld(scene, intr, frames, poses)
