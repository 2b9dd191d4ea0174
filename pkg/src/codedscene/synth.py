"""Deterministic synthetic scenes with exact ground truth.

Scenes are collections of textured, labeled rectangles rendered by ray
casting, so depth, labels, and normals are exact. Decoder bundles are
synthesized *backwards* from the rendered ground truth: smooth random
Jacobian modes are drawn first, then the zero-code tensors are set to

    D0 = gt_proximity - J_d c_d,      S0 = gt_logits - J_s c_s,

which makes the ground truth exactly reachable at a known code -- the
global optimum of every optimization test is known by construction.

Ambiguity is injected by reserving dedicated Jacobian columns localized on
a chosen class region and shifting S0 along them: the zero-code prediction
becomes confidently wrong there while the truth stays inside the code's
span. The code that reproduces the ground truth (including the undo of any
injected corruption) is returned next to the bundle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decoder import DecoderBundle
from .geometry import (
    PROXIMITY_EPS,
    Intrinsics,
    Pose,
    pixel_rays,
    proximity_from_depth,
)

RAY_NEAR = 0.05
DEFAULT_LOGIT_MARGIN = 5.0
PIXEL_FILTER_SIGMA = 0.6  # Gaussian texture prefilter, in pixels


@dataclass(frozen=True)
class AlbedoSpec:
    """Smooth sinusoidal albedo in rectangle coordinates; amplitude 0 = flat."""

    base: float = 0.55
    amplitude: float = 0.2
    freq_u: float = 2.0
    freq_v: float = 1.5
    phase_u: float = 0.0
    phase_v: float = 0.0

    def evaluate(
        self,
        s: np.ndarray,
        t: np.ndarray,
        att_u: np.ndarray | float = 1.0,
        att_v: np.ndarray | float = 1.0,
    ) -> np.ndarray:
        """Albedo at rectangle coordinates, with optional per-sample filtering.

        ``att_u`` / ``att_v`` attenuate the two wave components; the renderer
        passes the Gaussian prefilter response for the local on-screen
        frequency so oblique surfaces stay band-limited (texture filtering).
        """
        wave = 0.5 * (
            att_u * np.sin(2 * np.pi * (self.freq_u * s + self.phase_u))
            + att_v * np.sin(2 * np.pi * (self.freq_v * t + self.phase_v))
        )
        return self.base + self.amplitude * wave


@dataclass(frozen=True)
class PlaneSpec:
    """Finite rectangle: origin + s * edge_u + t * edge_v, s, t in [0, 1]."""

    origin: tuple[float, float, float]
    edge_u: tuple[float, float, float]
    edge_v: tuple[float, float, float]
    class_id: int
    albedo: AlbedoSpec = field(default_factory=AlbedoSpec)
    logit_margin: float = DEFAULT_LOGIT_MARGIN


@dataclass(frozen=True)
class TextureWave:
    """One component of a world-space albedo field: a sin(omega . p + phase)."""

    amplitude: float
    omega: tuple[float, float, float]  # rad per meter
    phase: float


@dataclass(frozen=True)
class SceneSpec:
    """Deterministic scene description; same seed means identical scene.

    Two texture modes: per-plane rectangle albedo (default), or a global
    ``texture_field`` of smooth 3-D waves evaluated at the hit point. The
    field is continuous across every plane boundary and corner, so rendered
    images have no intensity steps at all; tracking-grade sequences use it.
    """

    seed: int
    planes: tuple[PlaneSpec, ...]
    class_count: int
    extents: tuple[float, float, float, float, float, float]  # xmin..zmax, valid camera box
    light_dir: tuple[float, float, float] = (0.35, 0.6, 0.72)
    ambient: float = 0.62
    texture_field: tuple[TextureWave, ...] | None = None
    field_base: float = 0.52


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    normals: np.ndarray  # (P, 3) unit, world frame
    offsets: np.ndarray  # (P,) plane offsets n . x = d
    shades: np.ndarray  # (P,) view-independent Lambertian factor

    @property
    def planes(self) -> tuple[PlaneSpec, ...]:
        return self.spec.planes

    @property
    def class_count(self) -> int:
        return self.spec.class_count


def generate_scene(spec: SceneSpec) -> Scene:
    """Resolve plane geometry and lighting; pure function of the spec."""
    if not spec.planes:
        raise ValueError("scene has no planes")
    normals = []
    offsets = []
    shades = []
    light = np.asarray(spec.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    for plane in spec.planes:
        if not (0 <= plane.class_id < spec.class_count):
            raise ValueError(f"class id {plane.class_id} out of range")
        eu = np.asarray(plane.edge_u, dtype=np.float64)
        ev = np.asarray(plane.edge_v, dtype=np.float64)
        n = np.cross(eu, ev)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("degenerate plane")
        n = n / norm
        normals.append(n)
        offsets.append(float(n @ np.asarray(plane.origin)))
        # two-sided lighting keeps shading independent of the viewpoint
        shades.append(spec.ambient + (1.0 - spec.ambient) * abs(float(n @ light)))
    return Scene(spec, np.array(normals), np.array(offsets), np.array(shades))


@dataclass(frozen=True)
class GroundTruthView:
    """One rendered view: exact image, depth, labels, and camera-frame normals."""

    image: np.ndarray  # (H, W) grayscale in [0, 1]
    depth: np.ndarray  # (H, W) meters, camera z
    labels: np.ndarray  # (H, W) class ids
    normals: np.ndarray  # (H, W, 3) camera frame, oriented toward the camera
    pose: Pose  # world-from-camera
    intrinsics: Intrinsics


def render_view(scene: Scene, pose: Pose, intrinsics: Intrinsics) -> GroundTruthView:
    """Ray-cast the scene from a camera pose (world-from-camera)."""
    ext = scene.spec.extents
    center = pose.translation
    if not (
        ext[0] <= center[0] <= ext[1]
        and ext[2] <= center[1] <= ext[3]
        and ext[4] <= center[2] <= ext[5]
    ):
        raise ValueError(f"camera center {center} outside scene extents {ext}")

    h, w = intrinsics.height, intrinsics.width
    rays_cam = pixel_rays(intrinsics)  # z component is 1, so ray parameter = depth
    rot = pose.rotation_matrix
    rays_world = rays_cam @ rot.T
    origin = center

    n_px = rays_world.shape[0]
    best_t = np.full(n_px, np.inf)
    best_plane = np.full(n_px, -1, dtype=np.intp)
    best_s = np.zeros(n_px)
    best_tt = np.zeros(n_px)

    for idx, plane in enumerate(scene.planes):
        n = scene.normals[idx]
        denom = rays_world @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (scene.offsets[idx] - origin @ n) / denom
        hit = (np.abs(denom) > 1e-12) & (t > RAY_NEAR) & (t < best_t)
        if not np.any(hit):
            continue
        pts = origin + rays_world[hit] * t[hit, None]
        rel = pts - np.asarray(plane.origin)
        eu = np.asarray(plane.edge_u)
        ev = np.asarray(plane.edge_v)
        s = rel @ eu / (eu @ eu)
        tt = rel @ ev / (ev @ ev)
        inside = (s >= -1e-9) & (s <= 1 + 1e-9) & (tt >= -1e-9) & (tt <= 1 + 1e-9)
        sel = np.flatnonzero(hit)[inside]
        best_t[sel] = t[sel]
        best_plane[sel] = idx
        best_s[sel] = s[inside]
        best_tt[sel] = tt[inside]

    if np.any(best_plane < 0):
        raise ValueError("some rays escaped the scene; scenes must be closed")

    depth = best_t
    labels = np.array([p.class_id for p in scene.planes], dtype=np.int64)[best_plane]
    image = np.empty(n_px)
    normals_world = scene.normals[best_plane]
    sigma2 = PIXEL_FILTER_SIGMA**2
    for idx, plane in enumerate(scene.planes):
        sel = best_plane == idx
        if not np.any(sel):
            continue
        # analytic pixel footprint on the plane: texture is prefiltered by a
        # Gaussian pixel filter so oblique views stay band-limited and the
        # rendered images remain photo-consistent under subpixel warps
        n_cam = rot.T @ scene.normals[idx]
        d = rays_cam[sel]
        t_hit = best_t[sel]
        ndot = d @ n_cam
        dx_du = (t_hit / intrinsics.fx)[:, None] * (
            np.array([1.0, 0.0, 0.0]) - d * (n_cam[0] / ndot)[:, None]
        )
        dx_dv = (t_hit / intrinsics.fy)[:, None] * (
            np.array([0.0, 1.0, 0.0]) - d * (n_cam[1] / ndot)[:, None]
        )
        if scene.spec.texture_field is not None:
            pts = origin + rays_world[sel] * t_hit[:, None]
            wu = dx_du @ rot.T
            wv = dx_dv @ rot.T
            value = np.full(t_hit.shape, scene.spec.field_base)
            for wave in scene.spec.texture_field:
                omega = np.asarray(wave.omega)
                att = np.exp(-0.5 * sigma2 * ((wu @ omega) ** 2 + (wv @ omega) ** 2))
                value += wave.amplitude * att * np.sin(pts @ omega + wave.phase)
            image[sel] = value * scene.shades[idx]
        else:
            eu_cam = rot.T @ np.asarray(plane.edge_u, dtype=np.float64)
            ev_cam = rot.T @ np.asarray(plane.edge_v, dtype=np.float64)
            ds = np.hypot(dx_du @ eu_cam, dx_dv @ eu_cam) / (eu_cam @ eu_cam)
            dt = np.hypot(dx_du @ ev_cam, dx_dv @ ev_cam) / (ev_cam @ ev_cam)
            att_u = np.exp(-2.0 * np.pi**2 * sigma2 * (plane.albedo.freq_u * ds) ** 2)
            att_v = np.exp(-2.0 * np.pi**2 * sigma2 * (plane.albedo.freq_v * dt) ** 2)
            image[sel] = plane.albedo.evaluate(best_s[sel], best_tt[sel], att_u, att_v) * scene.shades[idx]

    # camera-frame normals oriented toward the camera
    normals_cam = normals_world @ rot
    flip = np.sum(normals_cam * rays_cam, axis=1) > 0
    normals_cam[flip] = -normals_cam[flip]

    if np.any(image < 0) or np.any(image > 1):
        raise ValueError("albedo/shading left [0, 1]; adjust the scene spec")

    return GroundTruthView(
        image=image.reshape(h, w),
        depth=depth.reshape(h, w),
        labels=labels.reshape(h, w),
        normals=normals_cam.reshape(h, w, 3),
        pose=pose,
        intrinsics=intrinsics,
    )


def gt_logits(view: GroundTruthView, class_count: int, margins: np.ndarray | None = None) -> np.ndarray:
    """One-hot logits scaled by a per-class margin (default 5)."""
    if margins is None:
        margins = np.full(class_count, DEFAULT_LOGIT_MARGIN)
    h, w = view.labels.shape
    logits = np.zeros((h, w, class_count))
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    logits[rows, cols, view.labels] = margins[view.labels]
    return logits


def smooth_mask(mask: np.ndarray, iterations: int = 2) -> np.ndarray:
    """Soften a boolean mask with repeated 3x3 box averaging; interior stays 1."""
    out = mask.astype(np.float64)
    for _ in range(iterations):
        padded = np.pad(out, 1, mode="edge")
        out = sum(
            padded[dv : dv + mask.shape[0], du : du + mask.shape[1]]
            for dv in range(3)
            for du in range(3)
        ) / 9.0
    return out


def _smooth_pattern(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random smooth spatial mode in [-1, 1]: low-frequency waves plus a bump."""
    v, u = np.mgrid[0:h, 0:w]
    uu = u / max(w - 1, 1)
    vv = v / max(h - 1, 1)
    fu, fv = rng.uniform(0.4, 1.5, size=2)
    pu, pv = rng.uniform(0.0, 1.0, size=2)
    wave = np.cos(2 * np.pi * (fu * uu + pu)) * np.cos(2 * np.pi * (fv * vv + pv))
    cx, cy = rng.uniform(0.15, 0.85, size=2)
    sigma = rng.uniform(0.12, 0.3)
    bump = np.exp(-((uu - cx) ** 2 + (vv - cy) ** 2) / (2 * sigma**2))
    mix = rng.uniform(0.35, 0.65)
    pattern = (1.0 - mix) * wave + mix * (2.0 * bump - 1.0)
    return pattern / np.max(np.abs(pattern))


@dataclass(frozen=True)
class AmbiguityRegion:
    """Corrupt the zero-code labels of one class region, reachably.

    A dedicated Jacobian column of profile gain * bump(region) * (e_wrong -
    e_true) is reserved, and S0 is shifted by ``strength`` along it: inside
    the region the zero-code prediction prefers ``wrong_class`` with a
    shrunken margin, and the truth is restored exactly at coefficient
    ``strength`` on that column.
    """

    true_class: int
    wrong_class: int
    strength: float = 2.0
    gain: float = 1.45


@dataclass(frozen=True)
class BundleTruth:
    """Codes at which the bundle reproduces the rendered ground truth."""

    code_depth: np.ndarray
    code_sem: np.ndarray
    ambiguity_mask: np.ndarray  # union of corrupted regions (H, W) bool
    reserved_columns: tuple[int, ...]  # columns used by ambiguity + extra modes


def make_bundle(
    view: GroundTruthView,
    code_depth: np.ndarray,
    code_sem: np.ndarray,
    seed: int,
    *,
    class_count: int,
    ambiguity: tuple[AmbiguityRegion, ...] = (),
    extra_columns: tuple[np.ndarray, ...] = (),
    extra_inject: np.ndarray | None = None,
    class_margins: np.ndarray | None = None,
    depth_gain: float = 0.03,
    sem_gain: float = 0.45,
    uncertainty: float = 0.01,
    avg_depth: float = 2.0,
) -> tuple[DecoderBundle, BundleTruth]:
    """Synthesize a decoder bundle whose ground truth is exactly reachable.

    ``code_depth`` / ``code_sem`` are the construction codes (norm <= 3, the
    prior scale). Reserved tail columns hold one mode per ambiguity region
    followed by the ``extra_columns`` (arbitrary (H, W, C) arrays, used by
    scene builders for entangled / weakly supported modes). ``extra_inject``
    optionally shifts S0 along the extra columns, reachably.
    """
    code_depth = np.asarray(code_depth, dtype=np.float64)
    code_sem = np.asarray(code_sem, dtype=np.float64)
    if code_depth.shape != code_sem.shape:
        raise ValueError("depth and semantic codes must share the code size")
    code_size = len(code_depth)
    for name, code in (("depth", code_depth), ("semantic", code_sem)):
        if np.linalg.norm(code) > 3.0 + 1e-12:
            raise ValueError(f"{name} construction code exceeds the prior scale (norm > 3)")

    h, w = view.depth.shape
    n_reserved = len(ambiguity) + len(extra_columns)
    if n_reserved >= code_size:
        raise ValueError("too many reserved modes for the code size")
    if np.any(code_sem[code_size - n_reserved :] != 0) and n_reserved:
        raise ValueError("construction semantic code must be zero on reserved columns")

    rng = np.random.default_rng(seed)

    jd = np.empty((h, w, code_size))
    for j in range(code_size):
        jd[:, :, j] = depth_gain * _smooth_pattern(rng, h, w)

    js = np.zeros((h, w, class_count, code_size))
    n_generic = code_size - n_reserved
    for j in range(n_generic):
        pattern = _smooth_pattern(rng, h, w)
        direction = rng.normal(size=class_count)
        direction -= direction.mean()
        direction /= np.max(np.abs(direction))
        js[:, :, :, j] = sem_gain * pattern[:, :, None] * direction[None, None, :]

    inject = np.zeros(code_size)
    ambiguity_mask = np.zeros((h, w), dtype=bool)
    reserved = []
    col = n_generic
    for region in ambiguity:
        mask = view.labels == region.true_class
        if not np.any(mask):
            raise ValueError(f"ambiguity region class {region.true_class} not visible")
        # hard-edged profile: the whole region flips by a *modest* margin, so
        # zero-code labels are wrong and entropy is high everywhere inside
        bump = mask.astype(np.float64)
        column = np.zeros((h, w, class_count))
        column[:, :, region.wrong_class] = region.gain * bump
        column[:, :, region.true_class] = -region.gain * bump
        js[:, :, :, col] = column
        inject[col] = -region.strength
        ambiguity_mask |= mask
        reserved.append(col)
        col += 1
    for k, column in enumerate(extra_columns):
        if column.shape != (h, w, class_count):
            raise ValueError("extra columns must be (H, W, C)")
        js[:, :, :, col] = column
        if extra_inject is not None:
            inject[col] = extra_inject[k]
        reserved.append(col)
        col += 1

    gt_prox = proximity_from_depth(view.depth, avg_depth)
    d0 = gt_prox - jd @ code_depth
    if np.any(d0 <= PROXIMITY_EPS) or np.any(d0 > 1.0):
        raise ValueError("D0 left (0, 1]; reduce depth_gain or the code norm")

    logits = gt_logits(view, class_count, class_margins)
    code_sem_true = code_sem + inject
    s0 = logits - js @ code_sem_true

    bundle = DecoderBundle(
        d0=d0,
        jd=jd,
        s0=s0,
        js=js,
        b=np.full((h, w), uncertainty),
        avg_depth=avg_depth,
    )
    truth = BundleTruth(
        code_depth=code_depth.copy(),
        code_sem=code_sem_true,
        ambiguity_mask=ambiguity_mask,
        reserved_columns=tuple(reserved),
    )
    return bundle, truth
