"""Dense warping and the pairwise residual terms with analytic Jacobians.

For a source frame A and target frame B, every source pixel u_A is lifted
to a camera point with A's decoded depth, moved by the relative transform
T_BA, and projected into B:

    w(u_A) = project( T_BA backproject(u_A, depth_A[u_A]) )

Three residual types compare the frames at corresponding locations:

* photometric: I_A[u_A] - I_B[w(u_A)]                       (scalar)
* geometric:   depth_B[w(u_A)] - z-coordinate of the moved point  (meters)
* semantic:    softmax(S_A[u_A]) - softmax(S_B[w(u_A)])     (C-vector)

Target-side lookups are bilinear; Jacobians flow through the interpolation
gradients. Pose Jacobians use the left-multiplicative increment convention
of the geometry module applied to *stored* world-from-camera poses. For a
world point x_w seen at x_b in B,

    d x_b / d delta_A = R_BW [ I | -skew(x_w) ],
    d x_b / d delta_B = -d x_b / d delta_A,

so pairwise blocks only ever need one matrix and its negation.

Depth inside the geometric term is metric: B's proximity is interpolated at
the warped pixel and converted to meters before being differenced against
the z-coordinate, which keeps the equation in a single unit. Invalidity is
data, not an error: out-of-bounds, behind-camera, clamped or occluded pixels
carry zero weight and are excluded from every reduction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .decoder import softmax_probs
from .geometry import (
    PROXIMITY_EPS,
    Intrinsics,
    Pose,
    ProximityMap,
    backproject,
    pixel_rays,
)

Z_MIN = 1e-9

# residual kinds -> jacobian slots they may carry
JACOBIAN_SLOTS = {
    "photo": ("pose_a", "pose_b", "code_d_a"),
    "geo": ("pose_a", "pose_b", "code_d_a", "code_d_b"),
    "sem": ("pose_a", "pose_b", "code_d_a", "code_s_a", "code_s_b"),
    "prior": ("code",),
}


@dataclass
class Correspondence:
    """Dense pixel correspondences from a source frame A into a target B."""

    pixels_u: np.ndarray
    pixels_v: np.ndarray
    warped: np.ndarray
    points_b: np.ndarray
    valid: np.ndarray
    slant_weight: np.ndarray
    # chain-rule state reused by the Jacobian builders
    rays: np.ndarray = field(repr=False, default=None)
    prox_a: np.ndarray = field(repr=False, default=None)
    depth_a: np.ndarray = field(repr=False, default=None)
    ddepth_dprox: np.ndarray = field(repr=False, default=None)
    points_w: np.ndarray = field(repr=False, default=None)
    rot_bw: np.ndarray = field(repr=False, default=None)
    rot_ba: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.pixels_u)

    @property
    def valid_ratio(self) -> float:
        return float(np.mean(self.valid)) if len(self) else 0.0


def warp(
    prox_a: ProximityMap,
    pose_ba: Pose,
    intrinsics: Intrinsics,
    pixels: tuple[np.ndarray, np.ndarray] | None = None,
    pose_wa: Pose | None = None,
    invalid_a: np.ndarray | None = None,
) -> Correspondence:
    """Warp source pixels into the target view through A's proximity map.

    ``pixels`` defaults to the full grid. ``pose_wa`` anchors A in a world
    frame for multi-keyframe pose Jacobians; identity treats A as the world.
    ``invalid_a`` marks source pixels to drop (e.g. the decoder clamp mask).
    """
    if pixels is None:
        u, v = intrinsics.pixel_grid()
    else:
        u = np.asarray(pixels[0], dtype=np.float64)
        v = np.asarray(pixels[1], dtype=np.float64)
    ui = u.astype(np.intp)
    vi = v.astype(np.intp)

    p = prox_a.values[vi, ui]
    ok = p > PROXIMITY_EPS
    if invalid_a is not None:
        ok = ok & ~invalid_a[vi, ui]

    a = prox_a.avg_depth
    p_safe = np.maximum(p, PROXIMITY_EPS)
    depth = a * (1.0 - p) / p_safe
    ok &= depth > 0

    rays = pixel_rays(intrinsics, u, v)
    points_a = rays * depth[:, None]

    if pose_wa is None:
        pose_wa = Pose.identity()
        points_w = points_a
    else:
        points_w = pose_wa.transform(points_a)
    points_b = pose_ba.transform(points_a)

    z = points_b[:, 2]
    ok &= z > Z_MIN
    z_safe = np.where(z > Z_MIN, z, 1.0)
    warped = np.empty((len(u), 2))
    warped[:, 0] = intrinsics.fx * points_b[:, 0] / z_safe + intrinsics.cx
    warped[:, 1] = intrinsics.fy * points_b[:, 1] / z_safe + intrinsics.cy

    inside = (
        (np.floor(warped[:, 0]) >= 0)
        & (np.floor(warped[:, 0]) <= intrinsics.width - 2)
        & (np.floor(warped[:, 1]) >= 0)
        & (np.floor(warped[:, 1]) <= intrinsics.height - 2)
    )
    valid = ok & inside

    rot_ba = pose_ba.rotation_matrix
    rot_bw = rot_ba @ pose_wa.rotation_matrix.T

    return Correspondence(
        pixels_u=u,
        pixels_v=v,
        warped=warped,
        points_b=points_b,
        valid=valid,
        slant_weight=np.ones(len(u)),
        rays=rays,
        prox_a=p,
        depth_a=depth,
        ddepth_dprox=-a / np.maximum(p_safe, PROXIMITY_EPS) ** 2,
        points_w=points_w,
        rot_bw=rot_bw,
        rot_ba=rot_ba,
    )


@dataclass
class WarpDerivatives:
    """Derivatives of the warped pixel and its target-frame z-coordinate.

    duv_dpose / dz_dpose are w.r.t. the source frame's pose increment; the
    target frame's are the exact negatives.
    """

    duv_dpose: np.ndarray  # (N, 2, 6)
    dz_dpose: np.ndarray  # (N, 6)
    duv_dcode: np.ndarray | None = None  # (N, 2, B) w.r.t. A's depth code
    dz_dcode: np.ndarray | None = None  # (N, B)


def warp_derivatives(
    corr: Correspondence, intrinsics: Intrinsics, jd_a_rows: np.ndarray | None = None
) -> WarpDerivatives:
    """Chain-rule pieces shared by all residual Jacobians.

    ``jd_a_rows`` are A's proximity-Jacobian rows at the source pixels,
    (N, B); omit them to skip the depth-code chain (pose-only problems).
    """
    n = len(corr)
    x, y, z = corr.points_b[:, 0], corr.points_b[:, 1], corr.points_b[:, 2]
    z_safe = np.where(np.abs(z) > Z_MIN, z, 1.0)
    inv_z = 1.0 / z_safe

    # projection Jacobian (N, 2, 3)
    proj = np.zeros((n, 2, 3))
    proj[:, 0, 0] = intrinsics.fx * inv_z
    proj[:, 0, 2] = -intrinsics.fx * x * inv_z**2
    proj[:, 1, 1] = intrinsics.fy * inv_z
    proj[:, 1, 2] = -intrinsics.fy * y * inv_z**2

    # d x_b / d delta_A = R_BW [I | -skew(x_w)]
    xw = corr.points_w
    sk = np.zeros((n, 3, 3))
    sk[:, 0, 1] = -xw[:, 2]
    sk[:, 0, 2] = xw[:, 1]
    sk[:, 1, 0] = xw[:, 2]
    sk[:, 1, 2] = -xw[:, 0]
    sk[:, 2, 0] = -xw[:, 1]
    sk[:, 2, 1] = xw[:, 0]
    dxb_dpose = np.empty((n, 3, 6))
    dxb_dpose[:, :, :3] = corr.rot_bw
    dxb_dpose[:, :, 3:] = -np.einsum("ij,njk->nik", corr.rot_bw, sk)

    duv_dpose = np.einsum("nij,njk->nik", proj, dxb_dpose)
    dz_dpose = dxb_dpose[:, 2, :]

    duv_dcode = None
    dz_dcode = None
    if jd_a_rows is not None:
        dxb_dd = corr.rays @ corr.rot_ba.T  # (N, 3)
        dprox = corr.ddepth_dprox[:, None] * jd_a_rows  # (N, B)
        duv_dd = np.einsum("nij,nj->ni", proj, dxb_dd)  # (N, 2)
        duv_dcode = duv_dd[:, :, None] * dprox[:, None, :]
        dz_dcode = dxb_dd[:, 2][:, None] * dprox
    return WarpDerivatives(duv_dpose, dz_dpose, duv_dcode, dz_dcode)


@dataclass
class ResidualEval:
    """One evaluated residual block: values, Jacobian slots, and masks.

    ``values`` is (N, D); Jacobian slots are (N, D, dim) keyed by variable
    name. ``weight`` combines validity with the slant/occlusion factor; the
    solver multiplies in robust (Huber) weights on top.
    """

    kind: str
    values: np.ndarray
    jacobians: dict[str, np.ndarray]
    valid: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        extra = set(self.jacobians) - set(JACOBIAN_SLOTS[self.kind])
        if extra:
            raise ValueError(f"{self.kind} residual cannot depend on {sorted(extra)}")


def photometric_residual(
    image_a: np.ndarray,
    image_b: np.ndarray,
    corr: Correspondence,
    deriv: WarpDerivatives | None = None,
) -> ResidualEval:
    """Intensity difference I_A[u_A] - I_B[w(u_A)] with bilinear lookup in B."""
    ui = corr.pixels_u.astype(np.intp)
    vi = corr.pixels_v.astype(np.intp)
    i_a = np.asarray(image_a, dtype=np.float64)[vi, ui]
    sampled, gu, gv, ok = kernels.bilinear_map(image_b, corr.warped[:, 0], corr.warped[:, 1])
    values = (i_a - sampled)[:, None]
    valid = corr.valid & ok

    jac = {}
    if deriv is not None:
        dr_duv = -np.stack([gu, gv], axis=-1)[:, None, :]  # (N, 1, 2)
        jac["pose_a"] = np.einsum("ndk,nkj->ndj", dr_duv, deriv.duv_dpose)
        jac["pose_b"] = -jac["pose_a"]
        if deriv.duv_dcode is not None:
            jac["code_d_a"] = np.einsum("ndk,nkj->ndj", dr_duv, deriv.duv_dcode)
    return ResidualEval("photo", values, jac, valid, valid * corr.slant_weight)


def geometric_residual(
    prox_b: ProximityMap,
    jd_b: np.ndarray | None,
    corr: Correspondence,
    deriv: WarpDerivatives | None = None,
    clamped_b: np.ndarray | None = None,
) -> ResidualEval:
    """Metric depth consistency: depth_B at the warped pixel minus moved-point z.

    B's proximity is interpolated first and converted to meters after, so the
    interpolated surface stays inside the bounded parametrization. Pixels
    whose bilinear footprint touches a clamped target pixel are masked.
    """
    u, v = corr.warped[:, 0], corr.warped[:, 1]
    p_hat, gu, gv, ok = kernels.bilinear_map(prox_b.values, u, v)
    valid = corr.valid & ok & (p_hat > PROXIMITY_EPS)
    if clamped_b is not None:
        touched, _, _, ok_c = kernels.bilinear_map(clamped_b.astype(np.float64), u, v)
        valid &= ok_c & (touched == 0.0)

    a = prox_b.avg_depth
    p_safe = np.maximum(p_hat, PROXIMITY_EPS)
    d_hat = a * (1.0 - p_hat) / p_safe
    values = (d_hat - corr.points_b[:, 2])[:, None]
    dd_dp = -a / p_safe**2

    jac = {}
    if deriv is not None:
        if jd_b is not None:
            jd_rows, _ = kernels.bilinear_volume_values(jd_b, u, v)
            jac["code_d_b"] = (dd_dp[:, None] * jd_rows)[:, None, :]
        dr_duv = (dd_dp[:, None] * np.stack([gu, gv], axis=-1))[:, None, :]  # (N, 1, 2)
        jac["pose_a"] = (
            np.einsum("ndk,nkj->ndj", dr_duv, deriv.duv_dpose) - deriv.dz_dpose[:, None, :]
        )
        jac["pose_b"] = -jac["pose_a"]
        if deriv.duv_dcode is not None:
            jac["code_d_a"] = (
                np.einsum("ndk,nkj->ndj", dr_duv, deriv.duv_dcode) - deriv.dz_dcode[:, None, :]
            )
    return ResidualEval("geo", values, jac, valid, valid * corr.slant_weight)


def _softmax_jacobian(q: np.ndarray) -> np.ndarray:
    """d softmax / d logits = diag(q) - q q^T, per row. (N, C, C)."""
    n, c = q.shape
    jac = -q[:, :, None] * q[:, None, :]
    idx = np.arange(c)
    jac[:, idx, idx] += q
    return jac


def semantic_residual(
    logits_a_px: np.ndarray,
    js_a_px: np.ndarray | None,
    logits_b: np.ndarray,
    js_b: np.ndarray | None,
    corr: Correspondence,
    deriv: WarpDerivatives | None = None,
) -> ResidualEval:
    """Softmax-probability difference between corresponding pixels, as a C-vector.

    Stacked least squares on the full vector; its L2 norm is the scalar
    probability distance. Differentiable w.r.t. both semantic codes and,
    through the warp, A's depth code and both poses.

    ``logits_a_px`` / ``js_a_px`` are A's values at the source pixels
    ((N, C) and (N, C, B)); ``logits_b`` / ``js_b`` are B's full volumes.
    """
    u, v = corr.warped[:, 0], corr.warped[:, 1]
    q_a = softmax_probs(logits_a_px)
    s_b, gu, gv, ok = kernels.bilinear_volume(logits_b, u, v)
    q_b = softmax_probs(s_b)
    values = q_a - q_b
    valid = corr.valid & ok

    jac = {}
    if deriv is not None or js_a_px is not None or js_b is not None:
        soft_b = _softmax_jacobian(q_b)
        if js_a_px is not None:
            jac["code_s_a"] = np.einsum("nij,njb->nib", _softmax_jacobian(q_a), js_a_px)
        if js_b is not None:
            h, w, c, code_size = js_b.shape
            rows, _ = kernels.bilinear_volume_values(js_b.reshape(h, w, c * code_size), u, v)
            jac["code_s_b"] = -np.einsum("nij,njb->nib", soft_b, rows.reshape(-1, c, code_size))
        if deriv is not None:
            grad_b = np.stack([gu, gv], axis=-1)  # (N, C, 2)
            dr_duv = -np.einsum("nij,njk->nik", soft_b, grad_b)  # (N, C, 2)
            jac["pose_a"] = np.einsum("nck,nkj->ncj", dr_duv, deriv.duv_dpose)
            jac["pose_b"] = -jac["pose_a"]
            if deriv.duv_dcode is not None:
                jac["code_d_a"] = np.einsum("nck,nkj->ncj", dr_duv, deriv.duv_dcode)
    return ResidualEval("sem", values, jac, valid, valid * corr.slant_weight)


def normals_from_depth(depth: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Unit surface normals from a depth map, oriented toward the camera."""
    u, v = intrinsics.pixel_grid()
    pts = backproject(np.stack([u, v], axis=-1), depth.ravel(), intrinsics)
    pts = pts.reshape(depth.shape[0], depth.shape[1], 3)
    du = np.gradient(pts, axis=1)
    dv = np.gradient(pts, axis=0)
    n = np.cross(du.reshape(-1, 3), dv.reshape(-1, 3))
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.maximum(norm, 1e-12)
    rays = pixel_rays(intrinsics, u, v)
    rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)
    flip = np.sum(n * rays, axis=1) > 0
    n[flip] = -n[flip]
    return n.reshape(depth.shape[0], depth.shape[1], 3)


def validity_and_slant(
    corr: Correspondence,
    prox_a: ProximityMap,
    prox_b: ProximityMap,
    intrinsics: Intrinsics,
    normals_a: np.ndarray | None = None,
    occlusion_tau: float | None = None,
) -> np.ndarray:
    """Per-pixel weight in [0, 1]: zero for invalid or occluded, cos(slant) else.

    Occlusion: the moved point lies more than ``occlusion_tau`` meters behind
    B's decoded surface at the warped pixel (default 5% of the depth scale).
    Slant: angle between the source view ray and the surface normal estimated
    from A's depth (or supplied directly).
    """
    if occlusion_tau is None:
        occlusion_tau = 0.05 * prox_b.avg_depth

    d_hat, _, _, ok = kernels.bilinear_map(prox_b.values, corr.warped[:, 0], corr.warped[:, 1])
    with np.errstate(divide="ignore"):
        depth_b = prox_b.avg_depth * (1.0 - d_hat) / np.maximum(d_hat, PROXIMITY_EPS)
    occluded = (corr.points_b[:, 2] - depth_b) > occlusion_tau
    base = corr.valid & ok & ~occluded

    if normals_a is None:
        depth_a, _ = prox_a.to_depth()
        normals_a = normals_from_depth(depth_a, intrinsics)
    ui = corr.pixels_u.astype(np.intp)
    vi = corr.pixels_v.astype(np.intp)
    n = normals_a[vi, ui]
    rays = corr.rays / np.linalg.norm(corr.rays, axis=1, keepdims=True)
    cos_slant = np.clip(-np.sum(n * rays, axis=1), 0.0, 1.0)
    return base * cos_slant
