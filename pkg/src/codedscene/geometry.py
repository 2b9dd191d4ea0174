"""Rigid-body transforms, pinhole camera model, and the proximity depth map.

Conventions used everywhere in this package:

* Pixel coordinates are (u, v) with u = column, v = row, and pixel centers
  at integer coordinates. Arrays are indexed [v, u].
* Camera frame: x right, y down, z forward (depth = z).
* A ``Pose`` is a rigid transform; ``pose.transform(p)`` maps points into
  the pose's target frame. Keyframe poses are world-from-camera.
* Pose increments are 6-vectors ``[rho, phi]`` (translation part first)
  applied left-multiplicatively: ``T <- se3_exp(delta) @ T``. All pose
  Jacobians in the residual module assume this convention.
* Proximity reparameterizes depth as ``p = a / (a + d)`` with ``a`` the
  average scene depth, mapping d in [0, inf) onto (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_QUAT_NORM_TOL = 1e-3


def _quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Pose:
    """Rigid-body transform stored as a unit quaternion (w, x, y, z) plus translation."""

    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > _QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        q = q / norm
        if q[0] < 0:
            q = -q
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @property
    def rotation_matrix(self) -> np.ndarray:
        return _quat_to_matrix(self.quaternion)

    def compose(self, other: "Pose") -> "Pose":
        """self o other: apply ``other`` first, then ``self``."""
        q = _quat_multiply(self.quaternion, other.quaternion)
        t = self.rotation_matrix @ other.translation + self.translation
        return Pose(q, t)

    def inverse(self) -> "Pose":
        q_inv = self.quaternion * np.array([1.0, -1.0, -1.0, -1.0])
        t_inv = -(_quat_to_matrix(q_inv) @ self.translation)
        return Pose(q_inv, t_inv)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the transform to one point (3,) or a batch (N, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation_matrix.T + self.translation

    def rotation_angle(self) -> float:
        """Rotation magnitude in radians."""
        return float(np.linalg.norm(se3_log(self)[3:]))


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def invert(pose: Pose) -> Pose:
    return pose.inverse()


def _so3_exp_quat(phi: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(phi))
    if angle < 1e-8:
        # 2nd-order series of sin(a/2)/a and cos(a/2)
        half = 0.5 - angle * angle / 48.0
        q = np.concatenate(([1.0 - angle * angle / 8.0], half * phi))
    else:
        q = np.concatenate(([np.cos(0.5 * angle)], np.sin(0.5 * angle) / angle * phi))
    return q / np.linalg.norm(q)


def _so3_log(q: np.ndarray) -> np.ndarray:
    if q[0] < 0:
        q = -q
    vec_norm = float(np.linalg.norm(q[1:]))
    angle = 2.0 * np.arctan2(vec_norm, q[0])
    if vec_norm < 1e-9:
        return q[1:] * (2.0 / q[0])
    return q[1:] * (angle / vec_norm)


def _left_jacobian(phi: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(phi))
    K = skew(phi)
    if angle < 1e-6:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    a2 = angle * angle
    b = (1.0 - np.cos(angle)) / a2
    c = (angle - np.sin(angle)) / (a2 * angle)
    return np.eye(3) + b * K + c * (K @ K)


def _left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(phi))
    K = skew(phi)
    if angle < 1e-6:
        return np.eye(3) - 0.5 * K + K @ K / 12.0
    a2 = angle * angle
    # stable up to angle = pi: 1 - cos stays away from 0 there
    d = (1.0 - angle * np.sin(angle) / (2.0 * (1.0 - np.cos(angle)))) / a2
    return np.eye(3) - 0.5 * K + d * (K @ K)


def se3_exp(delta: np.ndarray) -> Pose:
    """Exponential map from a 6-vector [rho, phi] to a Pose."""
    delta = np.asarray(delta, dtype=np.float64).reshape(6)
    rho, phi = delta[:3], delta[3:]
    return Pose(_so3_exp_quat(phi), _left_jacobian(phi) @ rho)


def se3_log(pose: Pose) -> np.ndarray:
    """Inverse of se3_exp. Safe near pi rotations (quaternion branch has no pole there)."""
    phi = _so3_log(pose.quaternion)
    rho = _left_jacobian_inv(phi) @ pose.translation
    return np.concatenate([rho, phi])


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics. fx, fy, cx, cy in pixels; no distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    def scaled(self, factor: float) -> "Intrinsics":
        """Intrinsics of the image downsampled by 1/factor (2x2 block averaging).

        With pixel centers at integers, coarse coordinate u' satisfies
        u_fine = factor * u' + (factor - 1) / 2.
        """
        off = (factor - 1.0) / 2.0
        return Intrinsics(
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=(self.cx - off) / factor,
            cy=(self.cy - off) / factor,
            width=int(self.width // factor),
            height=int(self.height // factor),
        )

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (u, v) coordinates of every pixel center, row-major."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        return u.ravel().astype(np.float64), v.ravel().astype(np.float64)


def project(points: np.ndarray, intrinsics: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points onto the image plane.

    Returns (uv, valid); pixels with non-positive depth are flagged invalid
    and their coordinates are unusable.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    z = pts[:, 2]
    valid = z > 0
    z_safe = np.where(valid, z, 1.0)
    uv = np.empty((pts.shape[0], 2))
    uv[:, 0] = intrinsics.fx * pts[:, 0] / z_safe + intrinsics.cx
    uv[:, 1] = intrinsics.fy * pts[:, 1] / z_safe + intrinsics.cy
    if np.asarray(points).ndim == 1:
        return uv[0], valid[0]
    return uv, valid


def backproject(uv: np.ndarray, depth: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Lift pixels to camera-frame points at the given metric depth."""
    uv_arr = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    d = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    pts = np.empty((uv_arr.shape[0], 3))
    pts[:, 0] = (uv_arr[:, 0] - intrinsics.cx) * d / intrinsics.fx
    pts[:, 1] = (uv_arr[:, 1] - intrinsics.cy) * d / intrinsics.fy
    pts[:, 2] = d
    if np.asarray(uv).ndim == 1:
        return pts[0]
    return pts


def pixel_rays(intrinsics: Intrinsics, u: np.ndarray | None = None, v: np.ndarray | None = None) -> np.ndarray:
    """Unnormalized camera rays (x, y, 1) such that point = depth * ray."""
    if u is None or v is None:
        u, v = intrinsics.pixel_grid()
    rays = np.empty((len(u), 3))
    rays[:, 0] = (u - intrinsics.cx) / intrinsics.fx
    rays[:, 1] = (v - intrinsics.cy) / intrinsics.fy
    rays[:, 2] = 1.0
    return rays


PROXIMITY_EPS = 1e-6
DEFAULT_AVG_DEPTH = 2.0


def proximity_from_depth(depth, avg_depth: float = DEFAULT_AVG_DEPTH):
    """p = a / (a + d); d = 0 maps to 1, d -> inf maps to 0."""
    return avg_depth / (avg_depth + np.asarray(depth, dtype=np.float64))


def depth_from_proximity(proximity, avg_depth: float = DEFAULT_AVG_DEPTH):
    """Inverse of proximity_from_depth; caller masks p <= 0 (infinite depth)."""
    p = np.asarray(proximity, dtype=np.float64)
    return avg_depth * (1.0 - p) / np.maximum(p, PROXIMITY_EPS)


@dataclass(frozen=True)
class ProximityMap:
    """Dense H x W proximity values in (0, 1] with their average-depth scale."""

    values: np.ndarray
    avg_depth: float = DEFAULT_AVG_DEPTH

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("proximity map must be H x W")
        if self.avg_depth <= 0:
            raise ValueError("avg_depth must be positive")
        object.__setattr__(self, "values", vals)

    def to_depth(self) -> tuple[np.ndarray, np.ndarray]:
        """Metric depth plus a finite-depth mask (p above the epsilon floor)."""
        finite = self.values > PROXIMITY_EPS
        return depth_from_proximity(self.values, self.avg_depth), finite
