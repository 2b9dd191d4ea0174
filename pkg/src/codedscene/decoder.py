"""Image-conditioned linear decoders for depth and semantics.

A DecoderBundle holds the frozen per-frame tensors of a linear decoder:
zero-code outputs D0 / S0, code Jacobians J_d / J_s, and per-pixel
uncertainty b. Predictions are exact linear maps of the code,

    proximity(c_d) = D0 + J_d c_d        (clamped into (1e-6, 1])
    logits(c_s)    = S0 + J_s c_s

so prediction Jacobians never have to be re-derived; they are the stored
tensors themselves. No network runs here; bundles come from the synthetic
world or from an external trainer via the bundle file format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DEFAULT_AVG_DEPTH, ProximityMap

DEFAULT_CODE_SIZE = 32
DEFAULT_CLASS_COUNT = 13
PROXIMITY_CLAMP_LO = 1e-6
PROXIMITY_CLAMP_HI = 1.0


@dataclass(frozen=True)
class Code:
    """Latent code: a B-vector tagged as depth or semantic."""

    values: np.ndarray
    kind: str = "depth"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise ValueError("code entries must be finite")
        if self.kind not in ("depth", "semantic"):
            raise ValueError(f"unknown code kind {self.kind!r}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    @staticmethod
    def zeros(size: int, kind: str = "depth") -> "Code":
        return Code(np.zeros(size), kind)


@dataclass(frozen=True)
class DecoderBundle:
    """Frozen linear-decoder tensors for one frame.

    d0: (H, W) zero-code proximity in (0, 1]
    jd: (H, W, B) proximity Jacobian w.r.t. the depth code
    s0: (H, W, C) zero-code logits
    js: (H, W, C, B) logit Jacobian w.r.t. the semantic code
    b:  (H, W) positive per-pixel uncertainty
    """

    d0: np.ndarray
    jd: np.ndarray
    s0: np.ndarray
    js: np.ndarray
    b: np.ndarray
    avg_depth: float = DEFAULT_AVG_DEPTH

    def __post_init__(self):
        d0 = np.asarray(self.d0, dtype=np.float64)
        jd = np.asarray(self.jd, dtype=np.float64)
        s0 = np.asarray(self.s0, dtype=np.float64)
        js = np.asarray(self.js, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if d0.ndim != 2:
            raise ValueError("d0 must be H x W")
        h, w = d0.shape
        if jd.shape != (h, w, jd.shape[2]):
            raise ValueError("jd must be H x W x B")
        code_size = jd.shape[2]
        if s0.ndim != 3 or s0.shape[:2] != (h, w):
            raise ValueError("s0 must be H x W x C")
        class_count = s0.shape[2]
        if js.shape != (h, w, class_count, code_size):
            raise ValueError("js must be H x W x C x B")
        if b.shape != (h, w):
            raise ValueError("b must be H x W")
        if np.any(d0 <= 0) or np.any(d0 > 1):
            raise ValueError("d0 must lie in (0, 1]")
        if np.any(b <= 0):
            raise ValueError("uncertainty b must be positive")
        if self.avg_depth <= 0:
            raise ValueError("avg_depth must be positive")
        for name, arr in (("d0", d0), ("jd", jd), ("s0", s0), ("js", js), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.d0.shape

    @property
    def code_size(self) -> int:
        return self.jd.shape[2]

    @property
    def class_count(self) -> int:
        return self.s0.shape[2]


@dataclass(frozen=True)
class DepthPrediction:
    """Decoded proximity plus the mask of pixels the clamp touched."""

    proximity: ProximityMap
    clamped: np.ndarray


def _code_values(code, expected: int, kind: str) -> np.ndarray:
    vals = code.values if isinstance(code, Code) else np.asarray(code, dtype=np.float64)
    if isinstance(code, Code) and code.kind != kind:
        raise ValueError(f"expected a {kind} code, got {code.kind}")
    if vals.shape != (expected,):
        raise ValueError(f"code length {vals.shape} does not match bundle B={expected}")
    return vals


def predict_depth(bundle: DecoderBundle, code) -> DepthPrediction:
    """Proximity map D0 + J_d c, clamped into (1e-6, 1]."""
    c = _code_values(code, bundle.code_size, "depth")
    raw = bundle.d0 + bundle.jd @ c
    clamped_mask = (raw < PROXIMITY_CLAMP_LO) | (raw > PROXIMITY_CLAMP_HI)
    values = np.clip(raw, PROXIMITY_CLAMP_LO, PROXIMITY_CLAMP_HI)
    return DepthPrediction(ProximityMap(values, bundle.avg_depth), clamped_mask)


def predict_semantics(bundle: DecoderBundle, code) -> np.ndarray:
    """Logit volume S0 + J_s c, shape (H, W, C); no clamping."""
    c = _code_values(code, bundle.code_size, "semantic")
    return bundle.s0 + bundle.js @ c


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Per-pixel softmax over the last axis, max-subtracted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def entropy_map(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats over the last axis, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def argmax_labels(probs: np.ndarray) -> np.ndarray:
    """Per-pixel argmax class ids; ties resolve to the lowest class id."""
    return np.argmax(np.asarray(probs), axis=-1)
