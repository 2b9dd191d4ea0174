"""Dense multi-view semantic reconstruction on latent-coded linear decoders.

Per-frame linear decoders (zero-code maps plus code Jacobians) represent
depth and semantics with low-dimensional codes. Codes and camera poses are
refined jointly by damped Gauss-Newton over photometric, geometric, and
semantic residuals; the same machinery drives multi-view label fusion, a
keyframe SLAM pipeline, and a deterministic synthetic world that makes
every claim testable at desk scale.
"""

from .decoder import (
    Code,
    DecoderBundle,
    argmax_labels,
    entropy_map,
    predict_depth,
    predict_semantics,
    softmax_probs,
)
from .geometry import (
    Intrinsics,
    Pose,
    ProximityMap,
    backproject,
    depth_from_proximity,
    project,
    proximity_from_depth,
    se3_exp,
    se3_log,
)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "Code",
    "DecoderBundle",
    "Intrinsics",
    "KERNEL_BACKEND",
    "Pose",
    "ProximityMap",
    "argmax_labels",
    "backproject",
    "depth_from_proximity",
    "entropy_map",
    "predict_depth",
    "predict_semantics",
    "project",
    "proximity_from_depth",
    "se3_exp",
    "se3_log",
    "softmax_probs",
]
