"""Sequence directories: the on-disk handoff between the generator and the
pipelines.

    <dir>/scene.json               dimensions, intrinsics, counts, provenance
    <dir>/frames/frame_NNNN.pfm    grayscale image, exact float32
    <dir>/bundles/frame_NNNN.scnb  decoder bundle
    <dir>/gt/depth_NNNN.pfm        ground-truth depth (meters)
    <dir>/gt/labels_NNNN.pgm       ground-truth class ids
    <dir>/gt/trajectory.txt        "<id> tx ty tz qw qx qy qz" per frame
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bundle_io import read_bundle, write_bundle
from .decoder import DecoderBundle
from .geometry import Intrinsics, Pose
from .image_io import read_pfm, read_pgm, write_pfm, write_pgm
from .parallel import ordered_map
from .worlds import FrameData

FORMAT_NAME = "codedscene-sequence-v1"


@dataclass
class SequenceFrame:
    image: np.ndarray
    bundle: DecoderBundle
    gt_depth: np.ndarray | None = None
    gt_labels: np.ndarray | None = None
    gt_pose: Pose | None = None


@dataclass
class SequenceDir:
    intrinsics: Intrinsics
    frames: list[SequenceFrame]
    class_count: int
    code_size: int
    meta: dict


def pose_line(frame_id: int, pose: Pose) -> str:
    q = pose.quaternion
    t = pose.translation
    nums = " ".join(f"{x:.17g}" for x in (*t, *q))
    return f"{frame_id} {nums}"


def parse_pose_line(line: str) -> tuple[int, Pose]:
    parts = line.split()
    frame_id = int(parts[0])
    vals = [float(x) for x in parts[1:]]
    return frame_id, Pose(quaternion=np.array(vals[3:7]), translation=np.array(vals[0:3]))


def write_sequence(out_dir, intrinsics: Intrinsics, frames: list[FrameData], meta: dict) -> None:
    out = Path(out_dir)
    for sub in ("frames", "bundles", "gt"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    scene = {
        "format": FORMAT_NAME,
        "frames": len(frames),
        "class_count": int(frames[0].bundle.class_count),
        "code_size": int(frames[0].bundle.code_size),
        "avg_depth": float(frames[0].bundle.avg_depth),
        "intrinsics": {
            "fx": intrinsics.fx,
            "fy": intrinsics.fy,
            "cx": intrinsics.cx,
            "cy": intrinsics.cy,
            "width": intrinsics.width,
            "height": intrinsics.height,
        },
        **meta,
    }
    (out / "scene.json").write_text(json.dumps(scene, indent=2, sort_keys=True) + "\n")

    def emit(item):
        idx, frame = item
        write_pfm(out / "frames" / f"frame_{idx:04d}.pfm", frame.view.image)
        write_bundle(out / "bundles" / f"frame_{idx:04d}.scnb", frame.bundle)
        write_pfm(out / "gt" / f"depth_{idx:04d}.pfm", frame.view.depth)
        write_pgm(out / "gt" / f"labels_{idx:04d}.pgm", frame.view.labels.astype(np.uint8))

    ordered_map(emit, list(enumerate(frames)))
    lines = [pose_line(idx, frame.view.pose) for idx, frame in enumerate(frames)]
    (out / "gt" / "trajectory.txt").write_text("\n".join(lines) + "\n")


def read_sequence(in_dir, *, max_frames: int | None = None, need_gt: bool = True) -> SequenceDir:
    root = Path(in_dir)
    scene_path = root / "scene.json"
    if not scene_path.exists():
        raise FileNotFoundError(f"{root}: not a sequence directory (missing scene.json)")
    meta = json.loads(scene_path.read_text())
    if meta.get("format") != FORMAT_NAME:
        raise ValueError(f"{scene_path}: unsupported format {meta.get('format')!r}")
    ki = meta["intrinsics"]
    intrinsics = Intrinsics(ki["fx"], ki["fy"], ki["cx"], ki["cy"], ki["width"], ki["height"])
    count = int(meta["frames"])
    if max_frames is not None:
        count = min(count, max_frames)

    poses: dict[int, Pose] = {}
    traj = root / "gt" / "trajectory.txt"
    if traj.exists():
        for line in traj.read_text().splitlines():
            if line.strip():
                frame_id, pose = parse_pose_line(line)
                poses[frame_id] = pose

    def load(idx):
        image = read_pfm(root / "frames" / f"frame_{idx:04d}.pfm").astype(np.float64)
        bundle = read_bundle(root / "bundles" / f"frame_{idx:04d}.scnb")
        depth = labels = None
        depth_path = root / "gt" / f"depth_{idx:04d}.pfm"
        if need_gt and depth_path.exists():
            depth = read_pfm(depth_path).astype(np.float64)
            labels = read_pgm(root / "gt" / f"labels_{idx:04d}.pgm").astype(np.int64)
        return SequenceFrame(image, bundle, depth, labels, poses.get(idx))

    frames = ordered_map(load, range(count))
    return SequenceDir(
        intrinsics=intrinsics,
        frames=frames,
        class_count=int(meta["class_count"]),
        code_size=int(meta["code_size"]),
        meta=meta,
    )
