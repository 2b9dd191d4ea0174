"""Command-line interface.

    codedscene synth --preset ambiguity --seed 0 --out runs/amb
    codedscene fuse  --in runs/amb --views 2 --method code --out runs/fused
    codedscene sfm   --in runs/seq --frames 0,3 --out runs/sfm
    codedscene slam  --in runs/seq --config cfg.json --out runs/slam
    codedscene eval  --pred runs/slam --gt runs/seq
    codedscene validate-bundle runs/amb/bundles/frame_0000.scnb

Exit codes: 0 success, 1 usage error, 2 runtime failure. All runs are
reproducible from config + seed; repeated runs write byte-identical CSV.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import worlds
from .bundle_io import BundleFormatError, read_bundle
from .config import ConfigError, RunConfig, default_config_json, load_config
from .dataset import parse_pose_line, pose_line, read_sequence, write_sequence
from .decoder import predict_depth, predict_semantics
from .fusion import (
    FusionFrame,
    FusionInput,
    compute_metrics,
    fuse_average,
    fuse_codes,
    fuse_multiplicative,
)
from .geometry import Pose, se3_log
from .image_io import read_pgm, write_labels, write_pgm_normalized
from .slam import Keyframe, MapWindow, SlamSystem, export_map, track
from .solver import FrameState, Problem, SolverError, add_prior, schedule_mapping_pass

FUSION_CSV_HEADER = "method,views,pix_acc,cls_acc,miou,mean_entropy_init,mean_entropy_opt"
SLAM_CSV_HEADER = "frames,keyframes,lost,rot_drift_deg,trans_drift_m"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


PRESETS = {
    "room": lambda seed, frames: worlds.slam_sequence(seed, frames or 30),
    "slam": lambda seed, frames: worlds.slam_sequence(seed, frames or 30),
    "slam-rot": lambda seed, frames: worlds.slam_sequence(seed, frames or 20, pure_rotation=True),
    "ambiguity": lambda seed, frames: _ambiguity_sequence(seed, frames or 4),
    "lattice": lambda seed, frames: _pair_sequence(worlds.lattice_pair(seed)),
    "stripes": lambda seed, frames: _pair_sequence(worlds.stripe_world(seed)),
}


def _ambiguity_sequence(seed, frames):
    world = worlds.ambiguity_world(seed, frames)
    return worlds.SequenceWorld(world.scene, world.intrinsics, world.frames,
                                [f.view.pose for f in world.frames])


def _pair_sequence(pair):
    return worlds.SequenceWorld(pair.scene, pair.intrinsics, pair.frames,
                                [f.view.pose for f in pair.frames])


def cmd_synth(args) -> int:
    if args.spec:
        spec = json.loads(Path(args.spec).read_text())
        unknown = set(spec) - {"preset", "seed", "frames"}
        if unknown:
            raise ValueError(f"{args.spec}: unknown spec key(s) {sorted(unknown)}")
        preset = spec.get("preset", "ambiguity")
        seed = int(spec.get("seed", args.seed))
        frames = spec.get("frames", args.frames)
    else:
        preset, seed, frames = args.preset, args.seed, args.frames
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    world = PRESETS[preset](seed, frames)
    write_sequence(args.out, world.intrinsics, world.frames, {"preset": preset, "seed": seed})
    print(f"wrote {len(world.frames)} frames to {args.out}")
    return 0


def _fusion_result(method, inp, config: RunConfig):
    if method == "code":
        return fuse_codes(inp, config.solver, max_iters=config.fusion.max_iterations,
                          pairing=config.fusion.pairing)
    if method == "code-noprior":
        return fuse_codes(inp, config.solver, use_prior=False,
                          max_iters=config.fusion.max_iterations, pairing=config.fusion.pairing)
    if method == "mult":
        return fuse_multiplicative(inp, config.solver.occlusion_tau_rel)
    if method == "avg":
        return fuse_average(inp, config.solver.occlusion_tau_rel)
    raise ValueError(f"unknown fusion method {method!r}")


def fusion_csv_row(method, views, metrics_list, result) -> str:
    pix = np.mean([m.pixel_accuracy for m in metrics_list])
    cls = np.mean([m.class_accuracy for m in metrics_list])
    miou = np.mean([m.miou for m in metrics_list])
    e0 = np.mean([float(e.mean()) for e in result.entropy_init])
    e1 = np.mean([float(e.mean()) for e in result.entropy_opt])
    return f"{method},{views},{pix:.6f},{cls:.6f},{miou:.6f},{e0:.6f},{e1:.6f}"


def cmd_fuse(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    seq = read_sequence(args.inp, max_frames=args.views)
    if len(seq.frames) < args.views:
        raise ValueError(f"{args.inp}: requested {args.views} views but only {len(seq.frames)} frames exist")
    if any(f.gt_depth is None or f.gt_pose is None for f in seq.frames):
        raise ValueError(f"{args.inp}: fusion needs ground-truth depth and poses in the sequence")
    inp = FusionInput(
        [FusionFrame(f.bundle, f.gt_pose, gt_depth=f.gt_depth, gt_labels=f.gt_labels) for f in seq.frames],
        seq.intrinsics,
    )
    result = _fusion_result(args.method, inp, config)
    metrics = [
        compute_metrics(labels, f.gt_labels, class_count=seq.class_count)
        for labels, f in zip(result.labels, seq.frames)
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    row = fusion_csv_row(args.method, args.views, metrics, result)
    (out / "metrics.csv").write_text(FUSION_CSV_HEADER + "\n" + row + "\n")
    ln_c = float(np.log(seq.class_count))
    for k in range(len(seq.frames)):
        write_labels(out / f"labels_{k:02d}.ppm", result.labels[k], seq.class_count)
        write_pgm_normalized(out / f"entropy_init_{k:02d}.pgm", result.entropy_init[k], fixed_range=(0.0, ln_c))
        write_pgm_normalized(out / f"entropy_opt_{k:02d}.pgm", result.entropy_opt[k], fixed_range=(0.0, ln_c))
    print(row)
    return 0


def cmd_sfm(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    try:
        i, j = (int(tok) for tok in args.frames.split(","))
    except ValueError as exc:
        raise UsageError(f"--frames expects 'i,j', got {args.frames!r}") from exc
    seq = read_sequence(args.inp, max_frames=max(i, j) + 1, need_gt=False)
    fa, fb = seq.frames[i], seq.frames[j]

    kf = Keyframe(0, fa.image, Pose.identity(), np.zeros(seq.code_size), np.zeros(seq.code_size), fa.bundle)
    tracked = track(fb.image, kf, seq.intrinsics, config.slam)
    if tracked.lost:
        raise RuntimeError(f"two-view tracking failed: {tracked.reason}")

    frames = [
        FrameState(Pose.identity(), np.zeros(seq.code_size), np.zeros(seq.code_size),
                   bundle=fa.bundle, image=fa.image, pose_frozen=True),
        FrameState(tracked.pose.inverse(), np.zeros(seq.code_size), np.zeros(seq.code_size),
                   bundle=fb.bundle, image=fb.image),
    ]
    problem = Problem(frames, seq.intrinsics, config=config.solver)
    for kind in ("photo", "geo", "sem"):
        problem.add_pair(kind, 0, 1)
        problem.add_pair(kind, 1, 0)
    for k in (0, 1):
        add_prior(problem, k, "depth")
        add_prior(problem, k, "semantic")
    reports = schedule_mapping_pass(problem, config.slam.mapping_iterations)

    window = MapWindow(max_size=2)
    for kf_id, (frame_idx, state) in enumerate(zip((i, j), frames)):
        window.add(Keyframe(kf_id, state.image, state.pose, state.code_depth, state.code_sem,
                            state.bundle, frame_id=frame_idx))
    export_map(window, seq.intrinsics, args.out)
    summary = {
        "frames": [i, j],
        "phases": [
            {"phase": r.phase, "iterations": len(r.iterations), "final_cost": r.final_cost}
            for r in reports
        ],
        "relative_pose": pose_line(j, frames[1].pose),
    }
    (Path(args.out) / "report.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"two-view reconstruction written to {args.out}")
    return 0


def cmd_slam(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    seq = read_sequence(args.inp, need_gt=False)
    system = SlamSystem(seq.intrinsics, config.slam)
    result = system.run((f.image, f.bundle) for f in seq.frames)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [pose_line(fid, pose) for fid, pose in result.trajectory]
    (out / "trajectory.txt").write_text("\n".join(lines) + "\n")
    export_map(result.window, seq.intrinsics, out / "map")

    rot_drift = trans_drift = ""
    gt_traj = Path(args.inp) / "gt" / "trajectory.txt"
    if gt_traj.exists() and result.trajectory:
        poses = dict(parse_pose_line(line) for line in gt_traj.read_text().splitlines() if line.strip())
        fid, est = result.trajectory[-1]
        first_id = result.trajectory[0][0]
        if fid in poses and first_id in poses:
            est_w = poses[first_id].compose(est)  # gauge: anchor at the first frame
            err = se3_log(est_w.compose(poses[fid].inverse()))
            rot_drift = f"{np.rad2deg(np.linalg.norm(err[3:])):.6f}"
            trans_drift = f"{np.linalg.norm(est_w.translation - poses[fid].translation):.6f}"
    row = f"{len(result.trajectory)},{len(result.keyframes)},{int(result.lost)},{rot_drift},{trans_drift}"
    (out / "metrics.csv").write_text(SLAM_CSV_HEADER + "\n" + row + "\n")
    if result.lost:
        print(f"tracking lost: {result.lost_reason}")
        return 2
    print(row)
    return 0


def cmd_eval(args) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    pred_files = sorted(pred_dir.glob("*_labels.pgm")) or sorted(pred_dir.glob("labels_*.pgm"))
    if not pred_files:
        raise FileNotFoundError(f"{pred_dir}: no label maps (*_labels.pgm) found")
    gt_files = sorted(gt_dir.glob("gt/labels_*.pgm")) or sorted(gt_dir.glob("labels_*.pgm"))
    if not gt_files:
        raise FileNotFoundError(f"{gt_dir}: no ground-truth label maps found")
    # pair by the frame index embedded in the file names
    gt_by_index = {_trailing_index(p): p for p in gt_files}
    print("file,pix_acc,cls_acc,miou")
    for pred_path in pred_files:
        idx = _trailing_index(pred_path)
        if idx not in gt_by_index:
            raise ValueError(f"no ground-truth label map for frame {idx} ({pred_path.name})")
        pred = read_pgm(pred_path).astype(np.int64)
        gt = read_pgm(gt_by_index[idx]).astype(np.int64)
        m = compute_metrics(pred, gt)
        print(f"{pred_path.name},{m.pixel_accuracy:.6f},{m.class_accuracy:.6f},{m.miou:.6f}")
    return 0


def _trailing_index(path: Path) -> int:
    import re

    nums = re.findall(r"\d+", path.stem)
    if not nums:
        raise ValueError(f"{path.name}: no frame index in file name")
    return int(nums[-1])


def cmd_validate_bundle(args) -> int:
    bundle = read_bundle(args.path)
    rng = np.random.default_rng(0)
    c1 = rng.normal(0, 0.5, bundle.code_size)
    c2 = rng.normal(0, 0.5, bundle.code_size)
    zero = np.zeros(bundle.code_size)
    # superposition on both decoders
    d_err = np.max(np.abs(
        (predict_depth(bundle, c1).proximity.values + predict_depth(bundle, c2).proximity.values)
        - (predict_depth(bundle, c1 + c2).proximity.values + predict_depth(bundle, zero).proximity.values)
    ))
    s_err = np.max(np.abs(
        (predict_semantics(bundle, c1) + predict_semantics(bundle, c2))
        - (predict_semantics(bundle, c1 + c2) + predict_semantics(bundle, zero))
    ))
    h, w = bundle.shape
    print(f"{args.path}: {h}x{w}, C={bundle.class_count}, B={bundle.code_size}, a={bundle.avg_depth}")
    print(f"superposition error: depth {d_err:.3g}, semantics {s_err:.3g}")
    if max(d_err, s_err) > 1e-5:
        raise ValueError("bundle fails the linearity check (> 1e-5); decoder is not linear in the code")
    print("linearity OK")
    return 0


def cmd_config(args) -> int:
    sys.stdout.write(default_config_json())
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="codedscene", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic sequence with bundles")
    p.add_argument("--spec", help="JSON spec file ({preset, seed, frames})")
    p.add_argument("--preset", default="ambiguity", help=f"one of {sorted(PRESETS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fuse", help="multi-view semantic label fusion")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--views", type=int, required=True)
    p.add_argument("--method", choices=("code", "mult", "avg", "code-noprior"), default="code")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("sfm", help="two-view dense semantic structure from motion")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--frames", required=True, help="pair of frame indices, e.g. 0,3")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_sfm)

    p = sub.add_parser("slam", help="full tracking + mapping run over a sequence")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_slam)

    p = sub.add_parser("eval", help="segmentation metrics of predictions vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate-bundle", help="check a bundle file's format and linearity")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate_bundle)

    p = sub.add_parser("config", help="print the default config JSON")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (UsageError,) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (BundleFormatError, ConfigError, SolverError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
