"""Damped Gauss-Newton over pairwise residual blocks and zero-code priors.

A Problem holds per-keyframe variables (pose increment in R^6, depth code,
semantic code; any of them freezable) plus a list of typed residual blocks.
Each iteration decodes the current maps, evaluates every block, robustifies
per-pixel residual norms with Huber IRLS weights, assembles dense normal
equations over the active variables, and applies a Levenberg-style damped
step: mu shrinks by 2 on acceptance and grows by 4 on rejection, and a step
is accepted only if the fully re-evaluated robust cost does not increase --
so accepted steps are monotone by construction. Poses update by the
left-multiplicative exponential, codes additively.

The mapping schedule runs three phases over one problem: geometry and poses
on photometric + geometric terms, then semantic codes alone on semantic
terms (data association frozen at the phase-1 result), then everything
jointly. Setting the semantic prior weight to zero is supported and flagged
in the report; the fusion ablation uses it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .decoder import DecoderBundle, predict_depth, predict_semantics
from .geometry import Intrinsics, Pose, ProximityMap, se3_exp
from .residuals import (
    ResidualEval,
    geometric_residual,
    normals_from_depth,
    photometric_residual,
    semantic_residual,
    validity_and_slant,
    warp,
    warp_derivatives,
)

PAIR_KINDS = ("photo", "geo", "sem")
PRIOR_KINDS = ("prior_depth", "prior_sem")
ALL_KINDS = PAIR_KINDS + PRIOR_KINDS + ("linear",)
GROUPS = ("pose", "depth", "sem")


class SolverError(RuntimeError):
    """Raised when the solve aborts; carries the diagnostic report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolverConfig:
    lambda_photo: float = 1.0
    lambda_geo: float = 1.0
    lambda_sem: float = 1.0
    lambda_prior_depth: float = 1.0
    lambda_prior_sem: float = 1.0
    huber_photo: float = 0.1
    huber_geo: float = 0.05
    huber_sem: float = 0.2
    occlusion_tau_rel: float = 0.05  # fraction of the depth scale
    max_iterations: int = 30
    step_tol: float = 1e-8
    cost_tol: float = 1e-9
    mu_init: float = 1e-4
    mu_accept: float = 0.5
    mu_reject: float = 4.0
    max_rejects: int = 10

    def huber(self, kind: str) -> float:
        return {"photo": self.huber_photo, "geo": self.huber_geo, "sem": self.huber_sem}[kind]

    @staticmethod
    def noise_normalized(photo_sigma: float = 0.01, geo_sigma: float = 0.01) -> "SolverConfig":
        """Weights set to 1/sigma^2 for the dense terms against a unit code prior.

        The defaults above treat every term equally; this variant weights the
        photometric and geometric residuals by their expected noise floors so
        that a few thousand pixels of evidence dominate the zero-code prior,
        which is what recovery-style problems need.
        """
        return SolverConfig(
            lambda_photo=1.0 / photo_sigma**2,
            lambda_geo=1.0 / geo_sigma**2,
            lambda_sem=1.0,
        )

    def weight(self, kind: str) -> float:
        return {
            "photo": self.lambda_photo,
            "geo": self.lambda_geo,
            "sem": self.lambda_sem,
            "prior_depth": self.lambda_prior_depth,
            "prior_sem": self.lambda_prior_sem,
            "linear": 1.0,  # scaling lives in the block's matrix
        }[kind]


@dataclass
class FrameState:
    """Variables and data of one keyframe inside a Problem."""

    pose: Pose
    code_depth: np.ndarray
    code_sem: np.ndarray
    bundle: DecoderBundle | None = None
    image: np.ndarray | None = None
    pose_frozen: bool = False
    depth_frozen: bool = False
    sem_frozen: bool = False
    fixed_prox: ProximityMap | None = None  # ground-truth association override

    def __post_init__(self):
        self.code_depth = np.asarray(self.code_depth, dtype=np.float64).copy()
        self.code_sem = np.asarray(self.code_sem, dtype=np.float64).copy()


@dataclass(frozen=True)
class PairBlock:
    kind: str  # photo | geo | sem
    frame_a: int
    frame_b: int

    def __post_init__(self):
        if self.kind not in PAIR_KINDS:
            raise ValueError(f"unknown pair kind {self.kind!r}")


@dataclass(frozen=True)
class PriorBlock:
    frame: int
    code: str  # depth | semantic
    weight: float = 1.0

    def __post_init__(self):
        if self.code not in ("depth", "semantic"):
            raise ValueError(f"unknown prior code {self.code!r}")
        if self.weight <= 0:
            raise ValueError("prior weight must be positive")

    @property
    def kind(self) -> str:
        return "prior_depth" if self.code == "depth" else "prior_sem"


@dataclass(frozen=True)
class LinearBlock:
    """Exactly linear residual A c - b on one code; quadratic, never robustified.

    Generalizes the zero-code prior (A = sqrt(w) I, b = 0); used for external
    anchors and for checking the solver against closed-form least squares.
    """

    frame: int
    code: str  # depth | semantic
    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        if self.code not in ("depth", "semantic"):
            raise ValueError(f"unknown code {self.code!r}")
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=np.float64))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64))
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.offset):
            raise ValueError("matrix rows must match the offset length")

    @property
    def kind(self) -> str:
        return "linear"


@dataclass
class Problem:
    frames: list[FrameState]
    intrinsics: Intrinsics
    blocks: list = field(default_factory=list)
    config: SolverConfig = field(default_factory=SolverConfig)

    def add_pair(self, kind: str, frame_a: int, frame_b: int) -> PairBlock:
        block = PairBlock(kind, frame_a, frame_b)
        self.blocks.append(block)
        return block

    def validate(self):
        has_pairs = any(isinstance(b, PairBlock) for b in self.blocks)
        any_pose_active = any(not f.pose_frozen for f in self.frames)
        some_pose_frozen = any(f.pose_frozen for f in self.frames)
        if has_pairs and any_pose_active and not some_pose_frozen:
            raise ValueError("gauge freedom: freeze at least one pose")
        for f in self.frames:
            for arr in (f.code_depth, f.code_sem):
                if not np.all(np.isfinite(arr)):
                    raise ValueError("non-finite code in problem")


def add_prior(problem: Problem, frame: int, code: str, weight: float = 1.0) -> PriorBlock:
    """Quadratic pull of one code toward zero: residual sqrt(w) * c."""
    block = PriorBlock(frame, code, weight)
    problem.blocks.append(block)
    return block


@dataclass
class IterationRecord:
    cost: float  # cost before the step
    cost_after: float
    cost_by_kind: dict[str, float]
    mu: float
    step_norm: float
    accepted: bool
    rejections: int


@dataclass
class SolveReport:
    iterations: list[IterationRecord]
    termination: str
    initial_cost: float
    final_cost: float
    final_cost_by_kind: dict[str, float]
    semantic_prior_disabled: bool
    phase: str | None = None

    @property
    def accepted_steps(self) -> int:
        return sum(1 for it in self.iterations if it.accepted)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class _FrameCache:
    prox: ProximityMap | None
    clamped: np.ndarray | None
    logits: np.ndarray | None
    normals: np.ndarray | None


def _decode_frames(problem: Problem, need_sem: bool, need_pairs: bool) -> list[_FrameCache]:
    caches = []
    for f in problem.frames:
        prox = clamped = logits = normals = None
        if f.fixed_prox is not None:
            prox = f.fixed_prox
            clamped = np.zeros(prox.values.shape, dtype=bool)
        elif f.bundle is not None and need_pairs:
            pred = predict_depth(f.bundle, f.code_depth)
            prox, clamped = pred.proximity, pred.clamped
        if prox is not None and need_pairs:
            depth, _ = prox.to_depth()
            normals = normals_from_depth(depth, problem.intrinsics)
        if need_sem and f.bundle is not None:
            logits = predict_semantics(f.bundle, f.code_sem)
        caches.append(_FrameCache(prox, clamped, logits, normals))
    return caches


def _relative_pose(pose_wa: Pose, pose_wb: Pose) -> Pose:
    return pose_wb.inverse().compose(pose_wa)


def _evaluate_pair(
    problem: Problem,
    caches: list[_FrameCache],
    block: PairBlock,
    with_jacobians: bool,
) -> ResidualEval:
    fa = problem.frames[block.frame_a]
    fb = problem.frames[block.frame_b]
    ca = caches[block.frame_a]
    cb = caches[block.frame_b]
    if ca.prox is None:
        raise SolverError(f"frame {block.frame_a} has no depth source for {block.kind} block")
    intr = problem.intrinsics

    pose_ba = _relative_pose(fa.pose, fb.pose)
    corr = warp(ca.prox, pose_ba, intr, pose_wa=fa.pose, invalid_a=ca.clamped)
    if cb.prox is not None:
        corr.slant_weight = validity_and_slant(
            corr,
            ca.prox,
            cb.prox,
            intr,
            normals_a=ca.normals,
            occlusion_tau=problem.config.occlusion_tau_rel * ca.prox.avg_depth,
        )
        corr.slant_weight = np.where(corr.valid, corr.slant_weight, 0.0)
    else:
        ui = corr.pixels_u.astype(np.intp)
        vi = corr.pixels_v.astype(np.intp)
        n = ca.normals[vi, ui]
        rays = corr.rays / np.linalg.norm(corr.rays, axis=1, keepdims=True)
        corr.slant_weight = corr.valid * np.clip(-np.sum(n * rays, axis=1), 0.0, 1.0)

    deriv = None
    if with_jacobians:
        need_code = fa.bundle is not None and not fa.depth_frozen
        jd_rows = None
        if need_code:
            ui = corr.pixels_u.astype(np.intp)
            vi = corr.pixels_v.astype(np.intp)
            jd_rows = fa.bundle.jd[vi, ui]
        deriv = warp_derivatives(corr, intr, jd_rows)

    if block.kind == "photo":
        if fa.image is None or fb.image is None:
            raise SolverError("photo block needs images on both frames")
        return photometric_residual(fa.image, fb.image, corr, deriv)
    if block.kind == "geo":
        if cb.prox is None:
            raise SolverError("geo block needs a depth source on the target frame")
        jd_b = fb.bundle.jd if (fb.bundle is not None and not fb.depth_frozen) else None
        return geometric_residual(cb.prox, jd_b, corr, deriv, clamped_b=cb.clamped)
    # semantic
    if ca.logits is None or cb.logits is None:
        raise SolverError("sem block needs bundles on both frames")
    ui = corr.pixels_u.astype(np.intp)
    vi = corr.pixels_v.astype(np.intp)
    js_a = fa.bundle.js[vi, ui] if (with_jacobians and not fa.sem_frozen) else None
    js_b = fb.bundle.js if (with_jacobians and not fb.sem_frozen) else None
    return semantic_residual(ca.logits[vi, ui], js_a, cb.logits, js_b, corr, deriv)


_SLOT_TARGETS = {
    "pose_a": ("frame_a", "pose"),
    "pose_b": ("frame_b", "pose"),
    "code_d_a": ("frame_a", "depth"),
    "code_d_b": ("frame_b", "depth"),
    "code_s_a": ("frame_a", "sem"),
    "code_s_b": ("frame_b", "sem"),
}


class _Layout:
    """Flat indexing of the active (frame, group) variable segments."""

    def __init__(self, problem: Problem, active_groups: set[str]):
        self.slices: dict[tuple[int, str], slice] = {}
        offset = 0
        for idx, f in enumerate(problem.frames):
            for group, frozen, size in (
                ("pose", f.pose_frozen, 6),
                ("depth", f.depth_frozen, len(f.code_depth)),
                ("sem", f.sem_frozen, len(f.code_sem)),
            ):
                if group in active_groups and not frozen:
                    self.slices[(idx, group)] = slice(offset, offset + size)
                    offset += size
        self.size = offset

    def apply(self, problem: Problem, step: np.ndarray):
        for (idx, group), sl in self.slices.items():
            f = problem.frames[idx]
            if group == "pose":
                f.pose = se3_exp(step[sl]).compose(f.pose)
            elif group == "depth":
                f.code_depth = f.code_depth + step[sl]
            else:
                f.code_sem = f.code_sem + step[sl]


def _evaluate(
    problem: Problem,
    kinds: set[str],
    layout: _Layout | None,
) -> tuple[float, dict[str, float], np.ndarray | None, np.ndarray | None]:
    """Robust total cost, per-kind costs, and (optionally) normal equations."""
    cfg = problem.config
    with_jac = layout is not None
    selected_pairs = [b for b in problem.blocks if isinstance(b, PairBlock) and b.kind in kinds]
    need_sem = any(b.kind == "sem" for b in selected_pairs)
    caches = _decode_frames(problem, need_sem, bool(selected_pairs))

    total = 0.0
    by_kind = {k: 0.0 for k in ALL_KINDS}
    h_mat = np.zeros((layout.size, layout.size)) if with_jac else None
    g_vec = np.zeros(layout.size) if with_jac else None

    for block in problem.blocks:
        if block.kind not in kinds:
            continue
        lam = cfg.weight(block.kind)
        if lam == 0.0:
            continue
        if isinstance(block, LinearBlock):
            f = problem.frames[block.frame]
            code = f.code_depth if block.code == "depth" else f.code_sem
            r = block.matrix @ code - block.offset
            cost = 0.5 * float(r @ r)
            total += cost
            by_kind["linear"] += cost
            if with_jac:
                group = "depth" if block.code == "depth" else "sem"
                sl = layout.slices.get((block.frame, group))
                if sl is not None:
                    h_mat[sl, sl] += block.matrix.T @ block.matrix
                    g_vec[sl] -= block.matrix.T @ r
            continue
        if isinstance(block, PriorBlock):
            f = problem.frames[block.frame]
            code = f.code_depth if block.code == "depth" else f.code_sem
            lam_eff = lam * block.weight
            cost = 0.5 * lam_eff * float(code @ code)
            total += cost
            by_kind[block.kind] += cost
            if with_jac:
                group = "depth" if block.code == "depth" else "sem"
                sl = layout.slices.get((block.frame, group))
                if sl is not None:
                    idx = np.arange(sl.start, sl.stop)
                    h_mat[idx, idx] += lam_eff
                    g_vec[idx] -= lam_eff * code
            continue

        ev = _evaluate_pair(problem, caches, block, with_jac)
        norms = np.linalg.norm(ev.values, axis=1)
        delta = cfg.huber(block.kind)
        small = norms <= delta
        rho = np.where(small, 0.5 * norms**2, delta * (norms - 0.5 * delta))
        w_pix = ev.weight
        cost = lam * float(w_pix @ rho)
        total += cost
        by_kind[block.kind] += cost
        if not with_jac:
            continue

        irls = np.where(small, 1.0, delta / np.maximum(norms, 1e-300))
        w_rows = lam * w_pix * irls
        rows = w_rows > 0
        if not np.any(rows):
            continue
        n_sel = int(rows.sum())
        depth = ev.values.shape[1]
        slots = []
        for slot, jac in ev.jacobians.items():
            attr, group = _SLOT_TARGETS[slot]
            target = layout.slices.get((getattr(block, attr), group))
            if target is not None:
                slots.append((jac[rows], target))
        if not slots:
            continue
        width = sum(j.shape[2] for j, _ in slots)
        j_full = np.empty((n_sel * depth, width))
        cols = []
        at = 0
        for jac, target in slots:
            j_full[:, at : at + jac.shape[2]] = jac.reshape(n_sel * depth, jac.shape[2])
            cols.append((slice(at, at + jac.shape[2]), target))
            at += jac.shape[2]
        r_sel = ev.values[rows].reshape(n_sel * depth)
        w_sel = np.repeat(w_rows[rows], depth)
        jw = j_full * w_sel[:, None]
        h_block = j_full.T @ jw
        g_block = -(jw.T @ r_sel)
        for sl_i, tgt_i in cols:
            g_vec[tgt_i] += g_block[sl_i]
            for sl_j, tgt_j in cols:
                h_mat[tgt_i, tgt_j] += h_block[sl_i, sl_j]
    return total, by_kind, h_mat, g_vec


def _snapshot(problem: Problem):
    return [(f.pose, f.code_depth.copy(), f.code_sem.copy()) for f in problem.frames]


def _restore(problem: Problem, snap):
    for f, (pose, cd, cs) in zip(problem.frames, snap):
        f.pose = pose
        f.code_depth = cd
        f.code_sem = cs


def gauss_newton(
    problem: Problem,
    max_iters: int | None = None,
    *,
    kinds: set[str] | None = None,
    active_groups: set[str] | None = None,
    phase: str | None = None,
) -> SolveReport:
    """Minimize the robustified cost; mutates the problem's frames in place.

    ``kinds`` restricts the residual kinds evaluated (default all);
    ``active_groups`` restricts which variable groups move. Frozen flags on
    frames are always respected on top.
    """
    cfg = problem.config
    problem.validate()
    kinds = set(ALL_KINDS) if kinds is None else set(kinds)
    groups = set(GROUPS) if active_groups is None else set(active_groups)
    layout = _Layout(problem, groups)
    if max_iters is None:
        max_iters = cfg.max_iterations

    iterations: list[IterationRecord] = []
    disabled = cfg.lambda_prior_sem == 0.0

    cost, by_kind, h_mat, g_vec = _evaluate(problem, kinds, layout)
    initial_cost = cost
    if not np.isfinite(cost):
        report = SolveReport(iterations, "non_finite", initial_cost, cost, by_kind, disabled, phase)
        raise SolverError("initial cost is not finite", report)
    termination = "max_iters"
    if layout.size == 0:
        termination = "no_variables"
        max_iters = 0
    mu = cfg.mu_init

    for _ in range(max_iters):
        # damping floor relative to the strongest direction: unobserved
        # directions stay put instead of wandering along the null space
        raw_diag = np.diag(h_mat)
        floor = max(1e-6 * float(raw_diag.max(initial=0.0)), 1e-12)
        diag = np.maximum(raw_diag, floor)
        accepted = False
        rejections = 0
        step = None
        cand_cost = cost
        cand_by_kind = by_kind
        for _try in range(cfg.max_rejects):
            damped = h_mat + np.diag(mu * diag)
            try:
                chol = scipy.linalg.cho_factor(damped, check_finite=False)
                step = scipy.linalg.cho_solve(chol, g_vec, check_finite=False)
            except scipy.linalg.LinAlgError:
                mu *= cfg.mu_reject
                rejections += 1
                continue
            snap = _snapshot(problem)
            layout.apply(problem, step)
            cand_cost, cand_by_kind, _, _ = _evaluate(problem, kinds, None)
            if np.isfinite(cand_cost) and cand_cost <= cost:
                accepted = True
                mu *= cfg.mu_accept
                break
            _restore(problem, snap)
            mu *= cfg.mu_reject
            rejections += 1

        step_norm = float(np.linalg.norm(step)) if step is not None and accepted else 0.0
        iterations.append(
            IterationRecord(cost, cand_cost if accepted else cost, dict(by_kind), mu, step_norm, accepted, rejections)
        )
        if not accepted:
            termination = "stalled"
            break
        decrease = cost - cand_cost
        cost, by_kind = cand_cost, cand_by_kind
        if step_norm < cfg.step_tol:
            termination = "step_tol"
            break
        if decrease < cfg.cost_tol * max(cost, 1e-30):
            termination = "cost_tol"
            break
        _, _, h_mat, g_vec = _evaluate(problem, kinds, layout)
        if not np.isfinite(cost):
            report = SolveReport(iterations, "non_finite", initial_cost, cost, by_kind, disabled, phase)
            raise SolverError("cost became non-finite", report)

    return SolveReport(iterations, termination, initial_cost, cost, dict(by_kind), disabled, phase)


MAPPING_PHASES = (
    # (name, residual kinds, variable groups)
    ("geometry", {"photo", "geo", "prior_depth"}, {"pose", "depth"}),
    ("semantics", {"sem", "prior_sem"}, {"sem"}),
    ("joint", set(ALL_KINDS), set(GROUPS)),
)


def schedule_mapping_pass(problem: Problem, max_iters: int | None = None) -> list[SolveReport]:
    """Run the three-phase mapping schedule.

    Phase 1 solves poses and depth codes on photometric + geometric terms;
    phase 2 solves semantic codes alone on semantic terms, with data
    association recomputed from the phase-1 geometry; phase 3 solves
    everything jointly. Returns one report per phase.
    """
    reports = []
    for name, kinds, groups in MAPPING_PHASES:
        reports.append(
            gauss_newton(problem, max_iters, kinds=kinds, active_groups=groups, phase=name)
        )
    return reports
