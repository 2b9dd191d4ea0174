"""Compare the compiled sampling kernels against the numpy fallback.

Times the raw kernels on demo-scale workloads plus one full residual
evaluation pass through each backend. Run from the repo root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from codedscene.kernels import _native  # noqa: F401  (fails loudly if not built)
from codedscene.kernels import reference


def timeit(fn, *args, repeat=30):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernels():
    from codedscene.kernels import _native as native

    rng = np.random.default_rng(0)
    rows = []
    for h, w, tag in ((48, 64, "desk 64x48"), (192, 256, "demo 256x192")):
        n = h * w
        u = rng.uniform(0, w - 1.001, n)
        v = rng.uniform(0, h - 1.001, n)
        grid = rng.normal(size=(h, w))
        vol16 = rng.normal(size=(h, w, 16))
        vol96 = rng.normal(size=(h, w, 96))
        cases = [
            (f"bilinear_map        {tag}", (grid, u, v), "bilinear_map"),
            (f"bilinear_volume B16 {tag}", (vol16, u, v), "bilinear_volume"),
            (f"bilinear_volume_val {tag}", (vol96, u, v), "bilinear_volume_values"),
        ]
        for label, args, fn_name in cases:
            t_native = timeit(getattr(native, fn_name), *args)
            t_ref = timeit(getattr(reference, fn_name), *args)
            rows.append((label, t_native, t_ref))
    return rows


def bench_residual_pass():
    from codedscene.decoder import predict_depth, predict_semantics
    from codedscene.residuals import (
        geometric_residual,
        photometric_residual,
        semantic_residual,
        warp,
        warp_derivatives,
    )
    from codedscene.worlds import jacobian_pair

    world = jacobian_pair(0)
    fa, fb = world.frames
    k = world.intrinsics

    def one_pass(kernels_module):
        import codedscene.residuals as res_mod

        saved = res_mod.kernels
        res_mod.kernels = kernels_module
        try:
            pa = predict_depth(fa.bundle, fa.truth.code_depth)
            pb = predict_depth(fb.bundle, fb.truth.code_depth)
            la = predict_semantics(fa.bundle, fa.truth.code_sem)
            lb = predict_semantics(fb.bundle, fb.truth.code_sem)
            corr = warp(pa.proximity, world.pose_b.inverse(), k, invalid_a=pa.clamped)
            ui = corr.pixels_u.astype(np.intp)
            vi = corr.pixels_v.astype(np.intp)
            deriv = warp_derivatives(corr, k, fa.bundle.jd[vi, ui])
            photometric_residual(fa.view.image, fb.view.image, corr, deriv)
            geometric_residual(pb.proximity, fb.bundle.jd, corr, deriv, clamped_b=pb.clamped)
            semantic_residual(la[vi, ui], fa.bundle.js[vi, ui], lb, fb.bundle.js, corr, deriv)
        finally:
            res_mod.kernels = saved

    from codedscene.kernels import _native as native

    t_native = timeit(one_pass, native, repeat=10)
    t_ref = timeit(one_pass, reference, repeat=10)
    return [("full residual+jacobian pass", t_native, t_ref)]


def main():
    print(f"{'workload':36s} {'native':>10s} {'numpy':>10s} {'speedup':>8s}")
    for label, t_native, t_ref in bench_kernels() + bench_residual_pass():
        print(f"{label:36s} {1e3 * t_native:8.3f}ms {1e3 * t_ref:8.3f}ms {t_ref / t_native:7.2f}x")


if __name__ == "__main__":
    main()
