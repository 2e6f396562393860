"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py --repeat 5

Compilation happens in a warm-up call and is reported separately.
"""

import argparse
import time

import numpy as np

from exflow import kernels
from exflow.geometry import make_seed
from exflow.modulators import Modulator


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n):
    curve = make_seed("ellipse:a=2,b=1", n)
    p = np.ascontiguousarray(curve.points)
    nu = np.ascontiguousarray(curve.normal)
    m = Modulator("neg_power", 1.0)
    dt = 0.4 * curve.edges.min() ** 2 / (2 * np.max(m.dpsi(curve.kappa)))
    surf = make_seed("ellipsoid:a=1.5,b=1,c=1", (32, 64))
    sp = np.ascontiguousarray(surf.points)
    sn = np.ascontiguousarray(surf.normal)
    rng = np.random.default_rng(0)
    G = rng.standard_normal((3, 2, 2))
    fdot, X, Y = G[0] @ G[0].T + np.eye(2), G[1] + G[1].T, G[2] @ G[2].T + np.eye(2)
    grid = np.linspace(-2, 2, 41)
    return {
        f"ball_extrema curve N={n}": lambda k: k["ball_extrema"](p, nu),
        "ball_extrema surface 32x64": lambda k: k["ball_extrema"](sp, sn),
        f"self_intersects N={n}": lambda k: k["curve_self_intersects"](p),
        f"curve_advance N={n} x200": lambda k: k["curve_advance"](p, 200, dt, m.code, m.alpha, 1.0, False),
        "lambda_grid 41^4": lambda k: k["lambda_grid_max"](fdot, X, Y, grid),
        "sphere_rk4 1e5 steps": lambda k: k["sphere_rk4"](m.code, m.alpha, 1.0, 1.0, 1e-5, 100_000),
    }


def flavour(suffix):
    names = ("ball_extrema", "curve_self_intersects", "curve_advance", "lambda_grid_max", "sphere_rk4")
    return {name: getattr(kernels, f"{name}_{suffix}") for name in names}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024, help="curve vertex count")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    nb, npy = flavour("numba"), flavour("numpy")
    print(f"{'kernel':32s} {'compile':>9s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for label, call in cases(args.n).items():
        t0 = time.perf_counter()
        call(nb)
        compile_s = time.perf_counter() - t0
        t_nb = best_of(lambda: call(nb), args.repeat)
        t_np = best_of(lambda: call(npy), args.repeat)
        print(f"{label:32s} {compile_s:9.3f} {t_nb:10.5f} {t_np:10.5f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
