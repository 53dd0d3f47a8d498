"""Compare the compiled and numpy Euler residual kernels.

Usage: python benchmarks/bench_kernels.py [--repeat 200] [--solve]

Times one residual evaluation on the default NACA0012 O-mesh for each
backend, checks that both agree, and optionally times a full FOM solve.
"""
import argparse
import time

import numpy as np

from liftrom import kernels
from liftrom.case import naca_case
from liftrom.euler import FlowState, _face_sets, _to_conservative, solve_euler


def _time_residual(fn, args, repeat):
    fn(*args)  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--solve", action="store_true", help="also time a converged FOM solve per backend")
    args = p.parse_args(argv)

    case = naca_case()
    theta = case.base.theta[case.active]
    mesh = case.mesh_at(theta)
    fs = case.freestream
    inner, wall, far = _face_sets(mesh)
    a = fs.a_inf
    uinf, vinf = fs.velocity
    winf = np.array([1.0, uinf / a, vinf / a, fs.p_inf / (fs.rho_inf * a * a)])
    rng = np.random.default_rng(0)
    st = FlowState.uniform(fs, mesh.n_cells)
    U = _to_conservative(
        st.rho / fs.rho_inf * (1 + 0.01 * rng.standard_normal(mesh.n_cells)),
        st.u / a, st.v / a, st.p / (fs.rho_inf * a * a), fs.gamma,
    )

    backends = ["python"]
    try:
        kernels.get_backend("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled backend unavailable; timing the numpy fallback only")

    results = {}
    for name in backends:
        R = np.empty_like(U)
        lam = np.empty(mesh.n_cells)
        fn = kernels.get_backend(name)
        t = _time_residual(fn, (U, inner, wall, far, winf, fs.gamma, R, lam), args.repeat)
        results[name] = (t, R.copy())
        print(f"{name:>7}: {1e3 * t:8.3f} ms per residual  (N={mesh.n_cells})")
    if len(results) == 2:
        diff = np.abs(results["cython"][1] - results["python"][1]).max()
        print(f"speedup: {results['python'][0] / results['cython'][0]:.1f}x   max |dR| = {diff:.2e}")

    if args.solve:
        for name in backends:
            t0 = time.perf_counter()
            s = solve_euler(mesh, fs, backend=name)
            print(f"{name:>7}: FOM solve {time.perf_counter() - t0:6.2f} s, {s.info['iterations']} iterations")


if __name__ == "__main__":
    main()
