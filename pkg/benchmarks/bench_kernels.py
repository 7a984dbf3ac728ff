"""Compare the compiled and pure-Python search kernels.

    python3 benchmarks/bench_kernels.py [--grid-step 0.05] [--repeat 3]

Times the coarse scan, a batch of Nelder-Mead refinements and a full
worst-case search for each aggregator, and checks that both backends return
the same numbers.
"""
import argparse
import time

import numpy as np

from brnagg import _backend
from brnagg.aggregators import AVERAGE_PRIOR, SIMPLE_AVERAGE, balancing
from brnagg.regret import OptimizerConfig, _kernel_args, worst_case_regret

SPECS = [SIMPLE_AVERAGE, AVERAGE_PRIOR, balancing(0.7)]


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(grid_step=0.05, repeat=3, lam=0.8, backends=None):
    backends = backends or _backend.available()
    cfg = OptimizerConfig(grid_step=grid_step, threads=1)
    grid = cfg.grid()
    n = grid.shape[0]
    starts = np.random.default_rng(0).uniform(0.05, 0.95, size=(16, 5)).tolist()
    rows = []
    for spec in SPECS:
        kind, lh = _kernel_args(spec)
        results = {}
        for name in backends:
            kern = _backend.load(name)
            t_scan, scan = best_of(lambda: kern.scan_block(kind, lh, lam, grid, 0, n, 32), repeat)
            t_nm, nm = best_of(
                lambda: [kern.nelder_mead(kind, lh, lam, x, grid_step / 2, 200, 1e-9) for x in starts], repeat
            )
            t_full, full = best_of(lambda: worst_case_regret(spec, lam, cfg, backend=name), 1)
            results[name] = (scan, nm, full)
            rows.append((str(spec), name, t_scan, t_nm, t_full, full.regret))
        if len(results) == 2:
            (sc, nc, fc), (sp, np_, fp) = results["cython"], results["python"]
            assert np.array_equal(sc[1], sp[1]), "scan candidates differ between backends"
            assert max(abs(a[0] - b[0]) for a, b in zip(nc, np_)) <= 1e-12
            assert abs(fc.regret - fp.regret) <= 1e-12
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid-step", type=float, default=0.05)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.8)
    args = ap.parse_args()
    rows = run(args.grid_step, args.repeat, args.lam)
    print(f"{'aggregator':<16}{'backend':<9}{'scan s':>9}{'16xNM s':>9}{'search s':>10}  regret")
    for spec, name, t_scan, t_nm, t_full, value in rows:
        print(f"{spec:<16}{name:<9}{t_scan:>9.3f}{t_nm:>9.3f}{t_full:>10.3f}  {value:.9f}")
    by = {}
    for spec, name, t_scan, _, t_full, _ in rows:
        by.setdefault(spec, {})[name] = t_full
    for spec, t in by.items():
        if len(t) == 2:
            print(f"speed-up on full search for {spec}: {t['python'] / t['cython']:.1f}x")


if __name__ == "__main__":
    main()
