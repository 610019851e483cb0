"""Compiled kernels vs the pure-Python fallback on the same workloads.

Each workload runs in a fresh interpreter, once with numba and once with
FRAGSCOPE_NO_NUMBA=1, so both paths execute the very same source.  The
compiled timing excludes the first (compiling) call.  Results also check that
both paths produce identical numbers.

    python3 benchmarks/bench_kernels.py [--scale 1.0]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, math, sys, time
import numpy as np
from fragscope import engine, fluctuation as fl, tagged
from fragscope.exponent import solve_pbar
from fragscope.model import DislocationModel, make_policy

name, scale = sys.argv[1], float(sys.argv[2])
m = DislocationModel.binary_uniform()
pol, prof = make_policy(m), solve_pbar(m)


def run(size, seed):
    rng = np.random.default_rng(seed)
    if name == "engine":
        r = engine.run(m, pol, size, [size], prof, 0.3, rng)
        return float(r.martingale[0])
    if name == "particle_sums":
        return float(engine.particle_sums(m, pol, prof, 2.0, int(size), 0.0, 0.05, rng).sum())
    if name == "tagged":
        xi, _ = tagged.tagged_endpoints(m, pol, 5.0, "Q", prof, int(size), rng)
        return float(xi.sum())
    if name == "killed":
        poi = fl.SpectrallyPositiveLevy.compensated_poisson()
        return float(fl._killed(poi, int(size), 32.0, -1.0, 32.0, -1.0, rng)[0].sum())
    raise SystemExit(f"unknown workload {name}")


sizes = {"engine": 30.0, "particle_sums": 20000, "tagged": 200000, "killed": 50000}
full = sizes[name] * scale if name != "engine" else sizes[name]
small = full / 100 if name != "engine" else 5.0
run(small, 0)  # compile or import warm-up
t0 = time.perf_counter()
value = run(full, 1)
print(json.dumps({"seconds": time.perf_counter() - t0, "value": value}))
"""

WORKLOADS = ("engine", "particle_sums", "tagged", "killed")


def measure(name, scale, fallback):
    env = dict(os.environ, FRAGSCOPE_NO_NUMBA="1" if fallback else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, name, str(scale)], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiply the batch sizes")
    ap.add_argument("--only", choices=WORKLOADS, nargs="*")
    args = ap.parse_args()
    print(f"{'workload':<15}{'numba s':>10}{'python s':>11}{'speedup':>10}  same")
    for name in args.only or WORKLOADS:
        fast = measure(name, args.scale, False)
        slow = measure(name, args.scale, True)
        speedup = slow["seconds"] / fast["seconds"] if fast["seconds"] > 0 else float("inf")
        print(f"{name:<15}{fast['seconds']:>10.3f}{slow['seconds']:>11.3f}{speedup:>9.1f}x  "
              f"{fast['value'] == slow['value']}")


if __name__ == "__main__":
    main()
