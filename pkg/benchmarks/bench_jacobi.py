"""Compare the compiled Jacobi eigensolver with the pure-Python fallback.

Usage: python benchmarks/bench_jacobi.py [--repeat N]

The kernel table times one decomposition of a random Hermitian matrix per
size (numpy's LAPACK eigh is listed as a reference). The pipeline table
times two workloads in a fresh interpreter for each backend: the analytic
region-M witness plus its replay (spectral decompositions throughout) and a
forced-SDP robustness solve (the interior-point loop itself uses LAPACK, so
this one should not depend on the backend).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qtesters.kernels import BACKEND, jacobi_eigh_ext, jacobi_eigh_py

PIPELINE = """
import math, time
from qtesters.kernels import BACKEND
from qtesters.scenarios import polarization_pair, region_m_witness
from qtesters.robustness import replay_witness, tester_robustness_two_outcome
a, b = polarization_pair(0.4, math.pi / 2).testers
tester_robustness_two_outcome(a, b, use_shortcuts=False)
t0 = time.perf_counter()
for _ in range({n}):
    replay_witness(region_m_witness(math.pi / 2, 1.0).robustness_result())
t1 = time.perf_counter()
for _ in range({n}):
    tester_robustness_two_outcome(a, b, use_shortcuts=False)
t2 = time.perf_counter()
print(BACKEND, (t1 - t0) / {n}, (t2 - t1) / {n})
"""


def rand_herm(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


def per_call(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    print(f"kernel (best of {repeat}), seconds per decomposition")
    print(f"{'n':>4} {'compiled':>12} {'python':>12} {'numpy':>12} {'speedup':>8}")
    for n in (4, 8, 16):
        m = rand_herm(rng, n)
        py = per_call(lambda: jacobi_eigh_py(m), repeat)
        ext = per_call(lambda: jacobi_eigh_ext(m), repeat) if jacobi_eigh_ext else float("nan")
        ref = per_call(lambda: np.linalg.eigh(m), repeat)
        print(f"{n:>4} {ext:>12.3e} {py:>12.3e} {ref:>12.3e} {py / ext:>8.1f}")


def pipeline_table(n):
    print(f"\npipeline, mean of {n} runs, seconds")
    print(f"{'backend':>10} {'witness+replay':>16} {'robustness SDP':>16}")
    for pure in (False, True):
        env = dict(os.environ)
        env.pop("QTESTERS_PURE_PYTHON", None)
        if pure:
            env["QTESTERS_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", PIPELINE.format(n=n)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"{out[0]:>10} {float(out[1]):>16.3e} {float(out[2]):>16.3e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--solves", type=int, default=5)
    args = ap.parse_args()
    print(f"default backend: {BACKEND}")
    if jacobi_eigh_ext is None:
        print("compiled kernel not built; only the fallback is timed")
    kernel_table(args.repeat)
    pipeline_table(args.solves)


if __name__ == "__main__":
    main()
