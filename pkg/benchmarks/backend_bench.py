"""Timing comparison of the compiled and pure numpy summary kernels.

Runs the client summary kernel on both backends over a grid of shard
sizes and prints best-of-k wall times, then (with --fit) times a full
offline fit and a full online pass per backend in subprocesses so each
one starts from a clean import.

    python3 benchmarks/backend_bench.py
    python3 benchmarks/backend_bench.py --fit --repeats 7
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from fedwd._kernels import _py

try:
    from fedwd._kernels import _core
except ImportError:
    _core = None

CASES = ((100, 10), (1000, 50), (10000, 50), (10000, 200))

FIT_SNIPPET = """
import json, time
from fedwd import _kernels
from fedwd.core import Hyper
from fedwd.datagen import SimDesign, gen_stream
from fedwd.harness import concat_stream
from fedwd.offline import fit_offline
from fedwd.online import run_stream

design = SimDesign(m_clients=10, n_batches=200, p=50, n_per_client=10,
                   mu=0.2, sigma=1.0, seed=0)
hyper = Hyper(lam=0.01, q=1.0)
batches, _ = gen_stream(design, with_test=False)
offline = concat_stream(batches)
t0 = time.perf_counter()
fit_offline(offline, hyper)
t_off = time.perf_counter() - t0
t0 = time.perf_counter()
run_stream(batches, hyper, warm_start=True)
t_on = time.perf_counter() - t0
print(json.dumps({"backend": _kernels.BACKEND, "fit_offline_s": t_off,
                  "run_stream_s": t_on}))
"""


def bench_kernel(mod, n, p, repeats, rng):
    x = rng.normal(size=(n, p))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    theta = rng.normal(size=p + 1) * 0.3
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        mod.batch_summary(x, y, theta, 1.0, 0.01, True, True, True)
        best = min(best, time.perf_counter() - t0)
    return best


def run_fit(backend):
    env = dict(os.environ, FEDWD_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="take the best of this many runs per case")
    parser.add_argument("--fit", action="store_true",
                        help="also time full fits per backend")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'n':>7} {'p':>5} {'python_ms':>10} {'compiled_ms':>12} "
          f"{'speedup':>8}")
    for n, p in CASES:
        t_py = bench_kernel(_py, n, p, args.repeats, rng)
        if _core is not None:
            t_c = bench_kernel(_core, n, p, args.repeats, rng)
            print(f"{n:>7} {p:>5} {t_py * 1e3:>10.3f} {t_c * 1e3:>12.3f} "
                  f"{t_py / t_c:>8.2f}")
        else:
            print(f"{n:>7} {p:>5} {t_py * 1e3:>10.3f} {'n/a':>12} "
                  f"{'n/a':>8}")
    if _core is None:
        print("compiled kernel not built; python fallback only")

    if args.fit:
        backends = ["python"] + (["compiled"] if _core is not None else [])
        print()
        print(f"{'backend':<10} {'fit_offline_s':>14} {'run_stream_s':>13}")
        for backend in backends:
            doc = run_fit(backend)
            print(f"{doc['backend']:<10} {doc['fit_offline_s']:>14.3f} "
                  f"{doc['run_stream_s']:>13.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
