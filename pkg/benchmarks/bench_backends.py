"""Compare the compiled and pure-Python chain kernels.

Runs the same chain (same instance, start state and uniforms) through each
backend and reports microseconds per step.  Both backends must produce the
same final state; the script exits non-zero otherwise.

    python3 benchmarks/bench_backends.py [--steps 2000] [--n 1000]
"""

import argparse
import sys
import time

import numpy as np

from ilptemper import _backend, instances
from ilptemper.core import REFRESH_EVERY, EnergyParams, init_state


def run(backend, inst, x0, params, u, K, tau, kind, L):
    kern = _backend.get(backend)
    arrs = _backend.arrays(inst, backend)
    s = init_state(inst, x0, params)
    buf = dict(energies=np.empty(K), ev_step=np.empty(K, dtype=np.int64), ev_obj=np.empty(K))
    t0 = time.perf_counter()
    kern.run_chain(arrs, s, u, 0, K, np.log(tau), 0.0, 0, kind, L, False, REFRESH_EVERY,
                   buf["energies"], buf["ev_step"], buf["ev_obj"],
                   np.zeros(inst.n, dtype=np.int8), np.zeros(2))
    return time.perf_counter() - t0, s


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000, help="steps per measurement")
    ap.add_argument("--n", type=int, default=1000, help="graph nodes")
    ap.add_argument("--affinity", type=int, default=70, help="BA attachment count")
    a = ap.parse_args(argv)

    inst = instances.generate("mvc", a.n, seed=0, affinity=a.affinity)
    params = EnergyParams(1.0)
    rng = np.random.default_rng(0)
    x0 = (rng.random(inst.n) < 0.5).astype(np.int8)
    names = _backend.available()
    print(f"instance n={inst.n} m={inst.m} nnz={inst.nnz}; backends {names}")
    print(f"{'kernel':<8}" + "".join(f"{b + ' us/step':>18}" for b in names) + f"{'speedup':>10}")
    ok = True
    for label, kind, L in (("rwm", 1, 1), ("mlbp-1", 0, 1), ("mlbp-3", 0, 3)):
        width = L + 1 if kind == 0 else 2
        K = a.steps * (50 if kind == 1 else 1)
        u = np.random.default_rng(1).random(K * width)
        times, finals = [], []
        for b in names:
            dt, s = run(b, inst, x0, params, u, K, 0.2, kind, L)
            times.append(dt / K * 1e6)
            finals.append(s.x.copy())
        same = all(np.array_equal(finals[0], f) for f in finals[1:])
        ok &= same
        speed = times[names.index("python")] / min(times) if len(times) > 1 else 1.0
        print(f"{label:<8}" + "".join(f"{t:>18.2f}" for t in times) + f"{speed:>9.1f}x"
              + ("" if same else "  MISMATCH"))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
