"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter (the flag is read at import),
times a few SGD/Adam epochs and one refinement pass of each kind on the
200x300 synthetic matrix, and saves the resulting states so the parent
can check that both backends agree.

    python3 benchmarks/bench_backends.py [--epochs 5] [--rows 200 --cols 300]
"""
import argparse
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np


def worker(args):
    from adhpl import _accel
    from adhpl.adam_swarm import AdamPsoConfig, adhpl_pass
    from adhpl.data import split, synth_lowrank
    from adhpl.gradient import AdamConfig, ParamMoments, adam_epoch, sgd_epoch
    from adhpl.model import init_state
    from adhpl.swarm import PsoConfig, mpso_pass

    m, _ = synth_lowrank(args.rows, args.cols, 5, 0.08, 0.1, seed=0)
    sp = split(m, seed=1)

    def fresh():
        return init_state(m.n_rows, m.n_cols, 20, 0.01, seed=2)

    # warm-up so JIT compilation is not timed
    warm = init_state(3, 3, 2, 0.1, seed=0)
    small = split(synth_lowrank(3, 3, 1, 1.0, seed=0)[0], seed=0)
    sgd_epoch(warm, small.train, 0.01, 0.05)
    adam_epoch(warm, small.train, AdamConfig(), 0.05, ParamMoments.zeros(warm))
    mpso_pass(warm, small, PsoConfig(), 0.05)
    adhpl_pass(warm, small, AdamPsoConfig(), 0.05)

    timings, states = {}, {}
    s = fresh()
    t0 = time.perf_counter()
    for e in range(args.epochs):
        sgd_epoch(s, sp.train, 0.01, 0.05, seed=e)
    timings["sgd_epoch"] = (time.perf_counter() - t0) / args.epochs
    states["sgd"] = s

    a = fresh()
    mom = ParamMoments.zeros(a)
    t0 = time.perf_counter()
    for e in range(args.epochs):
        adam_epoch(a, sp.train, AdamConfig(alpha=0.005), 0.05, mom, seed=e)
    timings["adam_epoch"] = (time.perf_counter() - t0) / args.epochs
    states["adam"] = a

    for name, fn, cfg in (("mpso_pass", mpso_pass, PsoConfig()),
                          ("adhpl_pass", adhpl_pass, AdamPsoConfig(adam=AdamConfig(alpha=0.005)))):
        r = states["sgd"].copy()
        t0 = time.perf_counter()
        fn(r, sp, cfg, 0.05, seed=3)
        timings[name] = time.perf_counter() - t0
        states[name] = r

    arrays = {f"{k}_{part}": getattr(st, part) for k, st in states.items() for part in "PQbc"}
    np.savez(args.out, **arrays)
    print(json.dumps({"backend": _accel.backend_name(), "timings": timings}))


def run_backend(flag, args, out):
    env = dict(os.environ, ADHPL_DISABLE_NUMBA=flag)
    cmd = [sys.executable, __file__, "--worker", "--out", out, "--epochs", str(args.epochs),
           "--rows", str(args.rows), "--cols", str(args.cols)]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--rows", type=int, default=200)
    p.add_argument("--cols", type=int, default=300)
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--out", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.worker:
        worker(args)
        return 0

    with tempfile.TemporaryDirectory() as tmp:
        fast = run_backend("0", args, os.path.join(tmp, "numba.npz"))
        slow = run_backend("1", args, os.path.join(tmp, "numpy.npz"))
        with np.load(os.path.join(tmp, "numba.npz")) as a, np.load(os.path.join(tmp, "numpy.npz")) as b:
            diff = max(float(np.max(np.abs(a[k] - b[k]))) for k in a.files)

    print(f"{'step':<12}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for k, t_fast in fast["timings"].items():
        t_slow = slow["timings"][k]
        print(f"{k:<12}{t_fast:>11.4f}s{t_slow:>11.4f}s{t_slow / t_fast:>9.1f}x")
    print(f"max |numba - numpy| over final states: {diff:.3e}")
    return 0 if diff < 1e-8 else 1


if __name__ == "__main__":
    sys.exit(main())
