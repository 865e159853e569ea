"""Pass drivers shared by the PSO and Adam-PSO refiners."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

from .convergence import STOP, convergence_check
from .gradient import EpochRecord, TrainResult
from .model import rmse
from .seeding import group_seed


def run_pass(state, split, refine_fn, cfg, lam, seed, pass_index=0, threads=1,
             weighted=False, telemetry=None, backend=None):
    """Refine all row groups, write them back, then all column groups.

    Row groups only read ``Q``/``c`` and their own slice, so they are
    independent of each other (likewise columns); ``threads > 1`` runs them
    concurrently with results identical to the sequential order. Each group
    draws from its own derived seed. Returns validation RMSE after the pass.
    """
    train = split.train
    for kind, count in (("row", state.n_rows), ("col", state.n_cols)):
        def work(index, kind=kind):
            return refine_fn(kind, index, state, train, cfg, lam,
                             group_seed(seed, pass_index, kind, index), weighted, backend)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, range(count)))
        else:
            results = map(work, range(count))
        for res in results:
            if res is None:
                continue
            state.set_group_vector(kind, res.index, res.vector)
            if telemetry is not None:
                telemetry(res)
    return rmse(state, split.validation)


def refine_passes(state, split, refine_fn, cfg, lam, seed, phase, max_passes=1,
                  patience=1, min_delta=1e-4, threads=1, weighted=False,
                  telemetry=None, backend=None):
    """Repeat passes until validation RMSE converges or ``max_passes`` is hit.

    Returns a :class:`TrainResult` holding the best-validation snapshot; the
    incoming state counts as pass 0.
    """
    best = state.copy()
    best_valid = rmse(state, split.validation)
    result = TrainResult(best, [], best_valid, best_valid, 0)
    curve = [best_valid]
    for p in range(1, max_passes + 1):
        t0 = time.perf_counter()
        valid = run_pass(state, split, refine_fn, cfg, lam, seed, p, threads,
                         weighted, telemetry, backend)
        result.history.append(EpochRecord(phase, p, rmse(state, split.train), valid,
                                          time.perf_counter() - t0))
        curve.append(valid)
        if valid < best_valid:
            best_valid = valid
            best = state.copy()
            result.best_index = p
        if convergence_check(curve, patience, min_delta) == STOP:
            break
    result.state = best
    result.best_valid_rmse = best_valid
    return result
