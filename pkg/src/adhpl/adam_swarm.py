"""Adam-driven swarm refinement.

The classical velocity rule ``w*v + c1*r1*(h - x) + c2*r2*(g - x)`` is
replaced by an Adam step on the displacement vector
``d = r1*(h - x) + r2*(g - x)``: each particle keeps its own first and
second moment of ``d`` and moves by ``alpha * m_hat / (sqrt(v_hat) + psi)``.
There is no inertia weight and no acceleration coefficient to tune;
``alpha`` is the only step-size knob.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGroupError
from .gradient import AdamConfig
from .model import GroupFitness
from .refine import refine_passes, run_pass
from .swarm import (
    GroupResult,
    Swarm,
    _as_rng,
    _check_swarm_shape,
    draw_coefficients,
    init_swarm,
    run_kernel,
    update_bests,
    use_kernel,
)


@dataclass
class AdamPsoConfig:
    swarm_size: int = 10
    iters: int = 20
    init_radius: float = 0.01
    adam: AdamConfig = field(default_factory=AdamConfig)
    per_dimension: bool = False

    def __post_init__(self):
        if isinstance(self.adam, dict):
            self.adam = AdamConfig(**self.adam)
        _check_swarm_shape(self)


@dataclass
class AdamSwarm(Swarm):
    m: np.ndarray = None
    v2: np.ndarray = None

    @property
    def velocity(self):
        return self.v


def swarm_gradient(x, h, g, rd1, rd2):
    """Pull of the personal and global bests on position ``x``."""
    return rd1 * (h - x) + rd2 * (g - x)


def bias_divisors(cfg, t):
    """Moment divisors at step ``t`` (1-based)."""
    if cfg.power:
        return 1.0 - cfg.beta1 ** t, 1.0 - cfg.beta2 ** t
    return 1.0 - cfg.beta1, 1.0 - cfg.beta2


def adam_moment_step(m, v, d, cfg, t=1):
    """Fold ``d`` into the moments and return ``(m, v, velocity)``."""
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * d
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * (d * d)
    c1, c2 = bias_divisors(cfg, t)
    velocity = cfg.alpha * (m / c1) / (np.sqrt(v / c2) + cfg.psi)
    return m, v, velocity


def init_adam_swarm(group_vector, cfg, fitness, seed=0):
    base = init_swarm(group_vector, cfg, fitness, seed)
    return AdamSwarm(x=base.x, v=base.v, h=base.h, h_fitness=base.h_fitness,
                     g=base.g, g_fitness=base.g_fitness, rng=base.rng,
                     m=np.zeros_like(base.x), v2=np.zeros_like(base.x))


def adam_pso_step(swarm, cfg, fitness, rd=None):
    """Move every particle by its Adam-corrected displacement, then update bests."""
    if rd is None:
        rd = draw_coefficients(swarm.rng, swarm.size, swarm.x.shape[1], cfg.per_dimension)
    d = swarm_gradient(swarm.x, swarm.h, swarm.g[None, :], rd[:, 0, :], rd[:, 1, :])
    swarm.m, swarm.v2, swarm.v = adam_moment_step(swarm.m, swarm.v2, d, cfg.adam,
                                                  swarm.iteration + 1)
    swarm.x = swarm.x + swarm.v
    update_bests(swarm, fitness)
    return swarm


def adam_refine_group(kind, index, state, train, cfg, lam, seed=0, weighted=False,
                      backend=None):
    """Refine one group with the Adam swarm; ``None`` for an empty group."""
    try:
        fitness = GroupFitness.for_group(kind, index, state, train, lam, weighted)
    except EmptyGroupError:
        return None
    x0 = state.group_vector(kind, index)
    rng = _as_rng(seed)
    norms = None
    if use_kernel(backend):
        g, gf, pre, trace, norms = run_kernel(fitness, x0, cfg, rng, use_adam=True, adam_cfg=cfg.adam)
    else:
        swarm = init_adam_swarm(x0, cfg, fitness, rng)
        pre = float(swarm.h_fitness[0])
        for _ in range(cfg.iters):
            adam_pso_step(swarm, cfg, fitness)
        g, gf, trace = swarm.g, swarm.g_fitness, swarm.trace
        norms = (float(np.linalg.norm(swarm.m)), float(np.linalg.norm(swarm.v2)))
    return GroupResult(kind, index, g, pre, gf, cfg.iters, trace, norms)


def adhpl_pass(state, split, cfg, lam, seed=0, pass_index=0, threads=1,
               weighted=False, telemetry=None, backend=None):
    return run_pass(state, split, adam_refine_group, cfg, lam, seed, pass_index,
                    threads, weighted, telemetry, backend)


def adhpl_refine(state, split, cfg, lam, seed=0, max_passes=1, patience=1,
                 min_delta=1e-4, threads=1, weighted=False, telemetry=None, backend=None):
    """Row-then-column Adam-swarm passes until validation RMSE converges.

    Moments are reset for every group in every pass. Returns a
    ``TrainResult`` with the best-validation snapshot.
    """
    return refine_passes(state, split, adam_refine_group, cfg, lam, seed, "refine-adhpl",
                         max_passes, patience, min_delta, threads, weighted,
                         telemetry, backend)
