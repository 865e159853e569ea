"""Group-wise refinement of pre-trained factors with classical PSO.

Each row group ``[p_u, b_u]`` (then each column group ``[q_i, c_i]``) gets
its own small swarm while the rest of the state stays frozen. A swarm is
stored as structure-of-arrays: row ``s`` of ``x``/``v``/``h`` is particle
``s``, so one step updates every particle with a handful of array ops.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _accel
from ._swarm_kernels import refine_group_kernel
from .errors import ConfigError, DivergenceError, EmptyGroupError
from .model import GroupFitness
from .refine import refine_passes, run_pass


@dataclass
class PsoConfig:
    omega: float = 0.729
    gamma1: float = 1.496
    gamma2: float = 1.496
    swarm_size: int = 10
    iters: int = 20
    init_radius: float = 0.01
    per_dimension: bool = False

    def __post_init__(self):
        _check_swarm_shape(self)


def _check_swarm_shape(cfg):
    if cfg.swarm_size < 2:
        raise ConfigError("swarm_size must be >= 2")
    if cfg.iters < 1:
        raise ConfigError("iters must be >= 1")
    if cfg.init_radius < 0:
        raise ConfigError("init_radius must be >= 0")


@dataclass
class Particle:
    x: np.ndarray
    v: np.ndarray
    h: np.ndarray
    h_fitness: float


@dataclass
class Swarm:
    x: np.ndarray
    v: np.ndarray
    h: np.ndarray
    h_fitness: np.ndarray
    g: np.ndarray
    g_fitness: float
    rng: np.random.Generator
    iteration: int = 0
    trace: list = field(default_factory=list)

    @property
    def size(self):
        return self.x.shape[0]

    def particle(self, s):
        return Particle(self.x[s].copy(), self.v[s].copy(), self.h[s].copy(), float(self.h_fitness[s]))

    @property
    def particles(self):
        return [self.particle(s) for s in range(self.size)]


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def initial_positions(group_vector, swarm_size, init_radius, rng):
    """Particle 0 sits on ``group_vector``; the others are perturbed copies."""
    x0 = np.asarray(group_vector, dtype=np.float64)
    pert = rng.uniform(-init_radius, init_radius, size=(swarm_size - 1, x0.size))
    return np.vstack([x0[None, :], x0[None, :] + pert])


def draw_coefficients(rng, swarm_size, dim, per_dimension):
    """Random pull weights, shape ``(S, 2, 1)`` or ``(S, 2, D)``."""
    return rng.random((swarm_size, 2, dim if per_dimension else 1))


def init_swarm(group_vector, cfg, fitness, seed=0):
    """Build a swarm around ``group_vector`` with zero velocities.

    ``cfg`` needs ``swarm_size`` and ``init_radius``. The global best is the
    lowest-fitness particle, ties going to the lowest index.
    """
    x0 = np.asarray(group_vector, dtype=np.float64)
    if not np.isfinite(x0).all():
        raise ValueError("group vector must be finite")
    rng = _as_rng(seed)
    x = initial_positions(x0, cfg.swarm_size, cfg.init_radius, rng)
    hf = np.asarray(fitness(x), dtype=np.float64)
    gi = int(np.argmin(hf))
    return Swarm(x=x, v=np.zeros_like(x), h=x.copy(), h_fitness=hf,
                 g=x[gi].copy(), g_fitness=float(hf[gi]), rng=rng)


def update_bests(swarm, fitness):
    """Strict-improvement personal bests, then a synchronous global best."""
    bad = ~np.isfinite(swarm.x).all(axis=1)
    if bad.any():
        raise DivergenceError(f"particle {int(np.flatnonzero(bad)[0])} left the finite range")
    f = np.asarray(fitness(swarm.x), dtype=np.float64)
    better = f < swarm.h_fitness
    swarm.h[better] = swarm.x[better]
    swarm.h_fitness[better] = f[better]
    gi = int(np.argmin(swarm.h_fitness))
    swarm.g = swarm.h[gi].copy()
    swarm.g_fitness = float(swarm.h_fitness[gi])
    swarm.iteration += 1
    swarm.trace.append(swarm.g_fitness)


def pso_step(swarm, cfg, fitness, rd=None):
    """One synchronous iteration of inertia-weighted PSO over all particles.

    ``rd`` overrides the random pull weights (shape ``(S, 2, 1|D)``).
    """
    if rd is None:
        rd = draw_coefficients(swarm.rng, swarm.size, swarm.x.shape[1], cfg.per_dimension)
    r1, r2 = rd[:, 0, :], rd[:, 1, :]
    x = swarm.x
    swarm.v = cfg.omega * swarm.v + cfg.gamma1 * r1 * (swarm.h - x) + cfg.gamma2 * r2 * (swarm.g[None, :] - x)
    swarm.x = x + swarm.v
    update_bests(swarm, fitness)
    return swarm


@dataclass
class GroupResult:
    """Telemetry for one refined group."""

    kind: str
    index: int
    vector: np.ndarray
    pre_fitness: float
    post_fitness: float
    iters: int
    trace: list = field(default_factory=list)
    moment_norms: Optional[tuple] = None

    def record(self):
        rec = {"kind": self.kind, "group": self.index, "pre_fitness": self.pre_fitness,
               "post_fitness": self.post_fitness, "iters": self.iters}
        if self.moment_norms is not None:
            rec["m_norm"], rec["v_norm"] = self.moment_norms
        return rec


def run_kernel(fitness, x0, cfg, rng, use_adam, adam_cfg=None):
    """Drive :func:`refine_group_kernel` with randomness drawn from ``rng``.

    Consumes the generator exactly as the numpy swarm path does, so both
    backends see the same perturbations and pull weights.
    """
    S, D = cfg.swarm_size, x0.size
    pert = rng.uniform(-cfg.init_radius, cfg.init_radius, size=(S - 1, D))
    rd = rng.random((cfg.iters, S, 2, D if cfg.per_dimension else 1))
    trace = np.empty(cfg.iters)
    if use_adam:
        a = adam_cfg
        args = (0.0, 0.0, 0.0, a.beta1, a.beta2, a.alpha, a.psi, a.power)
    else:
        args = (cfg.omega, cfg.gamma1, cfg.gamma2, 0.0, 0.0, 1.0, 1.0, False)
    g, gf, f0, bad, m_norm, v_norm = refine_group_kernel(x0, pert, rd, use_adam, *args,
                                     fitness.partners, fitness.target,
                                     fitness.lam * fitness.reg_weight, trace)
    if bad >= 0:
        raise DivergenceError(f"particle {bad} left the finite range")
    return g, float(gf), float(f0), trace.tolist(), (float(m_norm), float(v_norm))


def use_kernel(backend):
    if backend is None:
        return _accel.NUMBA_ENABLED
    if backend == "numba":
        if not _accel.NUMBA_ENABLED:
            raise ConfigError("numba backend requested but disabled")
        return True
    if backend == "numpy":
        return False
    raise ConfigError(f"unknown backend {backend!r}")


def refine_group(kind, index, state, train, cfg, lam, seed=0, weighted=False, backend=None):
    """Refine one group with PSO; ``None`` when the group has no entries.

    The state itself is not modified; the caller writes ``result.vector``
    back. The returned fitness never exceeds that of the incoming slice.
    ``backend`` forces ``"numba"`` or ``"numpy"``; default follows the
    environment flag.
    """
    try:
        fitness = GroupFitness.for_group(kind, index, state, train, lam, weighted)
    except EmptyGroupError:
        return None
    x0 = state.group_vector(kind, index)
    rng = _as_rng(seed)
    if use_kernel(backend):
        g, gf, pre, trace, _ = run_kernel(fitness, x0, cfg, rng, use_adam=False)
    else:
        swarm = init_swarm(x0, cfg, fitness, rng)
        pre = float(swarm.h_fitness[0])
        for _ in range(cfg.iters):
            pso_step(swarm, cfg, fitness)
        g, gf, trace = swarm.g, swarm.g_fitness, swarm.trace
    return GroupResult(kind, index, g, pre, gf, cfg.iters, trace)


def mpso_pass(state, split, cfg, lam, seed=0, pass_index=0, threads=1,
              weighted=False, telemetry=None, backend=None):
    """Refine every row group, then every column group; return validation RMSE."""
    return run_pass(state, split, refine_group, cfg, lam, seed, pass_index,
                    threads, weighted, telemetry, backend)


def hpl_refine(state, split, cfg, lam, seed=0, max_passes=1, patience=1,
               min_delta=1e-4, threads=1, weighted=False, telemetry=None, backend=None):
    """Repeat :func:`mpso_pass` until validation RMSE converges."""
    return refine_passes(state, split, refine_group, cfg, lam, seed, "refine-mpso",
                         max_passes, patience, min_delta, threads, weighted,
                         telemetry, backend)
