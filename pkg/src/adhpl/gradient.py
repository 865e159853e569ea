"""Gradient pre-training of the full factor set with per-entry SGD or Adam."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from ._kernels import adam_epoch_kernel, sgd_epoch_kernel
from .convergence import STOP, convergence_check
from .errors import ConfigError, DivergenceError, EvaluationError
from .model import Hyper, rmse

BIAS_CORRECTIONS = ("fixed", "power")


@dataclass
class AdamConfig:
    """Adam decay rates, step size and denominator guard.

    ``bias_correction="fixed"`` divides the moments by ``1 - beta`` at every
    step; ``"power"`` uses the usual ``1 - beta**t``.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    alpha: float = 0.001
    psi: float = 1e-8
    bias_correction: str = "fixed"

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if not self.psi > 0:
            raise ConfigError("psi must be > 0")
        if self.bias_correction not in BIAS_CORRECTIONS:
            raise ConfigError(f"bias_correction must be one of {BIAS_CORRECTIONS}")

    @property
    def power(self):
        return self.bias_correction == "power"


@dataclass
class ParamMoments:
    """First/second moment accumulators, one per trained parameter.

    ``row_steps``/``col_steps`` count how often each row/column was updated;
    they drive the power-form bias correction.
    """

    mP: np.ndarray
    vP: np.ndarray
    mb: np.ndarray
    vb: np.ndarray
    mQ: np.ndarray
    vQ: np.ndarray
    mc: np.ndarray
    vc: np.ndarray
    row_steps: np.ndarray
    col_steps: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, state):
        U, I, F = state.n_rows, state.n_cols, state.F
        return cls(np.zeros((U, F)), np.zeros((U, F)), np.zeros(U), np.zeros(U),
                   np.zeros((I, F)), np.zeros((I, F)), np.zeros(I), np.zeros(I),
                   np.zeros(U, dtype=np.int64), np.zeros(I, dtype=np.int64))

    def second_moments(self):
        return (self.vP, self.vb, self.vQ, self.vc)


def entry_gradient(state, u, i, z, lam):
    """Gradient of ``e^2/2 + lam/2 (|p_u|^2 + |q_i|^2 + b_u^2 + c_i^2)``.

    ``e`` is the residual at one entry. Returns ``(g_p, g_q, g_b, g_c)``.
    """
    p, q = state.P[u], state.Q[i]
    e = z - (p @ q + state.b[u] + state.c[i])
    return lam * p - e * q, lam * q - e * p, lam * state.b[u] - e, lam * state.c[i] - e


def _raise_divergence(train, pos, method):
    u, i = int(train.rows[pos]), int(train.cols[pos])
    raise DivergenceError(f"{method} produced a non-finite value at entry ({u}, {i})")


def sgd_epoch(state, train, eta, lam, seed=0):
    """One pass of per-entry SGD over ``train`` in a seeded random order."""
    if not eta >= 0:
        raise ConfigError("eta must be >= 0")
    order = np.random.default_rng(seed).permutation(len(train))
    bad = sgd_epoch_kernel(state.P, state.Q, state.b, state.c,
                           train.rows, train.cols, train.vals, order,
                           float(eta), float(lam))
    if bad >= 0:
        _raise_divergence(train, bad, "SGD")
    return state


def adam_epoch(state, train, cfg, lam, moments, seed=0):
    """One pass of per-entry, per-parameter Adam; mutates state and moments."""
    if moments.mP.shape != state.P.shape or moments.mQ.shape != state.Q.shape:
        raise ConfigError("moments are not dimensioned to this state")
    order = np.random.default_rng(seed).permutation(len(train))
    m = moments
    bad = adam_epoch_kernel(state.P, state.Q, state.b, state.c,
                            m.mP, m.vP, m.mb, m.vb, m.mQ, m.vQ, m.mc, m.vc,
                            m.row_steps, m.col_steps,
                            train.rows, train.cols, train.vals, order,
                            cfg.beta1, cfg.beta2, cfg.alpha, cfg.psi, float(lam), cfg.power)
    m.step_count += len(train)
    if bad >= 0:
        _raise_divergence(train, bad, "Adam")
    return state, moments


@dataclass
class EpochRecord:
    phase: str
    index: int
    train_rmse: float
    valid_rmse: float
    seconds: float


@dataclass
class TrainResult:
    state: object
    history: list = field(default_factory=list)
    initial_valid_rmse: float = float("nan")
    best_valid_rmse: float = float("nan")
    best_index: int = 0


def pretrain(state, split, method="sgd", hyper=None, adam_cfg=None,
             max_epochs=100, patience=3, min_delta=1e-4, seed=0):
    """Run gradient epochs until validation RMSE stalls or ``max_epochs``.

    The returned state is the snapshot with the lowest validation RMSE,
    counting the incoming state as epoch 0. ``seed`` is the master seed;
    epoch ``e`` shuffles with ``derive_seed(seed, PRETRAIN, e)``.
    """
    hyper = hyper or Hyper(F=state.F)
    adam_cfg = adam_cfg or AdamConfig()
    method = method.lower()
    if method not in ("sgd", "adam"):
        raise ConfigError(f"unknown pre-training method {method!r}")
    if len(split.validation) == 0:
        raise EvaluationError("pre-training needs a nonempty validation set")

    moments = ParamMoments.zeros(state) if method == "adam" else None
    best = state.copy()
    best_valid = rmse(state, split.validation)
    result = TrainResult(best, [], best_valid, best_valid, 0)
    valid_curve = [best_valid]
    for epoch in range(1, max_epochs + 1):
        t0 = time.perf_counter()
        epoch_seed = seeding.derive_seed(seed, seeding.PRETRAIN, epoch)
        if method == "sgd":
            sgd_epoch(state, split.train, hyper.eta, hyper.lam, epoch_seed)
        else:
            adam_epoch(state, split.train, adam_cfg, hyper.lam, moments, epoch_seed)
        valid = rmse(state, split.validation)
        result.history.append(EpochRecord(f"pretrain-{method}", epoch, rmse(state, split.train),
                                          valid, time.perf_counter() - t0))
        valid_curve.append(valid)
        if valid < best_valid:
            best_valid = valid
            best = state.copy()
            result.best_index = epoch
        if convergence_check(valid_curve, patience, min_delta) == STOP:
            break
    result.state = best
    result.best_valid_rmse = best_valid
    return result
