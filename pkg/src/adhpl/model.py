"""Biased latent factor model: state, prediction, objective, group fitness."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyGroupError, EvaluationError

GROUP_KINDS = ("row", "col")


@dataclass
class LatentState:
    """Factor set ``{P, Q, b, c}``; every optimizer mutates one of these in place."""

    P: np.ndarray
    Q: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.P.ndim != 2 or self.Q.ndim != 2 or self.P.shape[1] != self.Q.shape[1]:
            raise ValueError("P and Q must be 2-D with the same number of columns")
        if self.b.shape != (self.P.shape[0],) or self.c.shape != (self.Q.shape[0],):
            raise ValueError("bias lengths must match factor row counts")

    @property
    def F(self):
        return self.P.shape[1]

    @property
    def n_rows(self):
        return self.P.shape[0]

    @property
    def n_cols(self):
        return self.Q.shape[0]

    def copy(self):
        return LatentState(self.P.copy(), self.Q.copy(), self.b.copy(), self.c.copy())

    def is_finite(self):
        return all(np.isfinite(a).all() for a in (self.P, self.Q, self.b, self.c))

    def group_vector(self, kind, index):
        """``[p_u, b_u]`` for a row group or ``[q_i, c_i]`` for a column group."""
        if kind == "row":
            return np.append(self.P[index], self.b[index])
        if kind == "col":
            return np.append(self.Q[index], self.c[index])
        raise ValueError(f"unknown group kind {kind!r}")

    def set_group_vector(self, kind, index, vec):
        F = self.F
        if kind == "row":
            self.P[index] = vec[:F]
            self.b[index] = vec[F]
        elif kind == "col":
            self.Q[index] = vec[:F]
            self.c[index] = vec[F]
        else:
            raise ValueError(f"unknown group kind {kind!r}")

    def equals(self, other):
        return all(np.array_equal(a, b) for a, b in
                   zip((self.P, self.Q, self.b, self.c), (other.P, other.Q, other.b, other.c)))


@dataclass
class Hyper:
    F: int = 20
    lam: float = 0.05
    eta: float = 0.01
    init_range: float = 0.01

    def __post_init__(self):
        if self.F < 1:
            raise ConfigError("F must be >= 1")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if not self.eta > 0:
            raise ConfigError("eta must be > 0")
        if not self.init_range > 0:
            raise ConfigError("init_range must be > 0")


def init_state(n_rows, n_cols, F, init_range=0.01, seed=0):
    """Factors uniform on ``(0, init_range]``, biases zero."""
    if F < 1:
        raise ConfigError("F must be >= 1")
    rng = np.random.default_rng(seed)
    # 1 - U[0, 1) lies in (0, 1]
    P = init_range * (1.0 - rng.random((n_rows, F)))
    Q = init_range * (1.0 - rng.random((n_cols, F)))
    return LatentState(P, Q, np.zeros(n_rows), np.zeros(n_cols))


def predict(state, u, i):
    if not (0 <= u < state.n_rows and 0 <= i < state.n_cols):
        raise IndexError(f"cell ({u}, {i}) outside {state.n_rows}x{state.n_cols}")
    return float(state.P[u] @ state.Q[i] + state.b[u] + state.c[i])


def predict_many(state, rows, cols):
    return np.einsum("kf,kf->k", state.P[rows], state.Q[cols]) + state.b[rows] + state.c[cols]


def residuals(state, entries):
    return entries.vals - predict_many(state, entries.rows, entries.cols)


def objective(state, entries, lam):
    """Squared error over known entries plus per-entry L2 regularization.

    Each row (column) parameter is penalized once for every known entry it
    takes part in, so heavily observed entities are regularized more.
    """
    r = residuals(state, entries)
    row_sq = np.einsum("uf,uf->u", state.P, state.P) + state.b ** 2
    col_sq = np.einsum("if,if->i", state.Q, state.Q) + state.c ** 2
    reg = row_sq[entries.rows].sum() + col_sq[entries.cols].sum()
    return 0.5 * float(r @ r) + 0.5 * lam * float(reg)


def rmse(state, entries):
    if len(entries) == 0:
        raise EvaluationError("RMSE of an empty entry set")
    r = residuals(state, entries)
    return float(np.sqrt(r @ r / r.size))


class GroupFitness:
    """Fitness of candidate ``[p_u, b_u]`` (or ``[q_i, c_i]``) vectors.

    The partner factors, partner biases and ratings of the group's training
    entries are gathered once at construction; the rest of the state is
    treated as frozen. ``reg_weight`` multiplies the ``lam/2 * ||x||^2``
    penalty: 1 gives the group fitness exactly, the group's entry count
    makes it agree with the per-entry regularization of :func:`objective`.
    """

    def __init__(self, partners, partner_bias, z, lam, reg_weight=1.0, kind="row", index=0):
        self.partners = np.ascontiguousarray(partners, dtype=np.float64)
        self.partner_bias = np.ascontiguousarray(partner_bias, dtype=np.float64)
        self.z = np.ascontiguousarray(z, dtype=np.float64)
        self.lam = float(lam)
        self.reg_weight = float(reg_weight)
        self.kind = kind
        self.index = index
        self.F = self.partners.shape[1]
        # target left after removing the partner bias
        self.target = self.z - self.partner_bias

    @classmethod
    def for_group(cls, kind, index, state, train, lam, weighted=False):
        partner_idx, z = train.group(kind, index)
        if z.size == 0:
            raise EmptyGroupError(kind, index)
        if kind == "row":
            partners, pbias = state.Q[partner_idx], state.c[partner_idx]
        else:
            partners, pbias = state.P[partner_idx], state.b[partner_idx]
        weight = float(z.size) if weighted else 1.0
        return cls(partners, pbias, z, lam, weight, kind, index)

    @property
    def n_entries(self):
        return self.z.size

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            r = self.target - self.partners @ x[:self.F] - x[self.F]
            return 0.5 * float(r @ r) + 0.5 * self.lam * self.reg_weight * float(x @ x)
        # batch of candidates, one per row
        r = self.target[None, :] - x[:, :self.F] @ self.partners.T - x[:, self.F:]
        return 0.5 * np.einsum("sk,sk->s", r, r) + 0.5 * self.lam * self.reg_weight * np.einsum("sd,sd->s", x, x)


def group_fitness(candidate, kind, index, state, train, lam, weighted=False):
    """Regularized squared error of one row or column group at ``candidate``.

    Raises :class:`EmptyGroupError` when the group has no training entries.
    """
    return GroupFitness.for_group(kind, index, state, train, lam, weighted)(candidate)


def save_state(state, path):
    np.savez(path, P=state.P, Q=state.Q, b=state.b, c=state.c)


def load_state(path):
    with np.load(path) as f:
        return LatentState(f["P"].copy(), f["Q"].copy(), f["b"].copy(), f["c"].copy())
