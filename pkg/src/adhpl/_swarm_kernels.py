"""Compiled whole-group refinement loop (numba backend only).

Mirrors the vectorized numpy swarm in ``swarm``/``adam_swarm`` operation
for operation; only the fitness reduction order differs. Randomness is
drawn by the caller so both backends consume the identical stream.
"""
import numpy as np

from ._accel import njit


@njit
def _fitness(x, partners, target, lam_w):
    F = partners.shape[1]
    s = 0.0
    for k in range(target.shape[0]):
        r = target[k] - x[F]
        for f in range(F):
            r -= partners[k, f] * x[f]
        s += r * r
    reg = 0.0
    for j in range(x.shape[0]):
        reg += x[j] * x[j]
    return 0.5 * s + 0.5 * lam_w * reg


@njit
def refine_group_kernel(x0, pert, rd, use_adam, omega, gamma1, gamma2,
                        beta1, beta2, alpha, psi, power,
                        partners, target, lam_w, trace):
    """Run one swarm to its iteration budget.

    ``rd`` has shape ``(iters, S, 2, k)`` with ``k`` 1 (scalar draws) or D.
    Writes the global-best fitness after each iteration into ``trace``.
    Returns ``(g, g_fitness, start_fitness, bad_particle, m_norm, v_norm)``
    where ``start_fitness`` is particle 0's initial fitness,
    ``bad_particle >= 0`` flags a non-finite position and the norms are
    those of the final moment arrays.
    """
    S = pert.shape[0] + 1
    D = x0.shape[0]
    iters = rd.shape[0]
    per_dim = rd.shape[3] > 1
    X = np.empty((S, D))
    X[0] = x0
    for s in range(1, S):
        X[s] = x0 + pert[s - 1]
    V = np.zeros((S, D))
    M1 = np.zeros((S, D))
    M2 = np.zeros((S, D))
    H = X.copy()
    hf = np.empty(S)
    for s in range(S):
        hf[s] = _fitness(X[s], partners, target, lam_w)
    f0 = hf[0]
    gi = np.argmin(hf)
    G = H[gi].copy()
    gf = hf[gi]
    for t in range(iters):
        if power:
            c1 = 1.0 - beta1 ** (t + 1)
            c2 = 1.0 - beta2 ** (t + 1)
        else:
            c1 = 1.0 - beta1
            c2 = 1.0 - beta2
        for s in range(S):
            for j in range(D):
                jj = j if per_dim else 0
                r1 = rd[t, s, 0, jj]
                r2 = rd[t, s, 1, jj]
                if use_adam:
                    d = r1 * (H[s, j] - X[s, j]) + r2 * (G[j] - X[s, j])
                    M1[s, j] = beta1 * M1[s, j] + (1.0 - beta1) * d
                    M2[s, j] = beta2 * M2[s, j] + (1.0 - beta2) * (d * d)
                    vel = alpha * (M1[s, j] / c1) / (np.sqrt(M2[s, j] / c2) + psi)
                else:
                    vel = omega * V[s, j] + gamma1 * r1 * (H[s, j] - X[s, j]) + gamma2 * r2 * (G[j] - X[s, j])
                V[s, j] = vel
                X[s, j] = X[s, j] + vel
            if not np.all(np.isfinite(X[s])):
                return G, gf, f0, s, 0.0, 0.0
            f = _fitness(X[s], partners, target, lam_w)
            if f < hf[s]:
                H[s] = X[s]
                hf[s] = f
        gi = np.argmin(hf)
        G = H[gi].copy()
        gf = hf[gi]
        trace[t] = gf
    return G, gf, f0, -1, np.sqrt(np.sum(M1 * M1)), np.sqrt(np.sum(M2 * M2))
