"""Per-entry gradient epochs.

Written with row-slice numpy operations so the same source runs compiled
under numba or interpreted as plain numpy. Each kernel returns the
position of the entry that produced a non-finite value, or -1.
"""
import numpy as np

from ._accel import njit


@njit
def sgd_epoch_kernel(P, Q, b, c, rows, cols, vals, order, eta, lam):
    for k in range(order.shape[0]):
        n = order[k]
        u = rows[n]
        i = cols[n]
        pu = P[u].copy()
        qi = Q[i].copy()
        e = vals[n] - (np.sum(pu * qi) + b[u] + c[i])
        P[u] = pu + eta * (e * qi - lam * pu)
        Q[i] = qi + eta * (e * pu - lam * qi)
        b[u] = b[u] + eta * (e - lam * b[u])
        c[i] = c[i] + eta * (e - lam * c[i])
        if not np.isfinite(np.sum(P[u]) + np.sum(Q[i]) + b[u] + c[i]):
            return n
    return -1


@njit
def adam_epoch_kernel(P, Q, b, c, mP, vP, mb, vb, mQ, vQ, mc, vc, tP, tQ,
                      rows, cols, vals, order, beta1, beta2, alpha, psi, lam, power):
    for k in range(order.shape[0]):
        n = order[k]
        u = rows[n]
        i = cols[n]
        pu = P[u].copy()
        qi = Q[i].copy()
        bu = b[u]
        ci = c[i]
        e = vals[n] - (np.sum(pu * qi) + bu + ci)
        tP[u] += 1
        tQ[i] += 1
        if power:
            c1u = 1.0 - beta1 ** tP[u]
            c2u = 1.0 - beta2 ** tP[u]
            c1i = 1.0 - beta1 ** tQ[i]
            c2i = 1.0 - beta2 ** tQ[i]
        else:
            c1u = 1.0 - beta1
            c2u = 1.0 - beta2
            c1i = c1u
            c2i = c2u
        # descent-convention gradients of the single-entry term
        gp = lam * pu - e * qi
        gq = lam * qi - e * pu
        gb = lam * bu - e
        gc = lam * ci - e

        mP[u] = beta1 * mP[u] + (1.0 - beta1) * gp
        vP[u] = beta2 * vP[u] + (1.0 - beta2) * gp * gp
        P[u] = pu - alpha * (mP[u] / c1u) / (np.sqrt(vP[u] / c2u) + psi)

        mQ[i] = beta1 * mQ[i] + (1.0 - beta1) * gq
        vQ[i] = beta2 * vQ[i] + (1.0 - beta2) * gq * gq
        Q[i] = qi - alpha * (mQ[i] / c1i) / (np.sqrt(vQ[i] / c2i) + psi)

        mb[u] = beta1 * mb[u] + (1.0 - beta1) * gb
        vb[u] = beta2 * vb[u] + (1.0 - beta2) * gb * gb
        b[u] = bu - alpha * (mb[u] / c1u) / (np.sqrt(vb[u] / c2u) + psi)

        mc[i] = beta1 * mc[i] + (1.0 - beta1) * gc
        vc[i] = beta2 * vc[i] + (1.0 - beta2) * gc * gc
        c[i] = ci - alpha * (mc[i] / c1i) / (np.sqrt(vc[i] / c2i) + psi)

        if not np.isfinite(np.sum(P[u]) + np.sum(Q[i]) + b[u] + c[i]):
            return n
    return -1
