"""SMO for the dual of the per-sample-cost soft-margin SVM (bias unregularized).

    min_a  1/2 a^T Q a - sum(a)   s.t.  0 <= a_i <= c_i,  y^T a = 0,
    Q_ij = y_i y_j K_ij

Working-set selection uses second-order information (Fan, Chen & Lin, 2005).
"""
from __future__ import annotations

import numpy as np
from numba import njit

TAU = 1e-12


@njit(cache=True)
def smo_solve(K, y, c, alpha, grad, eps, max_iter):
    """Run SMO in place on ``alpha``/``grad`` until the maximal KKT violation is below eps.

    ``grad`` must equal Q @ alpha - 1 on entry. Returns (iterations, violation).
    """
    n = y.shape[0]
    it = 0
    gap = np.inf
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < c[t]) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < c[t]):
                v = -y[t] * grad[t]
                if v < gmin:
                    gmin = v
                if i >= 0:
                    b = gmax - v
                    if b > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = TAU
                        o = -(b * b) / a
                        if o <= obj_min:
                            obj_min = o
                            j = t
        gap = gmax - gmin
        if i < 0 or j < 0 or gap < eps:
            break
        it += 1

        ci = c[i]
        cj = c[j]
        ai_old = alpha[i]
        aj_old = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > ci - cj:
                if alpha[i] > ci:
                    alpha[i] = ci
                    alpha[j] = ci - diff
            else:
                if alpha[j] > cj:
                    alpha[j] = cj
                    alpha[i] = cj + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > ci:
                if alpha[i] > ci:
                    alpha[i] = ci
                    alpha[j] = s - ci
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > cj:
                if alpha[j] > cj:
                    alpha[j] = cj
                    alpha[i] = s - cj
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s

        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        yi = y[i]
        yj = y[j]
        for t in range(n):
            grad[t] += y[t] * (yi * K[i, t] * dai + yj * K[j, t] * daj)
    return it, gap


def optimal_bias(margin_wx: np.ndarray, y: np.ndarray, c: np.ndarray) -> float:
    """Exact minimizer over b of sum_j c_j * max(0, 1 - y_j (wx_j + b)).

    The objective is convex piecewise-linear with kinks at b = y_j - wx_j, so the
    minimum sits at a kink where the subgradient changes sign.
    """
    kinks = y - margin_wx
    order = np.argsort(kinks, kind="stable")
    k, yy, cc = kinks[order], y[order], c[order]
    # below every kink only positives are active (slope -c each); crossing any
    # kink adds +c (a positive deactivates or a negative activates)
    slope = -cc[yy > 0].sum() + np.cumsum(cc)
    idx = int(np.argmax(slope >= 0)) if np.any(slope >= 0) else len(k) - 1
    return float(k[idx])
