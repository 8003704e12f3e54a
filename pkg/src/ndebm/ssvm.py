"""Event posteriors for high-dimensional regional features.

A class-balanced linear SVM separates CN from DE for one region. Labeled
subjects that the SVM misclassifies, or places within the trust margin, lose
their labels and join the PRODROMAL subjects as unlabeled data. An EM loop then
retrains a per-sample-cost SVM in which each unlabeled subject carries its
current pseudo-label with a cost proportional to its calibrated confidence,
until the unlabeled posteriors stop moving.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._smo import optimal_bias, smo_solve
from .datamodel import SubjectLabel


class SolverError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    w: np.ndarray
    b: float
    duality_gap: float = 0.0
    objective: float = 0.0

    def decision(self, X) -> np.ndarray:
        """Signed decision value; larger means more abnormal."""
        return np.asarray(X, dtype=float) @ self.w + self.b

    def to_json_dict(self) -> dict:
        return {"w": np.asarray(self.w).tolist(), "b": float(self.b)}


@dataclass(frozen=True)
class PlattCalibration:
    A: float
    B: float

    def __call__(self, d):
        f = self.A * np.asarray(d, dtype=float) + self.B
        # 1 / (1 + exp(f)) without overflow
        out = np.exp(-np.logaddexp(0.0, f))
        return float(out) if np.ndim(out) == 0 else out

    def to_json_dict(self) -> dict:
        return {"A": self.A, "B": self.B}


@dataclass(frozen=True)
class SsvmConfig:
    base_cost: float = 1.0
    unlabeled_fraction: float = 0.05
    em_tolerance: float = 1e-4
    max_em_iters: int = 20
    solver_tolerance: float = 1e-4
    standardize: bool = True

    def validate(self) -> None:
        if not self.base_cost > 0:
            raise ValueError("base_cost must be positive")
        if not 0.0 <= self.unlabeled_fraction < 1.0:
            raise ValueError("unlabeled_fraction must lie in [0, 1)")
        if not self.em_tolerance > 0 or not self.solver_tolerance > 0:
            raise ValueError("tolerances must be positive")
        if self.max_em_iters < 1:
            raise ValueError("max_em_iters must be >= 1")


def primal_objective(X, y, costs, w, b) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return float(0.5 * w @ w + costs @ hinge)


def train_weighted_svm(X, y, costs, tol: float = 1e-4, max_iter: int = 10_000_000) -> LinearClassifier:
    """Minimize 1/2 |w|^2 + sum_j costs_j * hinge_j, with an unregularized bias.

    SMO is run with a KKT tolerance that is tightened until the duality gap
    (primal minus dual) is at most ``tol`` both absolutely and relative to the
    primal objective.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    c = np.asarray(costs, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or c.shape != y.shape:
        raise ValueError("train_weighted_svm: shape mismatch")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.any(c <= 0) or not np.all(np.isfinite(c)):
        raise ValueError("costs must be positive and finite")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("train_weighted_svm: need both classes")

    K = X @ X.T
    alpha = np.zeros(len(y))
    grad = -np.ones(len(y))
    eps = 1e-3
    while True:
        smo_solve(K, y, c, alpha, grad, eps, max_iter)
        w = (alpha * y) @ X
        wx = X @ w
        b = optimal_bias(wx, y, c)
        primal = primal_objective(X, y, c, w, b)
        dual = float(alpha.sum() - 0.5 * w @ w)
        gap = max(primal - dual, 0.0)
        if gap <= tol * min(1.0, primal) or eps < 1e-13:
            break
        eps *= 0.1
    if gap > tol * min(1.0, primal):
        raise SolverError(f"SVM duality gap {gap:.3g} did not reach tolerance")
    return LinearClassifier(w, b, gap, primal)


def platt_nll(A: float, B: float, d, y) -> float:
    """Negative log-likelihood of Platt's sigmoid against smoothed targets."""
    d = np.asarray(d, dtype=float)
    t = _platt_targets(np.asarray(y))
    f = A * d + B
    return float(np.sum(np.logaddexp(0.0, f) - (1.0 - t) * f))


def _platt_targets(y) -> np.ndarray:
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    return np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))


def fit_platt(d, y, max_iter: int = 200) -> PlattCalibration:
    """Newton's method with backtracking on the (convex) Platt objective."""
    d = np.asarray(d, dtype=float)
    y = np.asarray(y)
    if d.shape[0] < 2:
        raise ValueError("fit_platt: need at least 2 samples")
    pos = y > 0
    if pos.all() or not pos.any():
        raise ValueError("fit_platt: need both classes")
    t = _platt_targets(y)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    A, B = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))

    def nll(a, b):
        f = a * d + b
        return float(np.sum(np.logaddexp(0.0, f) - (1.0 - t) * f))

    fval = nll(A, B)
    for _ in range(max_iter):
        f = A * d + B
        p = np.exp(-np.logaddexp(0.0, f))
        # derivative of the objective w.r.t. f is t - p
        g = t - p
        h = p * (1.0 - p)
        gA, gB = float(g @ d), float(g.sum())
        if abs(gA) < 1e-11 and abs(gB) < 1e-11:
            break
        hAA = float(h @ (d * d)) + 1e-12
        hBB = float(h.sum()) + 1e-12
        hAB = float(h @ d)
        det = hAA * hBB - hAB * hAB
        dA = -(hBB * gA - hAB * gB) / det
        dB = -(-hAB * gA + hAA * gB) / det
        slope = gA * dA + gB * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = nll(nA, nB)
            if nf <= fval + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        A, B, fval = nA, nB, nf

    if A >= 0:
        # keep p strictly increasing in d: pin a vanishing negative slope and refit B
        A = -1e-6 / max(float(np.std(d)), 1e-12)
        B = _fit_bias_only(A, d, t, B)
    return PlattCalibration(float(A), float(B))


def _fit_bias_only(A, d, t, B):
    for _ in range(100):
        p = np.exp(-np.logaddexp(0.0, A * d + B))
        g = float((t - p).sum())
        h = float((p * (1 - p)).sum()) + 1e-12
        B -= g / h
        if abs(g) < 1e-11:
            break
    return B


def select_threshold_dt(d, y, fraction: float) -> float:
    """Trust margin: the ceil(fraction * n_correct)-th smallest correct signed margin.

    Samples with ``y * d <= d_t`` are untrusted (misclassified ones always are).
    A fraction of zero trusts every correctly classified sample (d_t = 0).
    """
    m = np.asarray(y, dtype=float) * np.asarray(d, dtype=float)
    correct = np.sort(m[m > 0])
    if correct.size == 0:
        raise ValueError("select_threshold_dt: no correctly classified samples")
    # round before ceil so that e.g. 0.05 * 40 counts as exactly 2
    k = math.ceil(round(fraction * correct.size, 9))
    if k <= 0:
        return 0.0
    return float(correct[k - 1])


def pseudo_labels(p_unlabeled, base_cost: float):
    """Labels sign(p - 1/2) and costs C * |p(E) - p(not E)| for unlabeled rows."""
    p = np.asarray(p_unlabeled, dtype=float)
    return np.where(p >= 0.5, 1.0, -1.0), base_cost * np.abs(2.0 * p - 1.0)


class SsvmResult(NamedTuple):
    posteriors: np.ndarray
    classifier: LinearClassifier
    calibration: PlattCalibration
    n_iter: int
    changes: tuple


def _standardizer(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale <= 1e-12 * max(1.0, float(np.abs(mean).max(initial=0.0)))] = 1.0
    return mean, scale


def _to_raw(clf: LinearClassifier, mean, scale) -> LinearClassifier:
    w = clf.w / scale
    return LinearClassifier(w, float(clf.b - w @ mean), clf.duality_gap, clf.objective)


def semi_supervised_posteriors(Xi, labels, cfg: SsvmConfig = SsvmConfig()) -> SsvmResult:
    """Per-region semi-supervised SVM posteriors p(E_i | X_{j,i}) for every subject.

    The returned classifier works on the raw (unstandardized) features.
    """
    cfg.validate()
    X = np.asarray(Xi, dtype=float)
    labels = [SubjectLabel(l) for l in labels]
    is_cn = np.array([l is SubjectLabel.CN for l in labels])
    is_de = np.array([l is SubjectLabel.DE for l in labels])
    if is_cn.sum() < 2 or is_de.sum() < 2:
        raise ValueError("semi_supervised_posteriors: need at least 2 CN and 2 DE subjects")
    if cfg.standardize:
        mean, scale = _standardizer(X)
    else:
        mean, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    Xs = (X - mean) / scale

    labeled = is_cn | is_de
    y = np.where(is_de, 1.0, -1.0)
    C = cfg.base_cost

    # f0: labeled rows only, equal class priors via per-class total cost
    n_lab, n_de = int(labeled.sum()), int(is_de.sum())
    n_cn = n_lab - n_de
    cost0 = np.where(is_de, C * n_lab / (2.0 * n_de), C * n_lab / (2.0 * n_cn))
    clf = train_weighted_svm(Xs[labeled], y[labeled], cost0[labeled], cfg.solver_tolerance)
    d = clf.decision(Xs)

    d_t = select_threshold_dt(d[labeled], y[labeled], cfg.unlabeled_fraction)
    trusted = labeled & (y * d > d_t)
    unl = ~trusted
    cal = fit_platt(d[trusted], y[trusted])

    changes = []
    n_iter = 0
    if unl.any():
        p_u = cal(d[unl])
        for n_iter in range(1, cfg.max_em_iters + 1):
            y_fit = y.copy()
            cost = np.full(len(y), C)
            y_fit[unl], cost[unl] = pseudo_labels(p_u, C)
            keep = cost > 0
            if not (np.any(y_fit[keep] > 0) and np.any(y_fit[keep] < 0)):
                break
            clf = train_weighted_svm(Xs[keep], y_fit[keep], cost[keep], cfg.solver_tolerance)
            d = clf.decision(Xs)
            cal = fit_platt(d[trusted], y[trusted])
            p_new = cal(d[unl])
            change = float(np.mean(np.square(p_new - p_u)))
            changes.append(change)
            p_u = p_new
            if not np.isfinite(change):
                raise SolverError("non-finite change in unlabeled posteriors")
            if change < cfg.em_tolerance:
                break

    post = np.clip(cal(d), 0.0, 1.0)
    return SsvmResult(post, _to_raw(clf, mean, scale), cal, n_iter, tuple(changes))
