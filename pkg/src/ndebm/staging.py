"""Patient staging on a fitted event timeline, and event-center estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression

from .datamodel import EventOrdering, PosteriorMatrix

CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class StageDistribution:
    """Unnormalized stage weights p(n, S, X_j) for n = 0..N."""

    weights: np.ndarray

    def normalized(self) -> np.ndarray:
        total = self.weights.sum()
        return self.weights / total if total > 0 else self.weights.copy()


def _order_of(S) -> list:
    return list(S.order) if isinstance(S, EventOrdering) else [int(k) for k in S]


def _values(P) -> np.ndarray:
    return P.values if isinstance(P, PosteriorMatrix) else np.asarray(P, dtype=float)


def stage_weight_matrix(S, P, clamp: float = 0.0) -> np.ndarray:
    """Row j holds prod_{i<=n} p(E_S(i)) * prod_{i>n} (1 - p(E_S(i))) for n = 0..N."""
    Q = np.atleast_2d(_values(P))[:, _order_of(S)]
    if clamp > 0:
        Q = np.clip(Q, clamp, 1.0 - clamp)
    m = Q.shape[0]
    head = np.concatenate([np.ones((m, 1)), np.cumprod(Q, axis=1)], axis=1)
    tail = np.concatenate([np.cumprod((1.0 - Q)[:, ::-1], axis=1)[:, ::-1], np.ones((m, 1))], axis=1)
    return head * tail


def stage_weights(S, posteriors_j) -> StageDistribution:
    return StageDistribution(stage_weight_matrix(S, np.asarray(posteriors_j, dtype=float)[None, :])[0])


def _centers_along(S, centers) -> np.ndarray:
    """lambda_0 = 0 followed by the centers of S(1), ..., S(N)."""
    order = _order_of(S)
    lam = np.asarray(centers, dtype=float)
    return np.concatenate([[0.0], lam[order]])


def patient_stages(S: EventOrdering, P, centers=None) -> np.ndarray:
    """Expected event-center position of every subject (all-normal stage contributes 0)."""
    centers = S.centers if centers is None else centers
    if centers is None:
        raise ValueError("patient staging needs event centers")
    W = stage_weight_matrix(S, P, clamp=CLAMP)
    lam = _centers_along(S, centers)
    return (W @ lam) / W.sum(axis=1)


def patient_stage(S, centers, posteriors_j) -> float:
    return float(patient_stages(S if isinstance(S, EventOrdering) else EventOrdering(S),
                                np.asarray(posteriors_j, dtype=float)[None, :], centers)[0])


def uniform_centers(S, denom=None) -> np.ndarray:
    """centers[S(k)] = k / denom for k = 1..N (denom defaults to N + 1)."""
    order = _order_of(S)
    n = len(order)
    denom = n + 1 if denom is None else denom
    lam = np.empty(n)
    lam[order] = np.arange(1, n + 1) / denom
    return lam


def estimate_event_centers(S, P) -> np.ndarray:
    """Event centers, indexed by event, non-decreasing along ``S``.

    Provisional stages are computed with evenly spaced centers; each event's
    center is then the mean provisional stage of subjects weighted by their
    responsibility for the stage at which that event has just occurred, and a
    weighted isotonic fit restores monotonicity along the ordering.
    """
    order = _order_of(S)
    n = len(order)
    lam0 = uniform_centers(order)
    W = stage_weight_matrix(order, P, clamp=CLAMP)
    R = W / W.sum(axis=1, keepdims=True)
    stage0 = R @ _centers_along(order, lam0)
    mass = R[:, 1:].sum(axis=0)
    along = np.where(mass > 0, (stage0 @ R[:, 1:]) / np.where(mass > 0, mass, 1.0), lam0[order])
    fit = isotonic_regression(along, weights=np.maximum(mass, 1e-300), increasing=True).x
    lam = np.empty(n)
    lam[order] = np.clip(fit, 0.0, 1.0)
    return lam
