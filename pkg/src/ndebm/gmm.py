"""Two-component Gaussian mixtures for scalar biomarkers (EBM / DEBM posteriors)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .datamodel import BiomarkerDataset, SubjectLabel


class ComponentCollapse(ArithmeticError):
    """EM reached a degenerate component; ``loglik_trace`` holds the iterations run so far."""

    def __init__(self, message: str, loglik_trace=()):
        super().__init__(message)
        self.loglik_trace = tuple(loglik_trace)


@dataclass(frozen=True)
class BiomarkerMixture:
    mu_n: float
    sd_n: float
    mu_a: float
    sd_a: float
    pi_a: float
    # observed-data log-likelihood after each EM iteration (diagnostic only)
    loglik_trace: tuple = field(default=(), compare=False, repr=False)

    def to_json_dict(self) -> dict:
        return {"type": "gmm", "mu_n": self.mu_n, "sd_n": self.sd_n, "mu_a": self.mu_a,
                "sd_a": self.sd_a, "pi_a": self.pi_a}

    @classmethod
    def from_json_dict(cls, d: dict) -> "BiomarkerMixture":
        return cls(float(d["mu_n"]), float(d["sd_n"]), float(d["mu_a"]), float(d["sd_a"]), float(d["pi_a"]))


def _loglik(x, mu_n, sd_n, mu_a, sd_a, pi_a):
    la = np.log(pi_a) + norm.logpdf(x, mu_a, sd_a)
    ln = np.log1p(-pi_a) + norm.logpdf(x, mu_n, sd_n)
    return la, ln


def fit_mixture(values, labels, tol: float = 1e-6, max_iter: int = 500,
                var_floor: float = 1e-6) -> BiomarkerMixture:
    """EM fit of a normal/abnormal mixture, initialised from the CN and DE groups.

    PRODROMAL subjects take part in EM as unlabeled data. After every M-step the
    components are swapped back if the abnormal mean crossed to the CN side.
    """
    x = np.asarray(values, dtype=float)
    labels = [SubjectLabel(l) for l in labels]
    if not np.all(np.isfinite(x)):
        raise ValueError("fit_mixture: non-finite values")
    cn = np.array([l is SubjectLabel.CN for l in labels])
    de = np.array([l is SubjectLabel.DE for l in labels])
    if cn.sum() < 2 or de.sum() < 2:
        raise ValueError("fit_mixture: need at least 2 CN and 2 DE subjects")

    data_var = float(np.var(x))
    if data_var <= 0 or not np.isfinite(data_var):
        raise ComponentCollapse("component collapse: biomarker has no variance")
    floor = var_floor * data_var

    mu_n, mu_a = float(x[cn].mean()), float(x[de].mean())
    direction = np.sign(mu_a - mu_n) or 1.0
    sd_n = float(np.sqrt(max(x[cn].var(), floor)))
    sd_a = float(np.sqrt(max(x[de].var(), floor)))
    pi_a = float(de.sum() / (cn.sum() + de.sum()))

    trace = []
    prev = -np.inf
    for _ in range(max_iter):
        # E-step
        la, ln = _loglik(x, mu_n, sd_n, mu_a, sd_a, pi_a)
        tot = np.logaddexp(la, ln)
        ll = float(tot.sum())
        trace.append(ll)
        if abs(ll - prev) < tol:
            break
        prev = ll
        r = np.exp(la - tot)
        # M-step
        w_a, w_n = r.sum(), (1.0 - r).sum()
        if w_a <= 0 or w_n <= 0:
            raise ComponentCollapse("component collapse: a component lost all responsibility", trace)
        mu_a = float(r @ x / w_a)
        mu_n = float((1.0 - r) @ x / w_n)
        var_a = float(r @ np.square(x - mu_a) / w_a)
        var_n = float((1.0 - r) @ np.square(x - mu_n) / w_n)
        if min(var_a, var_n) < 1e-12 * data_var:
            raise ComponentCollapse("component collapse", trace)
        sd_a = float(np.sqrt(max(var_a, floor)))
        sd_n = float(np.sqrt(max(var_n, floor)))
        pi_a = float(np.clip(w_a / len(x), 1e-12, 1.0 - 1e-12))
        if np.sign(mu_a - mu_n) == -direction:
            mu_a, mu_n = mu_n, mu_a
            sd_a, sd_n = sd_n, sd_a
            pi_a = 1.0 - pi_a
    else:
        la, ln = _loglik(x, mu_n, sd_n, mu_a, sd_a, pi_a)
        trace.append(float(np.logaddexp(la, ln).sum()))
    return BiomarkerMixture(mu_n, sd_n, mu_a, sd_a, pi_a, tuple(trace))


def posterior(x, mix: BiomarkerMixture):
    """p(E | x) under the mixture, using the mixing weight as the event prior."""
    la, ln = _loglik(np.asarray(x, dtype=float), mix.mu_n, mix.sd_n, mix.mu_a, mix.sd_a, mix.pi_a)
    out = np.exp(la - np.logaddexp(la, ln))
    return float(out) if np.ndim(out) == 0 else out


def observed_loglik(x, mix: BiomarkerMixture) -> float:
    la, ln = _loglik(np.asarray(x, dtype=float), mix.mu_n, mix.sd_n, mix.mu_a, mix.sd_a, mix.pi_a)
    return float(logsumexp(np.stack([la, ln]), axis=0).sum())


def posteriors_for_dataset(ds: BiomarkerDataset, i: int):
    """Fit biomarker ``i`` on all subjects and return ``(posteriors, mixture)``."""
    mix = fit_mixture(ds.scalars[:, i], ds.labels)
    return posterior(ds.scalars[:, i], mix), mix
