"""Synthetic cross-sectional data with a known event ordering.

Each region's degree of abnormality follows a sigmoid in the subject's disease
stage. A per-region latent population (CN and DE clusters) defines a scale
vector running from an extended CN origin to an extended DE endpoint; a latent
point is sampled from the pooled population and translated along that vector
until it sits at the target abnormality, then pushed through a fixed
softplus-linear decoder to produce voxel-like features.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .datamodel import BiomarkerDataset, GroundTruth, SubjectLabel
from .rng import child_seed, stream


@dataclass(frozen=True)
class TrajectoryConfig:
    n_events: int = 15
    n_subjects: int = 1737
    rho: float = 20.0
    # None -> equally spaced on (0, 1): (k + 1) / (N + 1)
    mu_xi: Optional[tuple] = None
    # None -> spacing of mu_xi
    sigma_xi: Optional[float] = None
    noise_std: float = 0.05
    label_fractions: tuple = (0.25, 0.55, 0.20)
    # assign the spaced onset times to regions in a seeded random order, so the
    # true ordering is not the identity
    permute_events: bool = True

    def __post_init__(self):
        object.__setattr__(self, "label_fractions", tuple(float(f) for f in self.label_fractions))
        if self.mu_xi is not None:
            object.__setattr__(self, "mu_xi", tuple(float(m) for m in self.mu_xi))

    def resolved_mu_xi(self) -> np.ndarray:
        if self.mu_xi is not None:
            return np.asarray(self.mu_xi, dtype=float)
        return np.arange(1, self.n_events + 1) / (self.n_events + 1)

    def resolved_sigma_xi(self) -> float:
        if self.sigma_xi is not None:
            return float(self.sigma_xi)
        mu = self.resolved_mu_xi()
        return float(mu[1] - mu[0]) if len(mu) > 1 else 0.1

    def validate(self) -> None:
        if self.n_events < 1:
            raise ValueError("n_events must be >= 1")
        if self.n_subjects < 2:
            raise ValueError("n_subjects must be >= 2")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        fr = self.label_fractions
        if len(fr) != 3 or any(f < 0 for f in fr):
            raise ValueError("label_fractions must be three nonnegative numbers")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("label fractions must sum to 1")
        mu = self.resolved_mu_xi()
        if len(mu) != self.n_events:
            raise ValueError("mu_xi must have n_events entries")
        steps = np.diff(mu)
        if len(steps) and (np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12)):
            raise ValueError("mu_xi must be strictly increasing with constant spacing")
        if not self.resolved_sigma_xi() > 0:
            raise ValueError("sigma_xi must be positive")


@dataclass(frozen=True)
class SimulationConfig:
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    latent_dim: int = 32
    n_voxels: int = 512
    separation: float = 4.0
    voxel_noise_std: float = 0.1
    sigma_multiple: float = 3.0

    def validate(self) -> None:
        self.trajectory.validate()
        if self.latent_dim < 1 or self.n_voxels < 1:
            raise ValueError("latent_dim and n_voxels must be >= 1")
        if not self.separation > 0:
            raise ValueError("separation must be positive")
        if self.voxel_noise_std < 0 or self.sigma_multiple < 0:
            raise ValueError("voxel_noise_std and sigma_multiple must be nonnegative")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["trajectory"]["label_fractions"] = list(self.trajectory.label_fractions)
        if self.trajectory.mu_xi is not None:
            d["trajectory"]["mu_xi"] = list(self.trajectory.mu_xi)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SimulationConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown simulation config keys: {sorted(unknown)}")
        traj = dict(d.pop("trajectory", {}))
        tknown = set(TrajectoryConfig.__dataclass_fields__)
        if set(traj) - tknown:
            raise ValueError(f"unknown trajectory config keys: {sorted(set(traj) - tknown)}")
        if "label_fractions" in traj:
            traj["label_fractions"] = tuple(traj["label_fractions"])
        if traj.get("mu_xi") is not None:
            traj["mu_xi"] = tuple(traj["mu_xi"])
        return cls(trajectory=TrajectoryConfig(**traj), **d)


def abnormality(psi, rho, xi, eps=0.0):
    """Sigmoid degree of abnormality at disease stage ``psi`` (plus additive noise, no clipping)."""
    psi, rho, xi, eps = (np.asarray(v, dtype=float) for v in (psi, rho, xi, eps))
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(rho)) and np.all(np.isfinite(xi)) and np.all(np.isfinite(eps))):
        raise ValueError("abnormality: non-finite input")
    if np.any(rho <= 0):
        raise ValueError("abnormality: rho must be positive")
    z = -rho * (psi - xi)
    # exp overflow only saturates the sigmoid to 0
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(z)) + eps
    return float(out) if out.ndim == 0 else out


# -- latent geometry ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LatentRegionModel:
    mu_cn: np.ndarray
    mu_de: np.ndarray
    sigma_cn: np.ndarray
    sigma_de: np.ndarray
    pool_mean: np.ndarray
    pool_std: np.ndarray
    sigma_multiple: float = 3.0

    # derived geometry, filled in __post_init__
    u: np.ndarray = field(init=False)
    u_hat: np.ndarray = field(init=False)
    sigma_cnp: float = field(init=False)
    sigma_dep: float = field(init=False)
    origin: np.ndarray = field(init=False)
    endpoint: np.ndarray = field(init=False)
    scale: np.ndarray = field(init=False)
    scale_norm: float = field(init=False)

    def __post_init__(self):
        for name in ("mu_cn", "mu_de", "sigma_cn", "sigma_de", "pool_mean", "pool_std"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        u = self.mu_de - self.mu_cn
        norm_u = float(np.linalg.norm(u))
        if not norm_u > 0:
            raise ValueError("CN and DE latent means coincide")
        u_hat = u / norm_u
        s_cn = abs(float(self.sigma_cn @ u_hat))
        s_de = abs(float(self.sigma_de @ u_hat))
        origin = self.mu_cn - self.sigma_multiple * s_cn * u_hat
        endpoint = self.mu_de + self.sigma_multiple * s_de * u_hat
        scale = endpoint - origin
        for name, val in (
            ("u", u), ("u_hat", u_hat), ("sigma_cnp", s_cn), ("sigma_dep", s_de),
            ("origin", origin), ("endpoint", endpoint), ("scale", scale),
            ("scale_norm", float(np.linalg.norm(scale))),
        ):
            object.__setattr__(self, name, val)

    @property
    def latent_dim(self) -> int:
        return self.mu_cn.shape[0]

    @classmethod
    def from_stats(cls, mu_cn, sigma_cn, mu_de, sigma_de, sigma_multiple=3.0, pool_mean=None, pool_std=None):
        mu_cn = np.atleast_1d(np.asarray(mu_cn, dtype=float))
        mu_de = np.atleast_1d(np.asarray(mu_de, dtype=float))
        if pool_mean is None:
            pool_mean = 0.5 * (mu_cn + mu_de)
        if pool_std is None:
            # std of an equal-weight two-component mixture
            var = 0.5 * (np.square(sigma_cn) + np.square(sigma_de)) + 0.25 * np.square(mu_de - mu_cn)
            pool_std = np.sqrt(var)
        return cls(mu_cn, mu_de, sigma_cn, sigma_de, pool_mean, pool_std, sigma_multiple)


def make_latent_model(seed: int, K: int, separation: float, sigma_multiple: float = 3.0,
                      n_per_class: int = 500) -> LatentRegionModel:
    """Seeded stand-in for a trained VAE latent space of one region."""
    if K < 1 or not separation > 0:
        raise ValueError("need K >= 1 and separation > 0")
    rng = stream(seed, "latent-model")
    mu_cn = rng.standard_normal(K)
    v = rng.standard_normal(K)
    while np.linalg.norm(v) == 0:
        v = rng.standard_normal(K)
    v /= np.linalg.norm(v)
    mu_de = mu_cn + separation * v
    sigma_cn = rng.uniform(0.5, 1.5, K)
    sigma_de = rng.uniform(0.5, 1.5, K)
    # pooled statistics of a finite latent "training population"
    z_cn = mu_cn + sigma_cn * rng.standard_normal((n_per_class, K))
    z_de = mu_de + sigma_de * rng.standard_normal((n_per_class, K))
    pooled = np.vstack([z_cn, z_de])
    return LatentRegionModel(mu_cn, mu_de, sigma_cn, sigma_de, pooled.mean(axis=0), pooled.std(axis=0),
                             sigma_multiple)


def abnormality_of_point(Z, model: LatentRegionModel):
    """Position of ``Z`` along the scale vector: 0 at the CN origin, 1 at the DE endpoint."""
    Z = np.asarray(Z, dtype=float)
    out = (Z - model.origin) @ model.u_hat / model.scale_norm
    return float(out) if np.ndim(out) == 0 else out


def translate_to(Z_s, a_target, model: LatentRegionModel):
    a_s = abnormality_of_point(Z_s, model)
    return np.asarray(Z_s, dtype=float) + (a_target - a_s) * model.scale


def sample_latent_at(a_target: float, model: LatentRegionModel, rng: np.random.Generator) -> np.ndarray:
    z_s = model.pool_mean + model.pool_std * rng.standard_normal(model.latent_dim)
    return translate_to(z_s, a_target, model)


# -- decoder -----------------------------------------------------------------

def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(frozen=True, eq=False)
class DecoderModel:
    W: np.ndarray
    b: np.ndarray
    voxel_noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "W", np.atleast_2d(np.asarray(self.W, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))
        if self.W.shape[0] != self.b.shape[0]:
            raise ValueError("decoder W and b disagree on output size")

    @property
    def n_voxels(self) -> int:
        return self.W.shape[0]


def make_decoder(seed: int, K: int, D: int, voxel_noise_std: float) -> DecoderModel:
    rng = stream(seed, "decoder")
    W = rng.standard_normal((D, K)) / math.sqrt(K)
    b = rng.standard_normal(D)
    return DecoderModel(W, b, voxel_noise_std)


def decode(Z, decoder: DecoderModel, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """softplus(W Z + b) plus iid voxel noise, clamped at zero. Accepts (K,) or (n, K)."""
    Z = np.asarray(Z, dtype=float)
    out = softplus(Z @ decoder.W.T + decoder.b)
    if decoder.voxel_noise_std > 0:
        if rng is None:
            raise ValueError("decode needs an rng when voxel_noise_std > 0")
        out = out + decoder.voxel_noise_std * rng.standard_normal(out.shape)
    return np.maximum(out, 0.0)


def scalar_aggregate(voxels) -> float:
    """Integrated density over the region (sum of voxel values)."""
    voxels = np.asarray(voxels, dtype=float)
    return voxels.sum(axis=-1)


# -- dataset simulation ------------------------------------------------------

def assign_labels(psi: np.ndarray, fractions) -> list:
    m = len(psi)
    n_cn = int(round(fractions[0] * m))
    n_de = int(round(fractions[2] * m))
    if n_cn + n_de > m:
        n_de = m - n_cn
    rank = np.empty(m, dtype=int)
    rank[np.argsort(psi, kind="stable")] = np.arange(m)
    labels = []
    for r in rank:
        if r < n_cn:
            labels.append(SubjectLabel.CN)
        elif r >= m - n_de:
            labels.append(SubjectLabel.DE)
        else:
            labels.append(SubjectLabel.PRODROMAL)
    return labels


def converter_tags(psi: np.ndarray, labels) -> list:
    """Synthetic stand-in for conversion status: upper half of the PRODROMAL Psi band converts."""
    psi = np.asarray(psi)
    prod = np.array([l is SubjectLabel.PRODROMAL for l in labels])
    tags = [""] * len(labels)
    if prod.any():
        cut = np.median(psi[prod])
        for j in np.flatnonzero(prod):
            tags[j] = "converter" if psi[j] > cut else "nonconverter"
    return tags


def simulate_dataset(cfg: SimulationConfig, seed: int):
    """Simulate a dataset; returns ``(BiomarkerDataset, GroundTruth)``."""
    cfg.validate()
    tc = cfg.trajectory
    M, N = tc.n_subjects, tc.n_events
    K, D = cfg.latent_dim, cfg.n_voxels

    mu_sorted = tc.resolved_mu_xi()
    sigma_xi = tc.resolved_sigma_xi()
    if tc.permute_events:
        perm = stream(seed, "event-permutation").permutation(N)
        mu_xi = mu_sorted[perm]
    else:
        mu_xi = mu_sorted.copy()
    rho = np.full(N, float(tc.rho))

    psi = stream(seed, "psi").uniform(0.0, 1.0, M)
    xi = mu_xi + sigma_xi * stream(seed, "xi").standard_normal((M, N))
    eps = tc.noise_std * stream(seed, "eps").standard_normal((M, N))
    a = abnormality(psi[:, None], rho[None, :], xi, eps)

    regions, scalars, latent_models = [], np.empty((M, N)), []
    for i in range(N):
        model = make_latent_model(child_seed(seed, "region", i), K, cfg.separation, cfg.sigma_multiple)
        decoder = make_decoder(child_seed(seed, "region", i), K, D, cfg.voxel_noise_std)
        latent_models.append(model)
        feats = np.empty((M, D))
        for j in range(M):
            rng = stream(seed, "subject", i, j)
            z = sample_latent_at(a[j, i], model, rng)
            feats[j] = decode(z, decoder, rng)
        regions.append(feats)
        scalars[:, i] = scalar_aggregate(feats)

    labels = assign_labels(psi, tc.label_fractions)
    ds = BiomarkerDataset(
        subject_ids=[f"S{j:05d}" for j in range(M)],
        labels=labels,
        scalars=scalars,
        regions=regions,
        biomarker_names=[f"region_{i}" for i in range(N)],
        tags=converter_tags(psi, labels),
    )
    truth = GroundTruth(
        true_order=tuple(int(k) for k in np.argsort(mu_xi, kind="stable")),
        rho=tuple(rho.tolist()),
        mu_xi=tuple(mu_xi.tolist()),
        sigma_xi=sigma_xi,
        psi=tuple(psi.tolist()),
        noise_std=float(tc.noise_std),
        extra={
            "seed": int(seed),
            "K": K,
            "D": D,
            "delta": float(cfg.separation),
            "voxel_noise_std": float(cfg.voxel_noise_std),
            "sigma_multiple": float(cfg.sigma_multiple),
            "abnormality": a.tolist(),
            "tag_note": "converter tag is a synthetic proxy: upper half of Psi within PRODROMAL",
        },
    )
    return ds, truth


def desk_config(**overrides) -> SimulationConfig:
    """Reduced-scale configuration used by the tests and quick experiments."""
    traj = {"n_events": 8, "n_subjects": 800}
    traj.update({k: overrides.pop(k) for k in list(overrides) if k in TrajectoryConfig.__dataclass_fields__})
    base = SimulationConfig(
        trajectory=TrajectoryConfig(**traj),
        latent_dim=16,
        n_voxels=256,
        separation=4.0,
    )
    return replace(base, **overrides)
