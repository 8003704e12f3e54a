"""Fit EBM / DEBM / nDEBM end to end and apply the fitted model to new subjects."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import gmm, ordering, ssvm, staging
from .datamodel import BiomarkerDataset, EventOrdering, PosteriorMatrix

METHODS = ("ebm", "debm", "ndebm")


@dataclass(frozen=True)
class FitConfig:
    ssvm: ssvm.SsvmConfig = field(default_factory=ssvm.SsvmConfig)
    ebm_restarts: int = 10
    exact_max_events: int = 15

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "FitConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown fit config keys: {sorted(unknown)}")
        sv = d.pop("ssvm", {})
        if set(sv) - set(ssvm.SsvmConfig.__dataclass_fields__):
            raise ValueError(f"unknown ssvm config keys: {sorted(set(sv) - set(ssvm.SsvmConfig.__dataclass_fields__))}")
        return cls(ssvm=ssvm.SsvmConfig(**sv), **d)


@dataclass(frozen=True)
class SvmPosteriorModel:
    classifier: ssvm.LinearClassifier
    calibration: ssvm.PlattCalibration

    def __call__(self, X) -> np.ndarray:
        return np.clip(self.calibration(self.classifier.decision(X)), 0.0, 1.0)

    def to_json_dict(self) -> dict:
        return {"type": "svm", **self.classifier.to_json_dict(), **self.calibration.to_json_dict()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "SvmPosteriorModel":
        return cls(ssvm.LinearClassifier(np.asarray(d["w"], dtype=float), float(d["b"])),
                   ssvm.PlattCalibration(float(d["A"]), float(d["B"])))


@dataclass(frozen=True)
class FittedModel:
    method: str
    biomarker_names: tuple
    ordering: EventOrdering
    posterior_models: tuple
    config: FitConfig
    seed: int
    objective: float = float("nan")

    def posteriors(self, ds: BiomarkerDataset) -> PosteriorMatrix:
        if tuple(ds.biomarker_names) != tuple(self.biomarker_names):
            raise ValueError("dataset biomarkers do not match the model")
        cols = []
        for i, pm in enumerate(self.posterior_models):
            if self.method == "ndebm":
                cols.append(pm(ds.regions[i]))
            else:
                cols.append(gmm.posterior(ds.scalars[:, i], pm))
        return PosteriorMatrix(np.column_stack(cols))

    def stages(self, ds: BiomarkerDataset) -> np.ndarray:
        return staging.patient_stages(self.ordering, self.posteriors(ds))

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "biomarker_names": list(self.biomarker_names),
            "ordering": list(self.ordering.order),
            "centers": list(self.ordering.centers),
            "objective": self.objective,
            "posterior_models": [pm.to_json_dict() for pm in self.posterior_models],
            "config": self.config.to_json_dict(),
            "seed": self.seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json_dict(cls, d: dict) -> "FittedModel":
        pms = []
        for pm in d["posterior_models"]:
            if pm["type"] == "svm":
                pms.append(SvmPosteriorModel.from_json_dict(pm))
            elif pm["type"] == "gmm":
                pms.append(gmm.BiomarkerMixture.from_json_dict(pm))
            else:
                raise ValueError(f"unknown posterior model type {pm['type']!r}")
        return cls(
            method=d["method"],
            biomarker_names=tuple(d["biomarker_names"]),
            ordering=EventOrdering(d["ordering"], d["centers"]),
            posterior_models=tuple(pms),
            config=FitConfig.from_json_dict(d["config"]),
            seed=int(d["seed"]),
            objective=float(d["objective"]),
        )


def fit_posteriors(ds: BiomarkerDataset, method: str, cfg: FitConfig):
    """Posterior matrix for the training data plus the per-biomarker posterior models."""
    cols, models = [], []
    for i in range(ds.n_biomarkers):
        if method == "ndebm":
            res = ssvm.semi_supervised_posteriors(ds.regions[i], ds.labels, cfg.ssvm)
            cols.append(res.posteriors)
            models.append(SvmPosteriorModel(res.classifier, res.calibration))
        else:
            post, mix = gmm.posteriors_for_dataset(ds, i)
            cols.append(post)
            models.append(mix)
    return PosteriorMatrix(np.column_stack(cols)), tuple(models)


def fit_model(ds: BiomarkerDataset, method: str, cfg: Optional[FitConfig] = None, seed: int = 0) -> FittedModel:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    cfg = cfg or FitConfig()
    P, models = fit_posteriors(ds, method, cfg)
    if method == "ebm":
        res = ordering.fit_ebm(P, restarts=cfg.ebm_restarts, seed=seed)
        S = res.ordering.order
        # EBM has no event centers; stage k sits at k / N
        centers = staging.uniform_centers(S, denom=len(S))
        objective = res.log_likelihood
    else:
        res = ordering.central_ordering(P, exact_max_events=cfg.exact_max_events)
        S = res.ordering.order
        centers = staging.estimate_event_centers(S, P)
        objective = res.objective
    return FittedModel(
        method=method,
        biomarker_names=tuple(ds.biomarker_names),
        ordering=EventOrdering(S, centers),
        posterior_models=models,
        config=cfg,
        seed=int(seed),
        objective=float(objective),
    )
