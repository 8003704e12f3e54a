"""Ground-truth and clinical-proxy evaluation: Kendall distance, AUC, CV, bootstrap."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .datamodel import BiomarkerDataset, SubjectLabel
from .gmm import ComponentCollapse
from .pipeline import FitConfig, fit_model
from .rng import child_seed, stream

log = logging.getLogger(__name__)


def kendall_distance_normalized(S, T) -> float:
    """Fraction of event pairs ordered differently by the two permutations."""
    S, T = list(S), list(T)
    n = len(S)
    if n != len(T):
        raise ValueError("kendall_distance_normalized: length mismatch")
    if n < 2:
        return 0.0
    pos_s = np.empty(n, dtype=int)
    pos_s[S] = np.arange(n)
    pos_t = np.empty(n, dtype=int)
    pos_t[T] = np.arange(n)
    a, b = np.triu_indices(n, k=1)
    discordant = np.sum((pos_s[a] - pos_s[b]) * (pos_t[a] - pos_t[b]) < 0)
    return float(discordant / (n * (n - 1) / 2))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC, ties counted as one half. ``labels`` are truthy for positives."""
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc: need both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def stratified_folds(labels, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per subject; each label group is shuffled and dealt round-robin."""
    labels = list(labels)
    fold_of = np.empty(len(labels), dtype=int)
    offset = 0
    for lab in sorted(set(labels), key=lambda l: l.value if hasattr(l, "value") else str(l)):
        idx = np.array([j for j, l in enumerate(labels) if l == lab])
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (offset + np.arange(len(idx))) % folds
        offset += len(idx)
    return fold_of


def _de_cn_auc(stages, labels) -> Optional[float]:
    mask = np.array([l in (SubjectLabel.CN, SubjectLabel.DE) for l in labels])
    y = np.array([l is SubjectLabel.DE for l in labels])[mask]
    if y.all() or not y.any():
        return None
    return auc(np.asarray(stages)[mask], y)


def _converter_auc(stages, tags) -> Optional[float]:
    if tags is None:
        return None
    mask = np.array([t in ("converter", "nonconverter") for t in tags])
    y = np.array([t == "converter" for t in tags])[mask]
    if y.all() or not y.any():
        return None
    return auc(np.asarray(stages)[mask], y)


def _trainable(labels) -> bool:
    return sum(l is SubjectLabel.CN for l in labels) >= 2 and sum(l is SubjectLabel.DE for l in labels) >= 2


@dataclass
class CrossvalResult:
    method: str
    folds: int
    repeats: int
    # per repeat: pooled test-set stage per subject (nan if never staged)
    stages: list = field(default_factory=list)
    fold_assignments: list = field(default_factory=list)
    auc_de_cn: list = field(default_factory=list)
    auc_converter: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def summary(self) -> dict:
        def stats(v):
            v = [x for x in v if x is not None]
            return {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)} if v else None

        return {
            "method": self.method,
            "folds": self.folds,
            "repeats": self.repeats,
            "auc_de_cn": stats(self.auc_de_cn),
            "auc_converter": stats(self.auc_converter),
            "warnings": list(self.warnings),
        }


def crossval(ds: BiomarkerDataset, method: str, folds: int = 10, repeats: int = 10, seed: int = 0,
             cfg: Optional[FitConfig] = None) -> CrossvalResult:
    """Repeated stratified k-fold CV: fit on train folds, stage the held-out subjects.

    Held-out stages are pooled per repeat before computing the DE-vs-CN AUC
    (and the converter AUC when tags are present).
    """
    if folds < 2 or folds > ds.n_subjects:
        raise ValueError("folds must be between 2 and the number of subjects")
    res = CrossvalResult(method, folds, repeats)
    for r in range(repeats):
        fold_of = stratified_folds(ds.labels, folds, stream(seed, "crossval", r))
        res.fold_assignments.append(fold_of)
        pooled = np.full(ds.n_subjects, np.nan)
        for k in range(folds):
            test = np.flatnonzero(fold_of == k)
            train = np.flatnonzero(fold_of != k)
            if test.size == 0:
                continue
            train_ds = ds.subset(train)
            if not _trainable(train_ds.labels):
                msg = f"repeat {r} fold {k}: training set lacks CN or DE subjects; fold skipped"
                log.warning(msg)
                res.warnings.append(msg)
                continue
            try:
                model = fit_model(train_ds, method, cfg, seed=child_seed(seed, "crossval-fit", r, k))
            except ComponentCollapse as exc:
                msg = f"repeat {r} fold {k}: {exc}; fold skipped"
                log.warning(msg)
                res.warnings.append(msg)
                continue
            test_ds = ds.subset(test)
            st = model.stages(test_ds)
            pooled[test] = st
            fold_auc = _de_cn_auc(st, test_ds.labels)
            if fold_auc is None:
                res.warnings.append(f"repeat {r} fold {k}: test fold lacks CN or DE; fold AUC skipped")
            else:
                res.rows.append((method, r, k, "auc_de_cn", fold_auc))
        res.stages.append(pooled)
        staged = ~np.isnan(pooled)
        labels = [ds.labels[j] for j in np.flatnonzero(staged)]
        a = _de_cn_auc(pooled[staged], labels)
        res.auc_de_cn.append(a)
        if a is not None:
            res.rows.append((method, r, "all", "auc_de_cn", a))
        tags = None if ds.tags is None else [ds.tags[j] for j in np.flatnonzero(staged)]
        c = _converter_auc(pooled[staged], tags)
        res.auc_converter.append(c)
        if c is not None:
            res.rows.append((method, r, "all", "auc_converter_proxy", c))
    return res


@dataclass
class BootstrapResult:
    method: str
    samples: np.ndarray       # B x N event centers, indexed by event
    display_order: tuple      # events in the reference (full-data nDEBM) order

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.samples.std(axis=0)


def stratified_resample(labels, rng: np.random.Generator) -> np.ndarray:
    labels = list(labels)
    out = []
    for lab in SubjectLabel:
        idx = np.array([j for j, l in enumerate(labels) if l is lab], dtype=int)
        if idx.size:
            out.append(rng.choice(idx, size=idx.size, replace=True))
    return np.sort(np.concatenate(out))


def bootstrap_event_centers(ds: BiomarkerDataset, method: str, B: int = 100, seed: int = 0,
                            cfg: Optional[FitConfig] = None, reference_order=None,
                            max_redraws: int = 10) -> BootstrapResult:
    if method == "ebm":
        raise ValueError("event centers are not defined for the classic EBM")
    if B < 1:
        raise ValueError("B must be >= 1")
    if reference_order is None:
        reference_order = fit_model(ds, "ndebm", cfg, seed=seed).ordering.order
    samples = []
    for b in range(B):
        rng = stream(seed, "bootstrap", b)
        model = None
        for _ in range(max_redraws):
            idx = stratified_resample(ds.labels, rng)
            sub = ds.subset(idx, suffix_duplicates=True)
            if not _trainable(sub.labels):
                continue
            try:
                model = fit_model(sub, method, cfg, seed=child_seed(seed, "bootstrap-fit", b))
            except ComponentCollapse as exc:
                # duplicated outliers can pin a mixture component; draw again
                log.warning("bootstrap sample %d: %s; redrawing", b, exc)
                continue
            break
        if model is None:
            raise RuntimeError(f"bootstrap sample {b}: no usable resample after {max_redraws} draws")
        samples.append(np.asarray(model.ordering.centers))
    return BootstrapResult(method, np.array(samples), tuple(reference_order))
