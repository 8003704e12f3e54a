"""Core domain types and the on-disk dataset directory format."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

FORMAT_VERSION = 1


class DataValidationError(ValueError):
    """Raised when a dataset on disk or in memory violates its invariants."""


class SubjectLabel(str, Enum):
    CN = "CN"
    PRODROMAL = "PRODROMAL"
    DE = "DE"


@dataclass(frozen=True, eq=False)
class BiomarkerDataset:
    subject_ids: tuple
    labels: tuple
    scalars: np.ndarray
    regions: tuple
    biomarker_names: tuple
    # optional per-subject tag (e.g. converter status); only used for AUC evaluation
    tags: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))
        object.__setattr__(self, "labels", tuple(SubjectLabel(l) for l in self.labels))
        object.__setattr__(self, "biomarker_names", tuple(str(n) for n in self.biomarker_names))
        scalars = np.array(self.scalars, dtype=float)
        scalars.setflags(write=False)
        object.__setattr__(self, "scalars", scalars)
        regions = []
        for r in self.regions:
            r = np.array(r, dtype=float)
            r.setflags(write=False)
            regions.append(r)
        object.__setattr__(self, "regions", tuple(regions))
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple("" if t is None else str(t) for t in self.tags))

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_biomarkers(self) -> int:
        return len(self.biomarker_names)

    @property
    def label_array(self) -> np.ndarray:
        return np.array([l.value for l in self.labels])

    def subset(self, index: Sequence[int], suffix_duplicates: bool = False) -> "BiomarkerDataset":
        """Row subset (may repeat rows, as in bootstrap resampling).

        With ``suffix_duplicates`` repeated subjects get ``#k`` appended so ids
        stay unique.
        """
        index = np.asarray(index, dtype=int)
        ids = [self.subject_ids[k] for k in index]
        if suffix_duplicates:
            seen: dict = {}
            out = []
            for s in ids:
                c = seen.get(s, 0)
                out.append(s if c == 0 else f"{s}#{c}")
                seen[s] = c + 1
            ids = out
        return BiomarkerDataset(
            subject_ids=ids,
            labels=[self.labels[k] for k in index],
            scalars=self.scalars[index],
            regions=[r[index] for r in self.regions],
            biomarker_names=self.biomarker_names,
            tags=None if self.tags is None else [self.tags[k] for k in index],
        )

    def __eq__(self, other):
        if not isinstance(other, BiomarkerDataset):
            return NotImplemented
        return (
            self.subject_ids == other.subject_ids
            and self.labels == other.labels
            and self.biomarker_names == other.biomarker_names
            and self.tags == other.tags
            and np.array_equal(self.scalars, other.scalars)
            and len(self.regions) == len(other.regions)
            and all(np.array_equal(a, b) for a, b in zip(self.regions, other.regions))
        )


@dataclass(frozen=True)
class PosteriorMatrix:
    """M x N matrix of event posteriors p(E_i | X_{j,i})."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("posterior matrix must be 2-D")
        if not np.all(np.isfinite(v)) or v.min(initial=0.0) < 0.0 or v.max(initial=0.0) > 1.0:
            raise ValueError("posteriors must be finite and lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    @property
    def not_event(self) -> np.ndarray:
        return 1.0 - self.values


@dataclass(frozen=True)
class EventOrdering:
    order: tuple
    centers: Optional[tuple] = None

    def __post_init__(self):
        order = tuple(int(k) for k in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"order is not a permutation: {order}")
        object.__setattr__(self, "order", order)
        if self.centers is not None:
            centers = tuple(float(c) for c in self.centers)
            if len(centers) != len(order):
                raise ValueError("centers must have one entry per event")
            along = [centers[k] for k in order]
            if any(c < 0.0 or c > 1.0 for c in centers):
                raise ValueError("event centers must lie in [0, 1]")
            if any(b < a for a, b in zip(along, along[1:])):
                raise ValueError("event centers must be non-decreasing along the ordering")
            object.__setattr__(self, "centers", centers)

    @property
    def n_events(self) -> int:
        return len(self.order)

    def inverse(self) -> tuple:
        """position[e] = rank of event e in the ordering."""
        pos = [0] * len(self.order)
        for k, e in enumerate(self.order):
            pos[e] = k
        return tuple(pos)


@dataclass(frozen=True)
class GroundTruth:
    true_order: tuple
    rho: tuple
    mu_xi: tuple
    sigma_xi: float
    psi: tuple
    noise_std: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = tuple(int(k) for k in np.argsort(np.asarray(self.mu_xi), kind="stable"))
        if tuple(self.true_order) != expected:
            raise ValueError("true_order must sort mu_xi ascending")

    def to_json_dict(self) -> dict:
        d = {
            "true_order": list(self.true_order),
            "mu_xi": list(self.mu_xi),
            "sigma_xi": self.sigma_xi,
            "rho": list(self.rho),
            "noise_std": self.noise_std,
            "psi": list(self.psi),
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "GroundTruth":
        d = dict(d)
        core = {k: d.pop(k) for k in ("true_order", "mu_xi", "sigma_xi", "rho", "noise_std", "psi")}
        return cls(
            true_order=tuple(core["true_order"]),
            rho=tuple(core["rho"]),
            mu_xi=tuple(core["mu_xi"]),
            sigma_xi=float(core["sigma_xi"]),
            psi=tuple(core["psi"]),
            noise_std=float(core["noise_std"]),
            extra=d,
        )


def validate(ds: BiomarkerDataset) -> list:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    m = len(ds.subject_ids)
    n = len(ds.biomarker_names)
    if m < 2:
        problems.append(f"need at least 2 subjects, got {m}")
    if len(set(ds.subject_ids)) != m:
        problems.append("duplicate subject ids")
    if len(ds.labels) != m:
        problems.append(f"labels has {len(ds.labels)} rows, expected {m}")
    if SubjectLabel.CN not in ds.labels:
        problems.append("no CN subjects")
    if SubjectLabel.DE not in ds.labels:
        problems.append("no DE subjects")
    if ds.tags is not None and len(ds.tags) != m:
        problems.append(f"tags has {len(ds.tags)} rows, expected {m}")
    if n < 1:
        problems.append("need at least one biomarker")
    if ds.scalars.shape != (m, n):
        problems.append(f"scalars has shape {ds.scalars.shape}, expected {(m, n)}")
    elif not np.all(np.isfinite(ds.scalars)):
        r, c = np.argwhere(~np.isfinite(ds.scalars))[0]
        problems.append(f"non-finite value in scalars at ({r},{c})")
    if len(ds.regions) != n:
        problems.append(f"expected {n} region matrices, got {len(ds.regions)}")
    for i, reg in enumerate(ds.regions):
        if reg.ndim != 2 or reg.shape[0] != m:
            problems.append(f"region {i} has shape {reg.shape}, expected {m} rows")
            continue
        if reg.shape[1] < 1:
            problems.append(f"region {i} has no features (D_{i}=0)")
        if not np.all(np.isfinite(reg)):
            r, c = np.argwhere(~np.isfinite(reg))[0]
            problems.append(f"non-finite value in region {i} at ({r},{c})")
        elif reg.size and reg.min() < 0:
            problems.append(f"region {i} has negative features")
    return problems


def check_valid(ds: BiomarkerDataset) -> None:
    problems = validate(ds)
    if problems:
        raise DataValidationError("; ".join(problems))


# -- serialization -----------------------------------------------------------

def _fmt(x: float) -> str:
    # repr of a Python float is the shortest string that round-trips
    return repr(float(x))


def _matrix_csv(ids: Sequence[str], header: Sequence[str], mat: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(["subject_id", *header]) + "\n")
    for sid, row in zip(ids, mat.tolist()):
        buf.write(sid + "," + ",".join(map(_fmt, row)) + "\n")
    return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    """Write text via a temporary file and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(ds: BiomarkerDataset, dir_path, groundtruth: Optional[GroundTruth] = None) -> None:
    check_valid(ds)
    out = Path(dir_path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "regions").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write dataset to {out}: {exc}") from exc

    manifest = {
        "format_version": FORMAT_VERSION,
        "n_subjects": ds.n_subjects,
        "n_biomarkers": ds.n_biomarkers,
        "region_dims": [int(r.shape[1]) for r in ds.regions],
        "biomarker_names": list(ds.biomarker_names),
        "has_tags": ds.tags is not None,
    }
    atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subject_id", "label", "tag"] if ds.tags is not None else ["subject_id", "label"])
    for k, (sid, lab) in enumerate(zip(ds.subject_ids, ds.labels)):
        row = [sid, lab.value]
        if ds.tags is not None:
            row.append(ds.tags[k])
        writer.writerow(row)
    atomic_write_text(out / "labels.csv", buf.getvalue())

    atomic_write_text(out / "scalars.csv", _matrix_csv(ds.subject_ids, ds.biomarker_names, ds.scalars))
    for i, reg in enumerate(ds.regions):
        header = [f"v{d}" for d in range(reg.shape[1])]
        atomic_write_text(out / "regions" / f"region_{i}.csv", _matrix_csv(ds.subject_ids, header, reg))
    if groundtruth is not None:
        atomic_write_text(out / "groundtruth.json", json.dumps(groundtruth.to_json_dict(), indent=2) + "\n")


def _read_matrix(path: Path, ids: Sequence[str], n_cols: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise DataValidationError(f"missing {what} file: {path}")
    df = pd.read_csv(path, dtype={"subject_id": str}, float_precision="round_trip", keep_default_na=True)
    if list(df.columns[:1]) != ["subject_id"]:
        raise DataValidationError(f"{path}: first column must be subject_id")
    if df.shape[1] - 1 != n_cols:
        raise DataValidationError(f"{path}: expected {n_cols} value columns, got {df.shape[1] - 1}")
    if len(df) != len(ids):
        raise DataValidationError(f"{path}: expected {len(ids)} rows, got {len(df)}")
    if list(df["subject_id"]) != list(ids):
        raise DataValidationError(f"{path}: subject_id column does not match labels.csv")
    try:
        mat = df.iloc[:, 1:].to_numpy(dtype=float)
    except ValueError as exc:
        raise DataValidationError(f"{path}: non-numeric value ({exc})") from exc
    bad = np.argwhere(~np.isfinite(mat))
    if len(bad):
        r, c = bad[0]
        raise DataValidationError(f"{path}: non-finite value at ({r},{c})")
    return mat


def load_dataset(dir_path) -> BiomarkerDataset:
    root = Path(dir_path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DataValidationError(f"missing manifest file: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    n = int(manifest["n_biomarkers"])
    dims = [int(d) for d in manifest["region_dims"]]
    names = list(manifest["biomarker_names"])
    if len(dims) != n or len(names) != n:
        raise DataValidationError("manifest: region_dims/biomarker_names length differs from n_biomarkers")

    labels_path = root / "labels.csv"
    if not labels_path.is_file():
        raise DataValidationError(f"missing labels file: {labels_path}")
    with open(labels_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, rows = rows[0], rows[1:]
    if header[:2] != ["subject_id", "label"]:
        raise DataValidationError("labels.csv: header must start with subject_id,label")
    has_tag = len(header) > 2
    ids, labels, tags = [], [], []
    for r in rows:
        try:
            labels.append(SubjectLabel(r[1]))
        except ValueError:
            raise DataValidationError(f"labels.csv: unknown label token {r[1]!r}") from None
        ids.append(r[0])
        tags.append(r[2] if has_tag and len(r) > 2 else "")
    if len(set(ids)) != len(ids):
        raise DataValidationError("labels.csv: duplicate subject id")
    if len(ids) != int(manifest["n_subjects"]):
        raise DataValidationError(f"labels.csv: expected {manifest['n_subjects']} subjects, got {len(ids)}")

    scalars = _read_matrix(root / "scalars.csv", ids, n, "scalars")
    regions = []
    for i, d in enumerate(dims):
        p = root / "regions" / f"region_{i}.csv"
        if not p.is_file():
            raise DataValidationError(f"missing region file: {p}")
        regions.append(_read_matrix(p, ids, d, "region"))
    ds = BiomarkerDataset(
        subject_ids=ids,
        labels=labels,
        scalars=scalars,
        regions=regions,
        biomarker_names=names,
        tags=tags if has_tag else None,
    )
    check_valid(ds)
    return ds


def load_groundtruth(path) -> GroundTruth:
    return GroundTruth.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))
