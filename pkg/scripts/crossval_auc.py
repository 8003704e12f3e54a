#!/usr/bin/env python3
"""Repeated stratified k-fold staging AUC (DE vs CN, and the converter proxy) per method.

A dataset directory can be given with --data; otherwise the desk-scale
simulation for --seed is generated in memory. Fold-level and pooled AUCs go
to a metrics CSV with the same schema as ``ndebm crossval``.

    python scripts/crossval_auc.py --folds 10 --repeats 10 --out results/cv.csv
"""
from __future__ import annotations

import argparse
import csv
import io
from dataclasses import dataclass

from ndebm.datamodel import atomic_write_text, load_dataset
from ndebm.evaluation import crossval
from ndebm.pipeline import METHODS
from ndebm.simbiote import desk_config, simulate_dataset


@dataclass(frozen=True)
class CrossvalExperiment:
    data: str = ""
    seed: int = 0
    folds: int = 10
    repeats: int = 10
    methods: tuple = METHODS
    out: str = "crossval_auc.csv"


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    d = CrossvalExperiment()
    p.add_argument("--data", default=d.data, help="dataset directory (default: simulate)")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--folds", type=int, default=d.folds)
    p.add_argument("--repeats", type=int, default=d.repeats)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(d.methods))
    p.add_argument("--out", default=d.out)
    a = p.parse_args()
    cfg = CrossvalExperiment(a.data, a.seed, a.folds, a.repeats, tuple(a.methods), a.out)

    ds = load_dataset(cfg.data) if cfg.data else simulate_dataset(desk_config(), cfg.seed)[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "repeat", "fold", "metric", "value"])
    for method in cfg.methods:
        res = crossval(ds, method, folds=cfg.folds, repeats=cfg.repeats, seed=cfg.seed)
        w.writerows(res.rows)
        s = res.summary()
        line = f"{method:>6}: DE-vs-CN AUC {s['auc_de_cn']['mean']:.4f} +/- {s['auc_de_cn']['std']:.4f}"
        if s["auc_converter"]:
            line += f"; converter proxy AUC {s['auc_converter']['mean']:.4f} +/- {s['auc_converter']['std']:.4f}"
        print(line)
        for msg in res.warnings:
            print(f"  warning: {msg}")
    atomic_write_text(cfg.out, buf.getvalue())


if __name__ == "__main__":
    main()
