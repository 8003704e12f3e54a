"""Command-line interface: simulate, fit, stage, evaluate, bootstrap, crossval."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .datamodel import DataValidationError, SubjectLabel, atomic_write_text, load_dataset, load_groundtruth, save_dataset
from .evaluation import auc, bootstrap_event_centers, crossval, kendall_distance_normalized
from .pipeline import METHODS, FitConfig, FittedModel, fit_model
from .simbiote import SimulationConfig, simulate_dataset
from .staging import stage_weight_matrix, CLAMP

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("ndebm")


class UsageError(Exception):
    pass


def default_config() -> dict:
    return {"simulate": SimulationConfig().to_json_dict(), "fit": FitConfig().to_json_dict()}


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON in {path}: {exc}") from None


def _sim_config(path) -> SimulationConfig:
    if path is None:
        return SimulationConfig()
    d = _read_json(path)
    d = d.get("simulate", d)
    try:
        cfg = SimulationConfig.from_json_dict(d)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _fit_config(path) -> FitConfig:
    if path is None:
        return FitConfig()
    d = _read_json(path)
    d = d.get("fit", d)
    try:
        cfg = FitConfig.from_json_dict(d)
        cfg.ssvm.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "repeat", "fold", "metric", "value"])
    for method, repeat, fold, metric, value in rows:
        w.writerow([method, repeat, fold, metric, repr(float(value))])
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- commands ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _sim_config(args.config)
    ds, truth = simulate_dataset(cfg, args.seed)
    save_dataset(ds, args.out, groundtruth=truth)
    print(f"wrote {ds.n_subjects} subjects x {ds.n_biomarkers} regions to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _fit_config(args.config)
    ds = load_dataset(args.data)
    model = fit_model(ds, args.method, cfg, seed=args.seed)
    atomic_write_text(args.out, model.dumps())
    print(f"{args.method} ordering: {' '.join(ds.biomarker_names[k] for k in model.ordering.order)}")
    return EXIT_OK


def _load_model(path) -> FittedModel:
    try:
        return FittedModel.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise UsageError(f"model file not found: {path}") from None
    except (KeyError, ValueError) as exc:
        raise DataValidationError(f"invalid model file {path}: {exc}") from None


def cmd_stage(args) -> int:
    model = _load_model(args.model)
    ds = load_dataset(args.data)
    P = model.posteriors(ds)
    stages = model.stages(ds)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = ds.n_biomarkers
    header = ["subject_id", "stage"]
    if args.weights:
        header += [f"w{k}" for k in range(n + 1)]
        W = stage_weight_matrix(model.ordering, P, clamp=CLAMP)
        W = W / W.sum(axis=1, keepdims=True)
    w.writerow(header)
    for j, sid in enumerate(ds.subject_ids):
        row = [sid, repr(float(stages[j]))]
        if args.weights:
            row += [repr(float(v)) for v in W[j]]
        w.writerow(row)
    atomic_write_text(args.out, buf.getvalue())
    return EXIT_OK


def _read_stages(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "subject_id" not in rows[0] or "stage" not in rows[0]:
        raise DataValidationError(f"{path}: expected columns subject_id,stage")
    return {r["subject_id"]: float(r["stage"]) for r in rows}


def _read_labels(path) -> tuple:
    path = Path(path)
    if path.is_dir():
        path = path / "labels.csv"
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    labels, tags = {}, {}
    for r in rows:
        try:
            labels[r["subject_id"]] = SubjectLabel(r["label"])
        except ValueError:
            raise DataValidationError(f"{path}: unknown label token {r['label']!r}") from None
        if r.get("tag"):
            tags[r["subject_id"]] = r["tag"]
    return labels, tags


def cmd_evaluate(args) -> int:
    rows, summary = [], {}
    if args.model:
        if not args.truth:
            raise UsageError("--model requires --truth")
        model = _load_model(args.model)
        truth = load_groundtruth(args.truth)
        d = kendall_distance_normalized(model.ordering.order, truth.true_order)
        rows.append((model.method, "", "", "kendall_distance", d))
        summary.update(method=model.method, kendall_distance=d,
                       ordering=list(model.ordering.order), true_order=list(truth.true_order))
    if args.stages:
        if not args.labels:
            raise UsageError("--stages requires --labels")
        stages = _read_stages(args.stages)
        labels, tags = _read_labels(args.labels)
        ids = [s for s in stages if s in labels]
        method = summary.get("method", args.method)
        y = [labels[s] for s in ids]
        keep = [k for k, l in enumerate(y) if l in (SubjectLabel.CN, SubjectLabel.DE)]
        if keep:
            yy = np.array([y[k] is SubjectLabel.DE for k in keep])
            if yy.any() and not yy.all():
                a = auc([stages[ids[k]] for k in keep], yy)
                rows.append((method, "", "", "auc_de_cn", a))
                summary["auc_de_cn"] = a
        conv = [s for s in ids if tags.get(s) in ("converter", "nonconverter")]
        yc = np.array([tags[s] == "converter" for s in conv])
        if yc.size and yc.any() and not yc.all():
            a = auc([stages[s] for s in conv], yc)
            rows.append((method, "", "", "auc_converter_proxy", a))
            summary["auc_converter_proxy"] = a
    if not args.model and not args.stages:
        raise UsageError("evaluate needs --model/--truth or --stages/--labels")
    out = Path(args.out)
    atomic_write_text(out / "metrics.csv", _metrics_csv(rows))
    atomic_write_text(out / "summary.json", _dump(summary))
    for r in rows:
        print(f"{r[3]}: {r[4]:.6f}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    cfg = _fit_config(args.config)
    ds = load_dataset(args.data)
    res = crossval(ds, args.method, folds=args.folds, repeats=args.repeats, seed=args.seed, cfg=cfg)
    out = Path(args.out)
    atomic_write_text(out / "metrics.csv", _metrics_csv(res.rows))
    summary = res.summary()
    summary["seed"] = args.seed
    atomic_write_text(out / "summary.json", _dump(summary))
    if summary["auc_de_cn"]:
        print(f"{args.method} DE-vs-CN AUC: {summary['auc_de_cn']['mean']:.4f} +/- {summary['auc_de_cn']['std']:.4f}")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    cfg = _fit_config(args.config)
    ds = load_dataset(args.data)
    if args.method == "ebm":
        raise UsageError("bootstrap of event centers is only defined for debm and ndebm")
    res = bootstrap_event_centers(ds, args.method, B=args.n, seed=args.seed, cfg=cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["position", "event", "name", "mean", "std"])
    mean, std = res.mean, res.std
    for pos, e in enumerate(res.display_order):
        w.writerow([pos, e, ds.biomarker_names[e], repr(float(mean[e])), repr(float(std[e]))])
    out = Path(args.out)
    atomic_write_text(out / "centers.csv", buf.getvalue())
    sbuf = io.StringIO()
    sw = csv.writer(sbuf, lineterminator="\n")
    sw.writerow(["sample", *ds.biomarker_names])
    for b, row in enumerate(res.samples):
        sw.writerow([b, *map(repr, row.tolist())])
    atomic_write_text(out / "samples.csv", sbuf.getvalue())
    atomic_write_text(out / "summary.json", _dump({
        "method": args.method, "n": args.n, "seed": args.seed,
        "display_order": list(res.display_order),
        "mean": mean.tolist(), "std": std.tolist(),
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ndebm", description=__doc__)
    p.add_argument("--print-default-config", action="store_true", help="print default JSON config and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("simulate", help="simulate a dataset with known ground truth")
    s.add_argument("--config", help="JSON config (the 'simulate' section of --print-default-config)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit an event ordering")
    f.add_argument("--method", choices=METHODS, required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--config")
    f.set_defaults(func=cmd_fit)

    st = sub.add_parser("stage", help="stage subjects with a fitted model")
    st.add_argument("--model", required=True)
    st.add_argument("--data", required=True)
    st.add_argument("--out", required=True)
    st.add_argument("--weights", action="store_true", help="also write the N+1 normalized stage weights")
    st.set_defaults(func=cmd_stage)

    e = sub.add_parser("evaluate", help="compare against ground truth or labels")
    e.add_argument("--model")
    e.add_argument("--truth")
    e.add_argument("--stages")
    e.add_argument("--labels", help="labels.csv or a dataset directory")
    e.add_argument("--method", default="", help="method name recorded with stage-based metrics")
    e.add_argument("--out", required=True, help="output directory for metrics.csv and summary.json")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bootstrap", help="bootstrap uncertainty of event centers")
    b.add_argument("--method", choices=METHODS, required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--n", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--config")
    b.set_defaults(func=cmd_bootstrap)

    c = sub.add_parser("crossval", help="repeated stratified k-fold staging AUC")
    c.add_argument("--method", choices=METHODS, required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--folds", type=int, default=10)
    c.add_argument("--repeats", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--config")
    c.set_defaults(func=cmd_crossval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_default_config:
        sys.stdout.write(_dump(default_config()))
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
