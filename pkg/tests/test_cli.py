import csv
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ndebm.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from ndebm.datamodel import BiomarkerDataset, SubjectLabel, load_dataset, save_dataset
from ndebm.rng import child_seed
from ndebm.simbiote import DecoderModel, decode, make_decoder, make_latent_model

SMALL = {
    "trajectory": {"n_events": 5, "n_subjects": 150},
    "latent_dim": 6,
    "n_voxels": 24,
}


def write_config(path, sim=None, fit=None):
    cfg = {}
    if sim is not None:
        cfg["simulate"] = sim
    if fit is not None:
        cfg["fit"] = fit
    path.write_text(json.dumps(cfg))
    return str(path)


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = write_config(base / "cfg.json", sim=SMALL)
    assert main(["simulate", "--config", cfg, "--out", str(base / "data"), "--seed", "3"]) == EXIT_OK
    return base / "data"


def test_print_default_config(capsys):
    assert main(["--print-default-config"]) == EXIT_OK
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["simulate"]["trajectory"]["n_events"] == 15
    assert cfg["simulate"]["trajectory"]["n_subjects"] == 1737
    assert set(cfg) == {"simulate", "fit"}


def test_no_command_is_usage_error():
    assert main([]) == EXIT_USAGE


def test_default_scale_simulation(tmp_path):
    # default event and subject counts with a small latent and voxel size to keep it quick
    cfg = write_config(tmp_path / "c.json", sim={"latent_dim": 2, "n_voxels": 3})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "d"), "--seed", "42"]) == EXIT_OK
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["n_biomarkers"] == 15 and manifest["n_subjects"] == 1737


def test_simulate_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json", sim=SMALL)
    for name in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name), "--seed", "7"]) == EXIT_OK
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_bad_fractions(tmp_path, capsys):
    sim = {"trajectory": {"label_fractions": [0.2, 0.5, 0.2]}}
    cfg = write_config(tmp_path / "c.json", sim=sim)
    code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "d")])
    assert code != EXIT_OK
    assert "label fractions must sum to 1" in capsys.readouterr().err
    assert not (tmp_path / "d").exists()


def test_unknown_config_key(tmp_path):
    cfg = write_config(tmp_path / "c.json", sim={"latent_dims": 3})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "d")]) == EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "d")]) == EXIT_USAGE


@pytest.mark.parametrize("method", ["ebm", "debm", "ndebm"])
def test_fit_stage_evaluate(sim_dir, tmp_path, method):
    model = tmp_path / "model.json"
    assert main(["fit", "--method", method, "--data", str(sim_dir), "--out", str(model), "--seed", "1"]) == EXIT_OK
    m = json.loads(model.read_text())
    assert m["method"] == method and sorted(m["ordering"]) == list(range(5))
    assert len(m["posterior_models"]) == 5 and m["seed"] == 1 and "config" in m
    kind = "svm" if method == "ndebm" else "gmm"
    assert all(pm["type"] == kind for pm in m["posterior_models"])

    stages = tmp_path / "stages.csv"
    assert main(["stage", "--model", str(model), "--data", str(sim_dir), "--out", str(stages), "--weights"]) == EXIT_OK
    with open(stages, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 150
    assert list(rows[0]) == ["subject_id", "stage"] + [f"w{k}" for k in range(6)]
    vals = np.array([float(r["stage"]) for r in rows])
    assert np.all((vals >= 0) & (vals <= 1))
    W = np.array([[float(r[f"w{k}"]) for k in range(6)] for r in rows])
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)

    out = tmp_path / "eval"
    assert main(["evaluate", "--model", str(model), "--truth", str(sim_dir / "groundtruth.json"),
                 "--stages", str(stages), "--labels", str(sim_dir), "--out", str(out)]) == EXIT_OK
    with open(out / "metrics.csv", newline="") as fh:
        reader = csv.reader(fh)
        assert next(reader) == ["method", "repeat", "fold", "metric", "value"]
        metrics = {r[3]: float(r[4]) for r in reader}
    assert {"kendall_distance", "auc_de_cn", "auc_converter_proxy"} <= set(metrics)
    assert 0 <= metrics["kendall_distance"] <= 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["method"] == method


def _model_with_order(sim_dir, tmp_path, order):
    model = tmp_path / "m.json"
    assert main(["fit", "--method", "debm", "--data", str(sim_dir), "--out", str(model)]) == EXIT_OK
    m = json.loads(model.read_text())
    m["ordering"] = list(order)
    lam = np.empty(len(order))
    lam[list(order)] = np.arange(1, len(order) + 1) / (len(order) + 1)
    m["centers"] = lam.tolist()
    model.write_text(json.dumps(m))
    return model


def test_evaluate_truth_and_reversed(sim_dir, tmp_path):
    truth = json.loads((sim_dir / "groundtruth.json").read_text())["true_order"]
    for order, expected in ((truth, 0.0), (truth[::-1], 1.0)):
        model = _model_with_order(sim_dir, tmp_path, order)
        out = tmp_path / f"e{expected}"
        assert main(["evaluate", "--model", str(model), "--truth", str(sim_dir / "groundtruth.json"),
                     "--out", str(out)]) == EXIT_OK
        assert json.loads((out / "summary.json").read_text())["kendall_distance"] == expected


def test_evaluate_needs_inputs(tmp_path):
    assert main(["evaluate", "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["evaluate", "--model", "x.json", "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_fit_byte_identical(sim_dir, tmp_path):
    for name in ("a.json", "b.json"):
        assert main(["fit", "--method", "ndebm", "--data", str(sim_dir), "--out", str(tmp_path / name),
                     "--seed", "5"]) == EXIT_OK
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_fit_leaves_inputs_untouched(sim_dir, tmp_path):
    before = tree_bytes(sim_dir)
    assert main(["fit", "--method", "ebm", "--data", str(sim_dir), "--out", str(tmp_path / "m.json")]) == EXIT_OK
    assert tree_bytes(sim_dir) == before


def test_ebm_without_scalars(sim_dir, tmp_path, capsys):
    broken = tmp_path / "noscalars"
    save_dataset(load_dataset(sim_dir), broken)
    (broken / "scalars.csv").unlink()
    code = main(["fit", "--method", "ebm", "--data", str(broken), "--out", str(tmp_path / "m.json")])
    assert code == EXIT_DATA
    assert "scalars" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_nan_data_is_data_error(sim_dir, tmp_path):
    broken = tmp_path / "nan"
    save_dataset(load_dataset(sim_dir), broken)
    text = (broken / "scalars.csv").read_text().splitlines()
    cells = text[1].split(",")
    cells[1] = "nan"
    text[1] = ",".join(cells)
    (broken / "scalars.csv").write_text("\n".join(text) + "\n")
    assert main(["fit", "--method", "debm", "--data", str(broken), "--out", str(tmp_path / "m.json")]) == EXIT_DATA


def test_unknown_method_is_usage_error(sim_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--method", "mcmc", "--data", str(sim_dir), "--out", str(tmp_path / "m.json")])
    assert exc.value.code == EXIT_USAGE


def test_all_normal_subject_stages_near_zero(tmp_path):
    cfg = write_config(tmp_path / "c.json", sim=SMALL)
    data = tmp_path / "data"
    assert main(["simulate", "--config", cfg, "--out", str(data), "--seed", "8"]) == EXIT_OK
    ds = load_dataset(data)
    # a subject sitting exactly on the CN origin of every region, decoded without noise
    extra = []
    for i in range(ds.n_biomarkers):
        lat = make_latent_model(child_seed(8, "region", i), 6, 4.0, 3.0)
        dec = make_decoder(child_seed(8, "region", i), 6, 24, 0.1)
        extra.append(decode(lat.origin, DecoderModel(dec.W, dec.b, 0.0)))
    aug = BiomarkerDataset(
        subject_ids=list(ds.subject_ids) + ["normal"],
        labels=list(ds.labels) + [SubjectLabel.CN],
        scalars=np.vstack([ds.scalars, [r.sum() for r in extra]]),
        regions=[np.vstack([r, e]) for r, e in zip(ds.regions, extra)],
        biomarker_names=ds.biomarker_names,
    )
    save_dataset(aug, tmp_path / "aug")
    assert main(["fit", "--method", "ndebm", "--data", str(data), "--out", str(tmp_path / "m.json")]) == EXIT_OK
    assert main(["stage", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "aug"),
                 "--out", str(tmp_path / "s.csv")]) == EXIT_OK
    with open(tmp_path / "s.csv", newline="") as fh:
        stage = {r["subject_id"]: float(r["stage"]) for r in csv.DictReader(fh)}
    assert stage["normal"] < 0.1


def test_crossval_smoke(sim_dir, tmp_path):
    start = time.perf_counter()
    for name in ("a", "b"):
        assert main(["crossval", "--method", "ndebm", "--data", str(sim_dir), "--folds", "2", "--repeats", "1",
                     "--seed", "2", "--out", str(tmp_path / name)]) == EXIT_OK
    assert time.perf_counter() - start < 60
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    with open(tmp_path / "a" / "metrics.csv", newline="") as fh:
        reader = csv.reader(fh)
        assert next(reader) == ["method", "repeat", "fold", "metric", "value"]
        rows = list(reader)
    assert any(r[2] == "all" and r[3] == "auc_de_cn" for r in rows)


def test_bootstrap_single_sample(sim_dir, tmp_path):
    out = tmp_path / "b"
    assert main(["bootstrap", "--method", "ndebm", "--data", str(sim_dir), "--n", "1", "--out", str(out)]) == EXIT_OK
    with open(out / "centers.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5 and all(float(r["std"]) == 0.0 for r in rows)
    assert main(["bootstrap", "--method", "ebm", "--data", str(sim_dir), "--n", "1",
                 "--out", str(tmp_path / "x")]) == EXIT_USAGE


def test_bootstrap_deterministic(sim_dir, tmp_path):
    for name in ("a", "b"):
        assert main(["bootstrap", "--method", "debm", "--data", str(sim_dir), "--n", "3", "--seed", "4",
                     "--out", str(tmp_path / name)]) == EXIT_OK
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "ndebm", "--print-default-config"],
                          capture_output=True, text=True, env=env, timeout=120)
    assert proc.returncode == 0
    assert "simulate" in json.loads(proc.stdout)
