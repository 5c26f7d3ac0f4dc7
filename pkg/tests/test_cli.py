import csv
import json
import logging
import subprocess
import sys

import numpy as np
import pytest

from icrloss import cli, gradcheck
from icrloss.annotations import SyntheticSpec, compute_stats, generate_synthetic


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _manifest(out):
    return json.loads((out / cli.MANIFEST_NAME).read_text())


def _trajectory(out, name):
    return json.loads((out / f"{name}.json").read_text())


# -- simulate ----------------------------------------------------------------------


def test_simulate_canonical_arms(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("simulate", "--loss", "ciou", "--scenario", "canonical", "--out", a) == 0
    assert _run("simulate", "--loss", "ciou", "--icr", "--delta", "2.5", "--scenario", "canonical", "--out", b) == 0
    base = _trajectory(a, "canonical-ciou-base-0")
    icr = _trajectory(b, "canonical-ciou-icr-0")
    assert 50 <= base["converged_at"] <= 100
    assert icr["converged_at"] < base["converged_at"]
    assert sorted(p.name for p in a.glob("canonical-*")) == [
        "canonical-ciou-base-0.csv",
        "canonical-ciou-base-0.json",
    ]


def test_simulate_flags_flat_iou(tmp_path, capsys):
    assert _run("simulate", "--loss", "iou", "--scenario", "disjoint-far", "--out", tmp_path, "--format", "json") == 0
    report = json.loads(capsys.readouterr().out)
    (row,) = report["runs"]
    assert row["flat_loss"] and row["converged_at"] is None


def test_simulate_text_mentions_flat_loss(tmp_path, capsys):
    _run("simulate", "--loss", "iou", "--scenario", "disjoint-far", "--out", tmp_path)
    assert "flat loss" in capsys.readouterr().out


def test_simulate_seed_suite(tmp_path):
    assert _run("simulate", "--icr", "--seeds", "3", "--seed", "10", "--out", tmp_path) == 0
    names = sorted(p.stem for p in tmp_path.glob("*.csv"))
    assert names == [f"canonical-ciou-icr-{s}" for s in (10, 11, 12)]


@pytest.mark.parametrize(
    "argv, code, flag",
    [
        (["simulate", "--loss", "siou"], 2, "--loss"),
        (["simulate", "--seeds", "0"], 2, "--seeds"),
        (["simulate", "--delta", "2.5"], 2, "--delta"),
        (["simulate", "--icr", "--delta", "nan"], 2, "--delta"),
        (["simulate", "--icr", "--delta", "-1"], 3, "--delta"),
        (["simulate", "--scenario", "nowhere"], 3, "--scenario"),
        (["simulate", "--step-size", "-2"], 3, "step_size"),
        (["landscape", "--grid", "1"], 3, "--grid"),
        (["sweep", "--deltas", ""], 2, "--deltas"),
        (["sweep", "--deltas", "1,oops"], 2, "--deltas"),
        (["sweep", "--deltas", "1,-2"], 3, "--deltas"),
        (["gradcheck", "--all", "--samples", "0"], 2, "--samples"),
        (["gradcheck"], 2, "--loss"),
        (["dataset", "stats", "--manifest", "missing.csv"], 2, "--manifest"),
        (["dataset", "synth", "--violation-rate", "1.5"], 3, "--violation-rate"),
        (["frobnicate"], 2, "frobnicate"),
    ],
)
def test_exit_codes_and_messages(tmp_path, monkeypatch, capsys, argv, code, flag):
    monkeypatch.chdir(tmp_path)
    assert _run(*argv, *([] if argv == ["frobnicate"] else ["--out", tmp_path / "o"])) == code
    assert flag in capsys.readouterr().err


def test_manifest_hash_is_stable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        _run("simulate", "--icr", "--seeds", "2", "--out", out)
    ma, mb = _manifest(a), _manifest(b)
    assert ma["config_hash"] == mb["config_hash"]
    assert ma["command"] == "simulate" and ma["tool_version"] == cli.__version__
    assert all((a / p).is_file() for p in ma["outputs"])
    _run("simulate", "--icr", "--delta", "2.0", "--seeds", "2", "--out", tmp_path / "c")
    assert _manifest(tmp_path / "c")["config_hash"] != ma["config_hash"]


def test_scenario_file_hash_follows_content(tmp_path):
    d = dict(cli.simulate.SCENARIOS["canonical"])
    for name in ("x", "y"):
        (tmp_path / name).mkdir()
        (tmp_path / name / "s.json").write_text(json.dumps(d))
        _run("simulate", "--scenario", tmp_path / name / "s.json", "--out", tmp_path / name / "out")
    assert _manifest(tmp_path / "x" / "out")["config_hash"] == _manifest(tmp_path / "y" / "out")["config_hash"]


def test_env_default_and_nothing_outside_out(tmp_path, monkeypatch):
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert _run("simulate") == 0
    assert list(work.iterdir()) == []
    assert (tmp_path / "envout" / cli.MANIFEST_NAME).is_file()
    monkeypatch.delenv(cli.OUT_ENV)
    assert _run("gradcheck", "--loss", "iou", "--samples", "5") == 0
    assert [p.name for p in work.iterdir()] == [cli.DEFAULT_OUT]


# -- landscape ----------------------------------------------------------------------


def test_landscape_pair(tmp_path, capsys):
    assert _run("landscape", "--both", "--grid", "21", "--out", tmp_path, "--format", "json") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["comparison"]["argmin_agrees"] and report["comparison"]["dominates"]
    outputs = _manifest(tmp_path)["outputs"]
    assert "canonical-ciou-compare.json" in outputs
    assert "canonical-ciou-icr-grid21-values.csv" in outputs


def test_landscape_minimal_grid(tmp_path):
    assert _run("landscape", "--grid", "2", "--out", tmp_path) == 0
    rows = list(csv.reader((tmp_path / "canonical-ciou-base-grid2-values.csv").open()))
    assert len(rows) == 4  # spec comment, header, two rows


def test_landscape_compare_files(tmp_path):
    _run("landscape", "--both", "--grid", "11", "--out", tmp_path / "g")
    _run("landscape", "--grid", "5", "--out", tmp_path / "h")
    base = tmp_path / "g" / "canonical-ciou-base-grid11.json"
    icr = tmp_path / "g" / "canonical-ciou-icr-grid11.json"
    other = tmp_path / "h" / "canonical-ciou-base-grid5.json"
    assert _run("landscape", "--compare", base, icr, "--out", tmp_path / "c1") == 0
    assert json.loads((tmp_path / "c1" / "compare.json").read_text())["argmin_agrees"]
    assert _run("landscape", "--compare", base, other, "--out", tmp_path / "c2") == 3
    assert _run("landscape", "--compare", base, tmp_path / "nope.json", "--out", tmp_path / "c3") == 2


# -- sweep ------------------------------------------------------------------------


def _sweep_rows(out):
    (path,) = out.glob("*-sweep.csv")
    return list(csv.DictReader(path.open()))


def test_sweep_default_grid(tmp_path):
    assert _run("sweep", "--seeds", "3", "--out", tmp_path) == 0
    rows = _sweep_rows(tmp_path)
    assert [float(r["delta"]) for r in rows] == [1.0 + 0.25 * k for k in range(9)]


def test_sweep_control_row(tmp_path, capsys):
    assert _run("sweep", "--deltas", "0", "--seeds", "10", "--out", tmp_path, "--format", "json") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["control_matches_base"] is True
    assert report["rows"][0]["median_converged_at"] == report["base"]["median_converged_at"]


def test_sweep_dedup_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING, logger="icrloss"):
        assert _run("sweep", "--deltas", "2.5,1,2.5,1", "--seeds", "2", "--out", tmp_path) == 0
    assert "duplicate" in caplog.text
    assert [float(r["delta"]) for r in _sweep_rows(tmp_path)] == [2.5, 1.0]


# -- gradcheck --------------------------------------------------------------------


def test_gradcheck_passes(tmp_path, capsys):
    assert _run("gradcheck", "--all", "--samples", "100", "--tol", "1e-4", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "0 failures" in out and "worst:" in out
    report = json.loads((tmp_path / "gradcheck.json").read_text())
    assert report["n_checks"] == 100 * 4 * 2


def test_gradcheck_catches_injected_bug(tmp_path, monkeypatch, capsys):
    real = gradcheck.loss_grad

    def buggy(kind, pred, gt):
        e = real(kind, pred, gt)
        e.grad = e.grad * np.array([1.0, 1.0, 1.01, 1.0])
        return e

    monkeypatch.setattr(gradcheck, "loss_grad", buggy)
    assert _run("gradcheck", "--loss", "ciou", "--samples", "20", "--out", tmp_path) == 1
    out = capsys.readouterr().out
    assert "first failure" in out and '"pred"' in out
    assert json.loads((tmp_path / "gradcheck.json").read_text())["n_failures"] > 0


# -- dataset ------------------------------------------------------------------------


def test_synth_then_stats(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    argv = ["--images", "12", "--plates", "1", "4", "--seed", "3", "--image-size", "1920x1080", "--image-size", "1280x720"]
    assert _run("dataset", "synth", *argv, "--out", corpus) == 0
    capsys.readouterr()
    assert _run("dataset", "stats", "--manifest", corpus / "manifest.csv", "--out", tmp_path / "s", "--format", "json") == 0
    got = json.loads(capsys.readouterr().out)
    spec = SyntheticSpec(n_images=12, plates_per_image=(1, 4), image_sizes=((1920, 1080), (1280, 720)), seed=3)
    assert got == compute_stats(generate_synthetic(spec)).to_dict()


def test_stats_prints_table(tmp_path, capsys):
    _run("dataset", "synth", "--images", "3", "--out", tmp_path / "c")
    capsys.readouterr()
    _run("dataset", "stats", "--manifest", tmp_path / "c" / "manifest.csv", "--out", tmp_path / "s")
    assert "Min. absolute / relative plate area" in capsys.readouterr().out


def test_empty_manifest(tmp_path):
    (tmp_path / "m.csv").write_text("image_id,width,height,label_path\n")
    assert _run("dataset", "stats", "--manifest", tmp_path / "m.csv", "--out", tmp_path / "o") == 2
    assert _run("dataset", "validate", "--manifest", tmp_path / "m.csv", "--out", tmp_path / "o") == 2


def test_validate_reports_violations(tmp_path, capsys):
    corpus = tmp_path / "c"
    _run("dataset", "synth", "--images", "30", "--violation-rate", "0.2", "--seed", "1", "--out", corpus)
    capsys.readouterr()
    assert _run("dataset", "validate", "--manifest", corpus / "manifest.csv", "--out", tmp_path / "v", "--format", "json") == 0
    report = json.loads(capsys.readouterr().out)
    stats = json.loads((corpus / "stats.json").read_text())
    assert len(report["warnings"]) == stats["containment_violations"] > 0
    assert report["errors"] == []


def test_validate_parse_error_exits_1(tmp_path, capsys):
    corpus = tmp_path / "c"
    _run("dataset", "synth", "--images", "3", "--out", corpus)
    (corpus / "labels" / "synth_00001.txt").write_text("1 .5 .5 .1 .1\n0 .5 .5 .01 .01\n")
    capsys.readouterr()
    assert _run("dataset", "validate", "--manifest", corpus / "manifest.csv", "--out", tmp_path / "v") == 1
    assert "line 1: out-of-order" in capsys.readouterr().out
    assert _run("dataset", "stats", "--manifest", corpus / "manifest.csv", "--out", tmp_path / "s") == 1


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "icrloss.cli", "--version"], capture_output=True, text=True, check=False
    )
    assert r.returncode == 0 and cli.__version__ in r.stdout
