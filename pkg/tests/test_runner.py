import csv
import hashlib
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tworay_pm.config import parse_config
from tworay_pm.errors import StageError
from tworay_pm.main import build_parser, main
from tworay_pm.runner import PATTERN_COLUMNS, run_command, run_full_study, run_pattern_sweep

SMALL = """\
ring_step_deg = 30
N = 6
grid_points = 21
grid_aperture = 10
trials = 400
desired_trials = 400
eval_radii = [8.4]
concordance_instances = 5
"""


def small_config(extra=""):
    return parse_config(SMALL + extra)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def test_no_stages_writes_only_the_echo_and_report(tmp_path):
    config = small_config(
        "stage_ula = false\nstage_sparse = false\nstage_patterns = false\n"
        "stage_ber = false\nstage_los = false\nstage_concordance = false\n"
    )
    report = run_full_study(config, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["config.echo.toml", "report.json"]
    assert report.summary == []
    assert [e.path for e in report.manifest] == ["config.echo.toml", "report.json"]


def test_pattern_rows(qpsk):
    rows = run_pattern_sweep(small_config())
    assert len(rows) == 4 + 12 * 4
    desired = [row for row in rows if row[0] == "desired"]
    assert [row[4] for row in desired] == list(qpsk.bit_labels)
    assert_allclose([row[5] for row in desired], 0.0, atol=1e-6)
    assert_allclose([row[6] for row in desired], [45.0, 135.0, -135.0, -45.0], atol=1e-6)
    ring = [row for row in rows if row[0] == "eavesdropper"]
    assert {row[1] for row in ring} == {8.4}
    assert sorted({row[2] for row in ring}) == [30.0 * k for k in range(12)]
    assert len(PATTERN_COLUMNS) == len(rows[0])


def test_design_ula_artifacts(tmp_path):
    report = run_command("design-ula", small_config(), tmp_path)
    names = {e.path for e in report.manifest}
    assert names == {"config.echo.toml", "ula_weights.csv", "ula_symbol_errors.csv", "summary.csv", "report.json"}
    listed = {e.path: e for e in report.manifest}
    assert listed["report.json"].sha256 is None and listed["report.json"].size is None

    for entry in report.manifest:
        if entry.path == "report.json":
            continue
        data = (tmp_path / entry.path).read_bytes()
        assert b"\r\n" not in data
        assert hashlib.sha256(data).hexdigest() == entry.sha256
        assert len(data) == entry.size

    weights = read_rows(tmp_path / "ula_weights.csv")
    assert weights[0] == ["antenna", "offset", "symbol", "real", "imag", "magnitude"]
    assert len(weights) == 1 + 6 * 4

    errors = read_rows(tmp_path / "ula_symbol_errors.csv")
    assert errors[0] == ["symbol", "bits", "error_norm", "solve_path", "numerical_rank", "rcond", "objective_excess"]
    assert len(errors) == 1 + 4

    summary = read_rows(tmp_path / "summary.csv")
    assert summary[1][:4] == ["ula", "6", "2.5", "0.5"]
    assert summary[1][5] == "NA"

    saved = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert saved["command"] == "design-ula"
    assert [e["path"] for e in saved["manifest"]][-1] == "report.json"
    assert saved["rng"]["seed"] == 0
    assert "ula" in saved["timings"]


def test_rerun_from_the_echo_reproduces_every_file(tmp_path):
    first = run_command("design-ula", small_config("seed = 7\n"), tmp_path / "a")
    echo = (tmp_path / "a" / "config.echo.toml").read_text(encoding="utf-8")
    second = run_command("design-ula", parse_config(echo), tmp_path / "b")
    assert {e.path: e.sha256 for e in first.manifest} == {e.path: e.sha256 for e in second.manifest}


def test_ber_command(tmp_path):
    run_command("ber", small_config(), tmp_path)
    rows = read_rows(tmp_path / "ber.csv")
    assert rows[0] == ["radius", "eta_deg", "trials", "bit_errors", "ber", "ci_halfwidth", "channel_mode"]
    assert len(rows) == 1 + 1 + 12
    assert rows[1][:3] == ["0", "0", "400"]
    assert all(row[6] == "two-ray" for row in rows[1:])


def test_infeasible_sparse_stage_keeps_partial_manifest(tmp_path):
    config = small_config(
        'mode = "sparse"\nalpha_mode = "fixed"\nalpha = 0.001\ngrid_points = 3\ngrid_aperture = 2\n'
        "stage_ula = false\n"
    )
    with pytest.raises(StageError) as info:
        run_full_study(config, tmp_path)
    assert info.value.stage == "sparse"
    assert info.value.exit_code == 4
    assert [e.path for e in info.value.manifest] == ["config.echo.toml", "report.json"]
    assert (tmp_path / "report.json").exists()


@pytest.mark.slow
def test_small_study_writes_every_stage(tmp_path):
    report = run_full_study(small_config('mode = "sparse"\n'), tmp_path)
    names = {e.path for e in report.manifest}
    assert {"ula_weights.csv", "usual-l1_weights.csv", "reweighted_weights.csv", "sparse_trace.csv",
            "group_norms.csv", "summary.csv", "patterns.csv", "ber.csv", "ber_los_redesign.csv",
            "ber_los_reuse.csv", "concordance.csv"} <= names
    labels = [row["label"] for row in report.summary]
    assert labels == ["ula", "usual-l1", "reweighted"]
    assert report.notes["printed_formula"]["instances"] == 5
    assert np.isfinite(report.notes["desired_ber"]["los-redesign"])


def test_parser_commands():
    args = build_parser().parse_args(["study", "--seed", "3", "-vv"])
    assert (args.command, args.seed, args.verbose, args.out) == ("study", 3, 2, "out")
    with pytest.raises(SystemExit):
        build_parser().parse_args(["thin"])


def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "small.toml"
    good.write_text(SMALL, encoding="utf-8")
    assert main(["design-ula", "--config", str(good), "--out", str(tmp_path / "out")]) == 0
    assert "wrote 5 files" in capsys.readouterr().out

    bad = tmp_path / "bad.toml"
    bad.write_text("ring_step_deg = 0\n", encoding="utf-8")
    assert main(["design-ula", "--config", str(bad), "--out", str(tmp_path / "bad")]) == 2
