import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hermiflow import cli
from hermiflow import landscape as ls
from hermiflow.errors import UnknownScenario


def test_gallery_names_complete():
    for name in cli.GALLERY_NAMES:
        t = cli.gallery(name)
        assert t.q in (1, 2, 4)


def test_gallery_cascade_example():
    t = cli.gallery("cascade_example")
    assert t.kind == "coeffs"
    assert t.q == 4
    assert set(t.f.coeffs) == {
        (2, 0, 0, 0),
        (0, 4, 0, 0),
        (6, 0, 1, 0),
        (3, 0, 5, 3),
    }


def test_gallery_recombination():
    t = cli.gallery("recombination")
    from hermiflow import structure as st

    rep = st.leap_decomposition(t.f)
    assert rep.fine_exponents == [1, 2]


def test_gallery_bad_subspace():
    t = cli.gallery("bad_subspace", s=512)
    assert t.kind == "ridge"
    assert len(t.ridge_Z) == 8
    assert t.ridge_s == 512


def test_gallery_planted_failure_parameters():
    t = cli.gallery("planted_failure")
    assert t.kind == "mixed"
    s = t.ridge_s
    assert s % 2 == 0
    assert np.cos(np.pi / 50.0) ** s <= 1.0 / 250.0
    assert 0 < t.eps < 1e-3


def test_gallery_unknown():
    with pytest.raises(UnknownScenario):
        cli.gallery("nope")


def test_failure_degree():
    N = 5
    s = cli.failure_degree(N)
    assert s % 2 == 0
    assert np.cos(np.pi / (10 * N)) ** s <= 1 / (10 * N**2)
    assert np.cos(np.pi / (10 * N)) ** (s - 2) > 1 / (10 * N**2)


def test_build_target_coeffs():
    t = cli.build_target(
        {"kind": "coeffs", "q": 2, "terms": [[[2, 0], 1.0], [[0, 3], 1.0]]}
    )
    assert t.q == 2
    assert t.f.coeffs[(0, 3)] == 1.0


def _tiny_config(tmp_path, **overrides):
    config = {
        "scenario": "timescale",
        "target": {"kind": "coeffs", "q": 2, "terms": [[[2, 0], 1.0], [[0, 3], 1.0]]},
        "model": "grassmann",
        "dims": [8, 12],
        "seeds": 2,
        "base_seed": 3,
        "flow": {"t_max": 30.0, "eta": 0.25},
        "output_dir": str(tmp_path / "out"),
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path, config


def test_run_writes_outputs(tmp_path):
    path, config = _tiny_config(tmp_path)
    assert cli.run(str(path), workers=1) == 0
    out = tmp_path / "out"
    names = sorted(os.listdir(out))
    assert "cascade.json" in names
    assert "escapes.json" in names
    assert "results.json" in names
    assert "trace_d8_s3.csv" in names
    assert "trace_d12_s4.csv" in names
    text = (out / "trace_d8_s3.csv").read_text()
    assert text.startswith("# config_hash=")
    assert "seed=3" in text.splitlines()[0] or "seed=3" in text.splitlines()[1]
    esc = json.loads((out / "escapes.json").read_text())
    assert "escapes" in esc and esc["eta"] == 0.25


def test_run_reproducible_byte_identical(tmp_path):
    path, _ = _tiny_config(tmp_path)
    assert cli.run(str(path), workers=1) == 0
    first = (tmp_path / "out" / "trace_d8_s3.csv").read_bytes()
    assert cli.run(str(path), workers=1) == 0
    second = (tmp_path / "out" / "trace_d8_s3.csv").read_bytes()
    assert first == second


def test_run_parallel_matches_serial(tmp_path):
    path, _ = _tiny_config(tmp_path)
    assert cli.run(str(path), workers=1) == 0
    serial = (tmp_path / "out" / "trace_d12_s4.csv").read_bytes()
    assert cli.run(str(path), workers=2) == 0
    parallel = (tmp_path / "out" / "trace_d12_s4.csv").read_bytes()
    assert serial == parallel


def test_run_bad_config_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert cli.run(str(path)) == 2
    path.write_text(json.dumps({"target": {"kind": "gallery", "name": "two_stage"}, "dims": [16, 8]}))
    assert cli.run(str(path)) == 2


def test_cli_entry_points(tmp_path):
    assert cli.main(["gallery", "--list"]) == 0
    assert cli.main(["check"]) == 0
    path, _ = _tiny_config(tmp_path)
    assert cli.main(["run", str(path), "--workers", "1"]) == 0
    escapes = tmp_path / "out" / "escapes.json"
    assert cli.main(["fit", str(escapes)]) == 0


def test_run_planted_radial_reports_subspace_error(tmp_path):
    config = {
        "target": {"kind": "gallery", "name": "planted_radial"},
        "model": "stiefel",
        "dims": [10],
        "seeds": 2,
        "base_seed": 1,
        "flow": {"t_max": 120.0},
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config))
    assert cli.run(str(path), workers=1) == 0
    res = json.loads((tmp_path / "out" / "results.json").read_text())
    for cell in res["cells"]:
        assert cell["subspace_err2"] <= 1e-3


def test_run_planted_failure_reports_trapped_fraction(tmp_path):
    config = {
        "target": {"kind": "gallery", "name": "planted_failure"},
        "model": "stiefel",
        "dims": [12],
        "seeds": 3,
        "base_seed": 0,
        "flow": {"t_max": 150.0},
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config))
    assert cli.run(str(path), workers=1) == 0
    res = json.loads((tmp_path / "out" / "results.json").read_text())
    assert "trapped_fraction" in res
    assert 0.0 <= res["trapped_fraction"] <= 1.0
    assert res["phi_peak"] >= 8.0


def test_console_script_runs():
    out = subprocess.run(
        [sys.executable, "-m", "hermiflow.cli", "gallery", "--list"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert "cascade_example" in out.stdout
