import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kitaev_edge.cli import EXIT_CONFIG, main
from kitaev_edge.config import PRESET_NAMES, ConfigError, ExperimentConfig, parse_config, preset_config
from kitaev_edge.hamiltonian import HamiltonianSpec
from kitaev_edge.plotting import line_plot_svg

SMALL = """
[lattice]
rows = 1
cols = 2
[prep]
restarts = 2
maxiter = 300
[evolution]
n_steps = 4
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv("KITAEV_EDGE_CACHE", str(tmp_path / "cache"))
    (tmp_path / "small.ini").write_text(SMALL)
    return tmp_path


def _run(workdir, *args):
    return main([*args, "--config", str(workdir / "small.ini"), "--out", str(workdir / "out")])


def test_presets_match_benchmarks():
    assert preset_config("non-abelian").spec == HamiltonianSpec(-1, -1, -1, 0.3, 0.1, 0.0)
    ab = preset_config("abelian").spec
    assert (ab.K_x, ab.K_y, ab.K_z) == (-1 / 6, -1 / 6, -1.0)
    assert preset_config("heis-weak").spec.J == 0.05 and preset_config("heis-strong").spec.J == 0.2
    assert [preset_config(n).prep.depth for n in PRESET_NAMES] == [5, 4, 3, 3]
    assert preset_config("heis-weak").evolution.tau == 0.15 and preset_config("abelian").evolution.tau == 0.1


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_round_trip_presets(name):
    cfg = preset_config(name)
    assert parse_config(cfg.to_text()) == cfg


@settings(max_examples=40)
@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(0, 0.5), st.integers(0, 8), st.integers(1, 5000),
       st.booleans(), st.sampled_from(["exact", "circuit-noiseless", "sampled"]), st.sampled_from(["auto", "0.01"]))
def test_round_trip_is_identity(kz, v, j, depth, shots, post, variant, p_err):
    cfg = (ExperimentConfig(spec=HamiltonianSpec(-1.0, -1.0, kz, v, 0.1, j))
           .with_section("prep", depth=depth)
           .with_section("measurement", shots=shots, postselect=post, variant=variant, p_err=p_err))
    text = cfg.to_text()
    again = parse_config(text)
    assert again == cfg and again.to_text() == text


@pytest.mark.parametrize("text,match", [
    ("[lattice]\nrows=2\ncols=3\n[spec]\nK_x=-1\nK_y=-1\nK_z=-1\nV=0.3\nh=0.1\nJ=0\nfoo=1\n", "unknown key"),
    ("[lattice]\nrows=2\ncols=3\n[spec]\nK_x=-1\n", "missing key"),
    ("[nonsense]\na=1\n", "unknown section"),
    ("[lattice]\nrows=two\n", "cannot parse"),
    ("[prep]\nmode=magic\n", "must be one of"),
    ("[measurement]\np_err=1.5\n", "p_err"),
    ("no header\n", "malformed"),
])
def test_invalid_configs(text, match):
    base = None if text.startswith("[lattice]") or "no header" in text else preset_config("non-abelian")
    with pytest.raises(ConfigError, match=match):
        parse_config(text, base)


def test_svg_emitter():
    svg = line_plot_svg({"a": ([0, 1, 2], [0.0, 0.5, np.nan]), "b<c": ([0, 1], [1, 1])}, title="t", xlabel="x")
    assert svg.startswith("<svg") and svg.count("<polyline") == 2 and "b&lt;c" in svg


def test_exit_code_for_config_errors(workdir, capsys):
    (workdir / "bad.ini").write_text("[spec]\nbogus=1\n")
    assert main(["energy", "--preset", "abelian", "--config", str(workdir / "bad.ini"),
                 "--out", str(workdir / "o")]) == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_missing_ansatz_points_to_prepare(workdir, capsys):
    assert _run(workdir, "correlate", "--preset", "non-abelian") == EXIT_CONFIG
    assert "prepare" in capsys.readouterr().err


def test_prepare_then_correlate_is_reproducible(workdir):
    assert _run(workdir, "prepare", "--preset", "non-abelian", "--seed", "1") == 0
    out = workdir / "out"
    report = json.loads((out / "prepare_report.json").read_text())
    assert report["two_qubit_rotations"] == 5 * 11 and report["fidelity"] > 0.99
    rows = list(csv.reader(open(out / "cgs_vs_depth.csv")))
    assert rows[0] == ["depth", "C_GS"] and len(rows) == 7
    blobs = []
    for _ in range(2):
        assert _run(workdir, "correlate", "--preset", "non-abelian", "--seed", "4", "--shots", "50") == 0
        blobs.append((out / "correlators.csv").read_bytes())
    assert blobs[0] == blobs[1]
    assert (out / "correlators.svg").read_text().startswith("<svg")


def test_sampled_runs_are_byte_reproducible(workdir):
    (workdir / "s.ini").write_text(SMALL + "[measurement]\nvariant = sampled\nshots = 40\n")
    args = ["correlate", "--preset", "non-abelian", "--config", str(workdir / "s.ini"), "--exact-prep", "--seed", "7"]
    blobs = []
    for k in range(2):
        assert main(args + ["--out", str(workdir / f"o{k}")]) == 0
        blobs.append((workdir / f"o{k}" / "correlators.csv").read_bytes())
    assert blobs[0] == blobs[1]
    assert main(args[:-1] + ["8", "--out", str(workdir / "o2")]) == 0
    assert (workdir / "o2" / "correlators.csv").read_bytes() != blobs[0]


def test_energy_exact_totals(workdir):
    assert _run(workdir, "energy", "--preset", "abelian", "--exact-prep") == 0
    rows = {r["category"]: r for r in csv.DictReader(open(workdir / "out" / "energy.csv"))}
    parts = sum(float(r["estimate"]) for k, r in rows.items() if k != "total")
    assert parts == pytest.approx(float(rows["total"]["exact"]), abs=1e-8)
    assert float(rows["total"]["estimate"]) == pytest.approx(float(rows["total"]["exact"]), abs=1e-8)
    w = [float(r["W_p"]) for r in csv.DictReader(open(workdir / "out" / "plaquettes.csv"))]
    assert np.allclose(w, 1.0, atol=1e-8)


def test_noisy_energy_postselection(workdir):
    assert _run(workdir, "prepare", "--preset", "non-abelian") == 0
    (workdir / "n.ini").write_text(SMALL + "[measurement]\nvariant = sampled\nshots = 200\np_err = auto\n")
    assert main(["energy", "--preset", "non-abelian", "--config", str(workdir / "n.ini"), "--postselect",
                 "--out", str(workdir / "out")]) == 0
    total = [r for r in csv.DictReader(open(workdir / "out" / "energy.csv")) if r["category"] == "total"][0]
    assert 0.6 < float(total["retained_fraction"]) < 0.9
    exact = float(total["exact"])
    assert abs(float(total["postselected"]) - exact) < abs(float(total["estimate"]) - exact)


def test_noiseless_sampled_energy_keeps_every_shot(workdir):
    assert _run(workdir, "prepare", "--preset", "non-abelian") == 0
    (workdir / "n.ini").write_text(SMALL + "[measurement]\nvariant = sampled\nshots = 20\np_err = 0\n")
    assert main(["energy", "--preset", "non-abelian", "--config", str(workdir / "n.ini"), "--postselect",
                 "--out", str(workdir / "out")]) == 0
    rows = list(csv.DictReader(open(workdir / "out" / "energy.csv")))
    assert all(float(r["retained_fraction"]) == 1.0 for r in rows)


def test_tau_scan(workdir):
    (workdir / "t.ini").write_text(SMALL + "[spec]\nh = 0.0\n")
    base = ["tau-scan", "--preset", "non-abelian", "--config", str(workdir / "t.ini"), "--out", str(workdir / "out")]
    assert main(base) == 0
    rows = list(csv.DictReader(open(workdir / "out" / "tau_scan.csv")))
    errs = [float(r["max_abs_error"]) for r in rows]
    assert [float(r["tau"]) for r in rows] == [0.2, 0.1, 0.05]
    assert errs[0] > errs[1] > errs[2] > 0
    (workdir / "t2.ini").write_text(SMALL.replace("n_steps = 4", "n_steps = 4\nscan = 0.02 0.01"))
    assert main(base[:4] + [str(workdir / "t2.ini"), "--out", str(workdir / "o2")]) == 0
    rows = list(csv.DictReader(open(workdir / "o2" / "tau_scan.csv")))
    assert float(rows[-1]["tau"]) == 0.01 and float(rows[-1]["max_abs_error"]) == 0.0
