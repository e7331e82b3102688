import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from nonfick.cli import main

FIG3A_CFG = """\
gamma = 0.4
epsilon = 0.4
tau = 1.0
d_f = 0.5
seed = 20240117
dt = 0.02
t_burn = 25
n_traj = 256
n_samples = 50000
stride = 50
hist_min = -10
hist_max = 10
n_cells = 512
x_max = 30
pde_t_end = 300
"""


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "fig3a.cfg"
    path.write_text(FIG3A_CFG)
    return path


def run(tmp_path, cfg, *args, name="out"):
    out = tmp_path / name
    code = main(["--config", str(cfg), "--out", str(out), *args])
    return code, out


class TestScales:
    def test_fig3a_row(self, tmp_path, cfg_file, capsys):
        code, out = run(tmp_path, cfg_file, "scales")
        assert code == 0
        data = json.loads((out / "scales.json").read_text())
        assert data["big_r"] == pytest.approx(0.177778, rel=1e-5)
        assert data["alpha_tail"] == pytest.approx(3.5, rel=1e-9)

    def test_sweep_monotone(self, tmp_path, cfg_file):
        code, out = run(tmp_path, cfg_file, "scales", "--sweep",
                        "gamma_tau=0.01:10:40", "--deltas", "0.2,0.4")
        assert code == 0
        rows = np.loadtxt(out / "sweep.csv", delimiter=",", comments="#",
                          skiprows=_header_lines(out / "sweep.csv") + 1)
        for col in (1, 2):
            assert np.all(np.diff(rows[:, col]) < 0)
        assert (out / "sweep.png").exists()

    def test_unperturbed_r_zero(self, tmp_path):
        cfg = tmp_path / "eps0.cfg"
        cfg.write_text("gamma = 0.4\nepsilon = 0\ntau = 1.0\nd_f = 0.5\n")
        code, out = run(tmp_path, cfg, "scales")
        assert code == 0
        data = json.loads((out / "scales.json").read_text())
        assert data["big_r"] == 0.0
        assert data["alpha_tail"] == "inf"


def _header_lines(path):
    n = 0
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                n += 1
            else:
                break
    return n


class TestMoments:
    def test_table_values(self, tmp_path, cfg_file, capsys):
        code, out = run(tmp_path, cfg_file, "moments", "--n-max", "4")
        assert code == 0
        text = (out / "moments.csv").read_text()
        rows = [ln.split(",") for ln in text.splitlines()
                if ln and not ln.startswith("#") and not ln.startswith("n,")]
        by_n = {int(r[0]): r for r in rows}
        assert float(by_n[2][1]) == pytest.approx(4.027778, rel=1e-6)
        assert by_n[4][1] == "inf"
        assert by_n[4][3] == "false"
        console = capsys.readouterr().out
        assert "∞" in console


class TestSimulateAndPeq:
    def test_simulate_outputs(self, tmp_path, cfg_file):
        code, out = run(tmp_path, cfg_file, "simulate", "--trajectory", "0")
        assert code == 0
        for name in ("histogram.csv", "stats.json", "histogram.png",
                     "trajectory.csv", "trajectory.png", "manifest.json"):
            assert (out / name).exists(), name
        stats = json.loads((out / "stats.json").read_text())
        assert stats["n_samples"] > 0

    def test_peq_outputs(self, tmp_path, cfg_file, capsys):
        code, out = run(tmp_path, cfg_file, "peq")
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["m2_third"] < report["m2_fick"]


class TestEvolve:
    def test_runs_and_reports(self, tmp_path, cfg_file, capsys):
        code, out = run(tmp_path, cfg_file, "evolve", "--snapshots", "5,20")
        assert code == 0
        report = json.loads((out / "evolve_report.json").read_text())
        assert report["mass_drift_max"] < 1e-10
        assert (out / "snapshot_t5.csv").exists()
        assert (out / "evolution.png").exists()


class TestCompare:
    def test_fig3a_like_pass(self, tmp_path, cfg_file, capsys):
        # small sampling budget: widen the L1 gate (full-size thresholds are
        # exercised by the acceptance suite)
        code, out = run(tmp_path, cfg_file, "compare", "--l1-max", "0.08")
        report = json.loads((out / "report.json").read_text())
        assert report["l1"]["mc_vs_third"] < report["l1"]["mc_vs_fick"]
        assert code == 0 and report["verdict"] == "PASS"

    def test_delta0_collapse(self, tmp_path):
        cfg = tmp_path / "d0.cfg"
        cfg.write_text("gamma = 0.4\nepsilon = 0\ntau = 1.0\nd_f = 0.5\n"
                       "seed = 3\nn_traj = 128\nn_samples = 20000\n"
                       "n_cells = 512\nx_max = 12\npde_t_end = 100\n")
        code, out = run(tmp_path, cfg, "compare")
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["verdict"] == "PASS"
        assert report["l1"]["steady_vs_third"] < 0.01

    def test_divergent_regime_moment_table(self, tmp_path):
        cfg = tmp_path / "fig4.cfg"
        cfg.write_text("gamma = 0.3\nepsilon = 0.5\ntau = 1.0\nd_f = 0.5\n"
                       "seed = 20\ndt = 0.02\nn_traj = 128\n"
                       "n_samples = 20000\nstride = 25\nhist_min = -10\n"
                       "hist_max = 10\nn_cells = 512\nx_max = 30\n")
        code, out = run(tmp_path, cfg, "compare", "--skip-pde")
        moments = (out / "moments.csv").read_text()
        rows = [ln.split(",") for ln in moments.splitlines()
                if ln and not ln.startswith("#") and not ln.startswith("n,")]
        theory = {int(r[0]): r[1] for r in rows}
        assert theory[2] == "inf"
        assert theory[4] == "inf"

    def test_reproducible_and_manifest_hashes(self, tmp_path, cfg_file):
        code1, out1 = run(tmp_path, cfg_file, "compare", "--l1-max", "0.08",
                          name="r1")
        code2, out2 = run(tmp_path, cfg_file, "compare", "--l1-max", "0.08",
                          name="r2")
        assert code1 == code2 == 0
        man = json.loads((out1 / "manifest.json").read_text())
        assert man["outputs"]
        for entry in man["outputs"]:
            blob = (out1 / entry["path"]).read_bytes()
            assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
            if entry["path"].endswith(".csv"):
                assert blob == (out2 / entry["path"]).read_bytes()


class TestNdCoeffs:
    def test_scalar_model(self, tmp_path):
        for name, val in (("E", 0.4), ("D", 0.5), ("G", 1.0)):
            (tmp_path / f"{name}.csv").write_text(f"{val}\n")
        out = tmp_path / "out"
        code = main(["--out", str(out), "ndcoeffs",
                     "--e-matrix", str(tmp_path / "E.csv"),
                     "--d-matrix", str(tmp_path / "D.csv"),
                     "--g-matrix", str(tmp_path / "G.csv"),
                     "--epsilon", "0.4", "--tau", "1.0"])
        assert code == 0
        rep = json.loads((out / "ndcoeffs.json").read_text())
        assert rep["k_drift"][0][0] == pytest.approx(1.0, abs=1e-8)
        assert rep["k_third"][0][0] == pytest.approx(0.5 * 2 / 1.8, abs=1e-8)

    def test_missing_matrix_is_usage_error(self, tmp_path):
        code = main(["--out", str(tmp_path / "o"), "ndcoeffs",
                     "--e-matrix", "nope.csv", "--d-matrix", "nope.csv",
                     "--g-matrix", "nope.csv"])
        assert code == 1


class TestErrors:
    def test_bad_config_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("gamma 0.4\n")
        code = main(["--config", str(cfg), "--out", str(tmp_path / "o"),
                     "scales"])
        assert code == 1
        assert "bad.cfg:1" in capsys.readouterr().err

    def test_missing_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("gamma = 0.4\n")
        code = main(["--config", str(cfg), "--out", str(tmp_path / "o"),
                     "scales"])
        assert code == 1

    def test_unknown_flag(self, tmp_path, cfg_file):
        code = main(["--config", str(cfg_file), "--out",
                     str(tmp_path / "o"), "scales", "--bogus"])
        assert code == 1

    def test_invalid_sweep_spec(self, tmp_path, cfg_file):
        code, _ = run(tmp_path, cfg_file, "scales", "--sweep",
                      "gamma_tau=oops")
        assert code == 1

    def test_include_and_override(self, tmp_path):
        base = tmp_path / "base.cfg"
        base.write_text("gamma = 0.4\nepsilon = 0.4\ntau = 1.0\nd_f = 0.5\n")
        top = tmp_path / "top.cfg"
        top.write_text(f"include base.cfg\nepsilon = 0.0\n")
        code = main(["--config", str(top), "--out", str(tmp_path / "o"),
                     "scales"])
        assert code == 0
        data = json.loads((tmp_path / "o" / "scales.json").read_text())
        assert data["epsilon"] == 0.0
