import csv
import json
import subprocess
import sys

import pytest

from maxlor.cli import EXIT_OK, EXIT_PHYSICS, EXIT_USAGE, main

SMALL = """seed = 1
[grid]
n = 32
L = 8.0
[perturbation]
kind = "bump"
amplitude = 1e-3
[integrator]
dt = 0.01
t_final = 2.0
output_every = 0.2
[analysis]
window = [0.4, 2.0]
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_bad_flag_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--no-such-flag"])
    assert exc.value.code == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE


def test_invalid_config_is_a_usage_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[perturbation]\nkind = 'wiggle'\n")
    assert main(["simulate", "--config", str(path), "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_missing_config_file_is_a_usage_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "absent.toml")]) == EXIT_USAGE


def test_run_past_wrap_time_is_a_usage_error(config, tmp_path):
    assert main(["simulate", "--config", str(config), "--t-final", "9", "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_leaving_the_neighborhood_is_a_physics_failure(tmp_path, capsys):
    path = tmp_path / "tight.toml"
    path.write_text(SMALL + "neighborhood = 1e-12\n")
    assert main(["simulate", "--config", str(path), "--out-dir", str(tmp_path)]) == EXIT_PHYSICS
    assert "ProjectionLost" in capsys.readouterr().err


def test_simulate_writes_series_and_summary(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(config), "--out-dir", str(out)]) == EXIT_OK
    rows = read_csv(out / "series.csv")
    assert rows[0][0] == "t [time]"
    assert all("[" in name for name in rows[0])
    assert len(rows) == 1 + 11
    traj = read_csv(out / "trajectory.csv")
    assert traj[0][0] == "t [time]"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["grid"] == {"n": 32, "L": 8.0}
    assert summary["energy_drift"] < 1e-8
    assert "fit z_norm" in capsys.readouterr().out


def test_fit_decay_reads_a_column(tmp_path, capsys):
    path = tmp_path / "series.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t [time]", "y [1]"])
        for t in range(1, 21):
            writer.writerow([t, t**-1.5])
    assert main(["fit-decay", str(path), "--column", "y", "--out-dir", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "fit.json").read_text())["exponent"] == pytest.approx(-1.5, abs=1e-12)
    assert main(["fit-decay", str(path), "--column", "absent"]) == EXIT_USAGE


def test_check_rho_reports_neutrality(capsys):
    assert main(["check-rho", "--k-max", "5"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["neutrality"]["pass"] is True
    assert main(["check-rho", "--family", "bump", "--k-max", "5"]) == EXIT_PHYSICS


def test_soliton_summary(tmp_path):
    assert main(["soliton", "--n", "16", "--L", "4", "--v", "0.3", "--out-dir", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "soliton.json").read_text())
    assert data["stationary_residual"] < 1e-10
    assert min(data["omega_plus_eigenvalues"]) > 0
    assert main(["soliton", "--v", "1.2"]) == EXIT_USAGE


def test_spectral_sweep(tmp_path):
    assert main(["spectral", "--omegas", "1", "2", "--out-dir", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "spectral.csv")
    assert rows[0][0] == "omega [1/time]" and len(rows) == 3
    data = json.loads((tmp_path / "spectral.json").read_text())
    assert data["c_row_sum"] < 1e-10 and data["sign_omega_im_d_positive"] is True


def test_module_entry_point(tmp_path):
    done = subprocess.run([sys.executable, "-m", "maxlor.cli", "check-rho", "--k-max", "4"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert done.returncode == EXIT_OK
    assert json.loads(done.stdout)["neutrality"]["pass"] is True


def test_scatter_reports_decreasing_residuals(tmp_path):
    path = tmp_path / "strong.toml"
    path.write_text(SMALL.replace("amplitude = 1e-3", "amplitude = 3e2").replace("t_final = 2.0", "t_final = 5.0"))
    assert main(["scatter", "--config", str(path), "--start", "1", "--count", "4", "--out-dir", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "scattering.json").read_text())
    assert data["times"] == pytest.approx([1.0, 2.4, 3.6, 5.0])
    assert data["strictly_decreasing"] is True
    assert len(read_csv(tmp_path / "scattering.csv")) == 5
    assert main(["scatter", "--config", str(path), "--start", "6", "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_frozen_writes_a_fit(config, tmp_path):
    assert main(["frozen", "--config", str(config), "--dt", "0.05", "--out-dir", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "frozen.json").read_text())
    assert data["max_secular"] < 1e-9
    assert set(data["fit"]) >= {"exponent", "r_squared", "amplitude"}
    assert read_csv(tmp_path / "frozen.csv")[0][0] == "t [time]"
