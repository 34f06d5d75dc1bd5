import csv
import logging
import math
import subprocess
import sys

import numpy as np
import pytest

from delaywave import pipeline
from delaywave.cli import main
from delaywave.config import ConfigError, parse_config, parse_config_text

SMALL = """\
preset = wave
n = 4
a = 1
beta = 2
c_h = 1.0
k = 0.02
tau = 1
dt = 0.01
t_end = 8
u0 = 1, 0.5
v0 = 0
history = constant
"""


def write(tmp_path, text, name="scn.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_report(path):
    out = {}
    for line in path.read_text().splitlines():
        key, value = line.split(" = ", 1)
        out[key] = value
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestParse:
    def test_minimal_wave_config(self):
        cfg = parse_config_text("k = 0.1\n")
        assert cfg.preset == "wave"
        assert cfg.n == 8
        assert cfg.k == 0.1
        assert cfg.delay_interval == (0.0, math.pi / 2)
        assert cfg.beta == 0.0

    def test_pi_arithmetic_and_vectors(self):
        cfg = parse_config_text("k = -0.5\ndelay_interval = pi/4, 3*pi/4\nu0 = 1, -2.5, 1e-3\n")
        assert cfg.delay_interval == (math.pi / 4, 3 * math.pi / 4)
        assert cfg.u0 == [1.0, -2.5, 1e-3]

    def test_comments_ignored(self):
        cfg = parse_config_text("# scenario\nk = 0.1  # weak feedback\n\n")
        assert cfg.k == 0.1

    def test_tau_dt_mismatch_names_both(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("k = 0.1\ntau = 1\ndt = 0.3\n", source="s.cfg")
        msg = str(exc.value)
        assert "tau = 1.0" in msg and "dt = 0.3" in msg
        assert "s.cfg:3" in msg

    def test_negative_beta(self):
        with pytest.raises(ConfigError, match="beta"):
            parse_config_text("k = 0.1\nbeta = -1\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=r"s.cfg:2: unknown key 'dampign'"):
            parse_config_text("k = 0.1\ndampign = 3\n", source="s.cfg")

    def test_all_errors_reported(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("k = 0.1\nbeta = -1\nfoo = 2\ndt = 0.3\nn = x\n")
        assert len(exc.value.errors) == 4

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate key 'k'"):
            parse_config_text("k = 0.1\nk = 0.2\n")

    def test_exactly_one_k_source(self):
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config_text("tau = 1\n")
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config_text("k = 0.1\nk_csv = k.csv\n")

    def test_custom_needs_lambdas(self):
        with pytest.raises(ConfigError, match="explicit eigenvalues"):
            parse_config_text("preset = custom\nk = 0\n")
        cfg = parse_config_text("preset = custom\nlambdas = 1, 3, 7\nk = 0\n")
        assert cfg.n == 3

    def test_vector_longer_than_modes(self):
        with pytest.raises(ConfigError, match="u0"):
            parse_config_text("n = 2\nk = 0\nu0 = 1, 2, 3\n")

    def test_bad_interval(self):
        with pytest.raises(ConfigError, match="damp_interval"):
            parse_config_text("k = 0\ndamp_interval = 2, 1\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "nope.cfg")

    def test_paths_resolve_next_to_config(self, tmp_path):
        cfg = parse_config(write(tmp_path, "k = 0\n"))
        assert cfg.resolve(None, "trajectory.csv") == tmp_path / "scn.trajectory.csv"
        assert cfg.resolve("out/x.csv", "x") == tmp_path / "out" / "x.csv"


class TestRun:
    def test_linear_k_zero_decays(self, tmp_path):
        p = write(tmp_path, "n = 4\nk = 0\ntau = 0.5\ndt = 0.01\nt_end = 6\nu0 = 1, 0.2\nv0 = 0\n")
        assert main(["run", str(p)]) == 0
        rows = read_csv(tmp_path / "scn.trajectory.csv")
        w = np.array([float(r["w_norm"]) for r in rows])
        assert np.all(np.diff(w) <= 1e-12)
        assert w[-1] < w[0]
        report = read_report(tmp_path / "scn.certificate.txt")
        assert report["valid"] == "true"
        assert report["rho_constrained"] == "false"
        env = read_csv(tmp_path / "scn.envelope.csv")
        assert list(env[0]) == ["time", "w_norm", "envelope", "ratio"]
        assert max(float(r["ratio"]) for r in env) <= 1.05

    def test_scale_above_rho_not_certified(self, tmp_path, caplog):
        p = write(tmp_path, SMALL + "scale = 1\n")
        with caplog.at_level(logging.WARNING):
            assert main(["run", str(p)]) == 0
        assert "data not certified" in caplog.text
        report = read_report(tmp_path / "scn.certificate.txt")
        assert report["run.data_certified"] == "false"
        assert report["run.warning"] == "data not certified"

    def test_scale_below_rho_certified(self, tmp_path):
        p = write(tmp_path, SMALL + "scale = 0.03\n")
        assert main(["run", str(p)]) == 0
        report = read_report(tmp_path / "scn.certificate.txt")
        assert report["run.data_certified"] == "true"
        assert float(report["run.data_size"]) < float(report["rho"])
        assert float(report["run.envelope.max_ratio"]) <= 1.05
        assert report["run.checks_passed"] == "true"

    def test_missing_k_csv(self, tmp_path, caplog):
        p = write(tmp_path, "k_csv = absent.csv\n")
        with caplog.at_level(logging.ERROR):
            assert main(["run", str(p)]) == 1
        assert str(tmp_path / "absent.csv") in caplog.text

    def test_malformed_k_csv(self, tmp_path, caplog):
        (tmp_path / "k.csv").write_text("t,k\n0,0.1\n1,oops\n")
        p = write(tmp_path, "k_csv = k.csv\n")
        with caplog.at_level(logging.ERROR):
            assert main(["run", str(p)]) == 1
        assert "k.csv:3" in caplog.text

    def test_k_from_csv(self, tmp_path):
        (tmp_path / "k.csv").write_text("t,k\n0,0.0\n1,0.03\n2,0.01\n")
        p = write(tmp_path, "n = 3\nk_csv = k.csv\ntau = 0.5\ndt = 0.01\nt_end = 3\nu0 = 0.5\n")
        assert main(["run", str(p)]) == 0

    def test_config_errors_exit_one(self, tmp_path, caplog):
        p = write(tmp_path, "k = 0.1\nbeta = -1\nfoo = 2\n")
        with caplog.at_level(logging.ERROR):
            assert main(["run", str(p)]) == 1
        assert "scn.cfg:2" in caplog.text and "scn.cfg:3" in caplog.text

    def test_infeasible_delay_exits_two(self, tmp_path):
        p = write(tmp_path, "n = 3\nk = 2\ntau = 1\ndt = 0.01\nt_end = 1\n")
        assert main(["run", str(p)]) == 2
        report = read_report(tmp_path / "scn.certificate.txt")
        assert report["valid"] == "false"
        assert report["status"].startswith("infeasible")

    def test_byte_identical_reruns(self, tmp_path):
        p = write(tmp_path, SMALL.replace("t_end = 8", "t_end = 2") + "scale = 0.03\n")
        main(["run", str(p)])
        first = [(tmp_path / f"scn.{s}").read_bytes() for s in ("trajectory.csv", "certificate.txt", "envelope.csv")]
        main(["run", str(p)])
        second = [(tmp_path / f"scn.{s}").read_bytes() for s in ("trajectory.csv", "certificate.txt", "envelope.csv")]
        assert first == second

    def test_frontier_written(self, tmp_path):
        p = write(tmp_path, SMALL.replace("t_end = 8", "t_end = 1"))
        main(["run", str(p)])
        rows = read_csv(tmp_path / "scn.frontier.csv")
        assert len(rows) == 512
        wp = np.array([float(r["omega_prime"]) for r in rows])
        gamma = np.array([float(r["gamma"]) for r in rows])
        report = read_report(tmp_path / "scn.certificate.txt")
        assert wp[0] == float(report["omega_prime"])
        assert np.all(np.diff(wp) > 0.0) and np.all(wp < float(report["omega"]))
        assert np.all(gamma >= 0.0)

    def test_explicit_output_paths(self, tmp_path):
        text = SMALL.replace("t_end = 8", "t_end = 1") + (
            "trajectory_csv = out/traj.csv\ncertificate_report = out/cert.txt\nenvelope_csv = out/env.csv\n")
        p = write(tmp_path, text)
        main(["run", str(p)])
        for name in ("traj.csv", "cert.txt", "env.csv"):
            assert (tmp_path / "out" / name).exists()


class TestSweep:
    def test_scales_below_rho(self, tmp_path):
        p = write(tmp_path, SMALL)
        out = tmp_path / "sweep.csv"
        assert main(["sweep", str(p), "--scales", "0.005", "0.01,0.03", "-o", str(out)]) == 0
        rows = read_csv(out)
        assert [r["scale"] for r in rows] == ["0.0050000000000000001", "0.01", "0.029999999999999999"]
        assert list(rows[0]) == pipeline.SWEEP_HEADER
        for r in rows:
            assert r["certified"] == "true"
            assert float(r["max_ratio"]) <= 1.05
            assert r["diverged"] == "false"

    def test_zero_scale_ratio_is_zero(self, tmp_path):
        p = write(tmp_path, SMALL)
        out = tmp_path / "sweep.csv"
        main(["sweep", str(p), "--scales", "0", "-o", str(out)])
        (row,) = read_csv(out)
        assert float(row["max_ratio"]) == 0.0
        assert float(row["final_w_norm"]) == 0.0

    def test_large_scale_row_uncertified(self, tmp_path):
        p = write(tmp_path, SMALL)
        out = tmp_path / "sweep.csv"
        assert main(["sweep", str(p), "--scales", "0.01", "5", "-o", str(out)]) == 0
        rows = read_csv(out)
        assert [r["certified"] for r in rows] == ["true", "false"]

    def test_bad_scale_list(self, tmp_path):
        p = write(tmp_path, SMALL)
        with pytest.raises(SystemExit):
            main(["sweep", str(p), "--scales", "abc"])


class TestCertify:
    def test_prints_report(self, tmp_path, capsys):
        p = write(tmp_path, SMALL)
        assert main(["certify", str(p)]) == 0
        text = capsys.readouterr().out
        assert "valid = true" in text
        assert "check.C_N_at_most_one.passed = true" in text
        assert "rho_sqrt = " in text and "rho_strict = " in text

    def test_writes_file(self, tmp_path):
        p = write(tmp_path, SMALL)
        out = tmp_path / "cert.txt"
        assert main(["certify", str(p), "-o", str(out)]) == 0
        assert read_report(out)["N"] == "5"

    def test_module_entry_point(self, tmp_path):
        p = write(tmp_path, SMALL)
        res = subprocess.run([sys.executable, "-m", "delaywave.cli", "certify", str(p)],
                             capture_output=True, text=True, check=False)
        assert res.returncode == 0
        assert res.stdout.startswith("preset = wave")
