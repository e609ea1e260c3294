import json
import subprocess
import sys

import numpy as np
import pytest

from expham.cli import (ConfigError, build_model, main, parse_config_file)


def run_cli(args):
    return main(list(args))


class TestConfigParsing:
    def test_flat_key_value_with_comments(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "# experiment\n"
            "model = henon_heiles\n"
            "h_list = 0.02, 0.01   # ladder\n"
            "\n"
            "T = 2.0\n")
        parsed = parse_config_file(cfg)
        assert parsed == {"model": "henon_heiles", "h_list": "0.02, 0.01",
                          "T": "2.0"}

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("stepsize = 0.1\n")
        with pytest.raises(ConfigError):
            parse_config_file(cfg)

    def test_malformed_line_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("model henon_heiles\n")
        with pytest.raises(ConfigError):
            parse_config_file(cfg)

    def test_unknown_model_rejected(self):
        with pytest.raises(ConfigError):
            build_model({"model": "pendulum"})

    def test_model_params_forwarded(self):
        sys_obj, _ = build_model({"model": "fpu", "p": "2", "L": "16"})
        assert sys_obj.potential.degree == 4
        assert sys_obj.dim == 30


class TestRunCommand:
    def test_run_writes_expected_files(self, tmp_path):
        out = tmp_path / "res"
        rc = run_cli(["run", "--model", "henon_heiles",
                      "--schemes", "ekahan,exp_euler",
                      "--h-list", "0.02,0.01", "--T", "1.0",
                      "--out-dir", str(out), "--repeats", "1"])
        assert rc == 0
        order = (out / "henon_heiles_order.csv").read_text().splitlines()
        assert order[0] == "scheme,h,E_G,wall_seconds,precompute_seconds"
        assert len(order) == 1 + 4  # 2 schemes x 2 step sizes
        energy = (out / "henon_heiles_ekahan_h0.02_energy.csv").read_text().splitlines()
        assert energy[0] == "t,H,E_H,deviation_actual,deviation_predicted,residual"
        assert len(energy) == 1 + 51
        assert (out / "henon_heiles_summary.csv").exists()

    def test_default_protocol_shape(self, tmp_path):
        # default schemes and ladder (4 schemes x 5 step sizes), short horizon
        out = tmp_path / "res"
        rc = run_cli(["run", "--model", "henon_heiles", "--T", "1.0",
                      "--out-dir", str(out), "--repeats", "1"])
        assert rc == 0
        rows = (out / "henon_heiles_order.csv").read_text().splitlines()[1:]
        assert len(rows) == 20
        schemes = {r.split(",")[0] for r in rows}
        assert schemes == {"ekahan", "kahan", "eavf", "exp_euler"}
        hs = sorted({float(r.split(",")[1]) for r in rows})
        assert len(hs) == 5 and abs(hs[-1] - 0.02) < 1e-15

    def test_zero_steps_config(self, tmp_path):
        out = tmp_path / "res"
        rc = run_cli(["run", "--model", "henon_heiles", "--schemes", "ekahan",
                      "--h-list", "0.02", "--T", "0.0", "--out-dir", str(out),
                      "--repeats", "1"])
        assert rc == 0
        energy = (out / "henon_heiles_ekahan_h0.02_energy.csv").read_text().splitlines()
        assert len(energy) == 2  # header + initial state only

    def test_deterministic_data_output(self, tmp_path):
        # identical config -> bit-identical energy CSV and E_G column
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = run_cli(["run", "--model", "henon_heiles", "--schemes", "ekahan",
                          "--h-list", "0.02,0.01", "--T", "2.0",
                          "--out-dir", str(out), "--repeats", "1"])
            assert rc == 0
            outs.append(out)
        for fname in ("henon_heiles_ekahan_h0.02_energy.csv",
                      "henon_heiles_ekahan_h0.01_energy.csv"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
        eg = []
        for out in outs:
            rows = (out / "henon_heiles_order.csv").read_text().splitlines()[1:]
            eg.append([row.split(",")[:3] for row in rows])
        assert eg[0] == eg[1]

    def test_env_var_overrides_out_dir(self, tmp_path, monkeypatch):
        env_dir = tmp_path / "from_env"
        monkeypatch.setenv("EXPHAM_OUT_DIR", str(env_dir))
        rc = run_cli(["run", "--model", "henon_heiles", "--schemes", "ekahan",
                      "--h-list", "0.02", "--T", "0.1",
                      "--out-dir", str(tmp_path / "ignored"), "--repeats", "1"])
        assert rc == 0
        assert (env_dir / "henon_heiles_order.csv").exists()

    def test_missing_model_is_config_error(self):
        assert run_cli(["run", "--h-list", "0.1"]) == 2

    def test_bad_param_is_config_error(self, tmp_path):
        rc = run_cli(["run", "--model", "fpu", "--param", "p=7",
                      "--out-dir", str(tmp_path), "--repeats", "1",
                      "--h-list", "0.5", "--T", "0.5"])
        assert rc == 2

    def test_integration_failure_exit_code(self, tmp_path):
        # exponential Euler on the lattice at a hopeless step size -> overflow
        # is not a step failure; use eavf non-convergence instead
        rc = run_cli(["run", "--model", "fpu", "--schemes", "eavf",
                      "--h-list", "64.0", "--T", "128.0",
                      "--param", "L=16", "--out-dir", str(tmp_path / "r"),
                      "--repeats", "1"])
        assert rc == 3

    def test_dissipative_energy_series_uses_reference(self, tmp_path):
        out = tmp_path / "res"
        rc = run_cli(["run", "--model", "fpu", "--schemes", "ekahan",
                      "--h-list", "0.5", "--T", "2.0", "--param", "gamma=0.1",
                      "--param", "L=16", "--out-dir", str(out), "--repeats", "1"])
        assert rc == 0
        rows = (out / "fpu_ekahan_h0.5_energy.csv").read_text().splitlines()[1:]
        eh = [float(r.split(",")[2]) for r in rows]
        assert all(np.isfinite(eh))  # E_H computed against the reference energy

    def test_kstep_scheme_through_cli(self, tmp_path):
        out = tmp_path / "res"
        rc = run_cli(["run", "--model", "fpu", "--schemes", "ekahan_kstep",
                      "--h-list", "0.25", "--T", "2.0",
                      "--param", "p=2", "--param", "L=16",
                      "--out-dir", str(out), "--repeats", "1"])
        assert rc == 0
        rows = (out / "fpu_ekahan_kstep_h0.25_energy.csv").read_text().splitlines()[1:]
        resid = [float(r.split(",")[5]) for r in rows[:-2]]
        assert max(resid) < 1e-10


class TestOtherCommands:
    def test_list_models(self, capsys):
        assert run_cli(["list-models"]) == 0
        out = capsys.readouterr().out
        for name in ("henon_heiles", "fpu", "zk"):
            assert name in out

    def test_verify_fast_json(self, tmp_path, capsys):
        report = tmp_path / "verify.json"
        rc = run_cli(["verify", "--fast", "--json", str(report)])
        assert rc == 0
        data = json.loads(report.read_text())
        assert all(entry["ok"] for entry in data)
        names = {entry["name"] for entry in data}
        assert "exp_euler_symmetry_control" in names
        control = next(e for e in data if e["name"] == "exp_euler_symmetry_control")
        assert control["expected_fail"] and not control["passed"]

    def test_benchmark_writes_csv(self, tmp_path):
        out = tmp_path / "bench.csv"
        rc = run_cli(["benchmark", "--model", "henon_heiles",
                      "--schemes", "ekahan", "--h", "0.02", "--T", "1.0",
                      "--repeats", "1", "-o", str(out)])
        assert rc == 0
        rows = out.read_text().splitlines()
        assert rows[0].startswith("backend,scheme,h,steps")
        assert len(rows) >= 2

    def test_console_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "expham.cli", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
