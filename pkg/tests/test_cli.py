import json
import os

import numpy as np
import pytest

from opident import cli


def write_config(tmp_path, **overrides):
    cfg = {
        "seed": 0,
        "model": {"family": "linear_drift", "dim": 2, "horizon": 1.0,
                  "known_matrix": "random", "observer": "random"},
        "basis": {"kind": "canonical"},
        "alpha_star": {"kind": "random"},
        "alpha_circ": {"kind": "relative", "rho": 0.01},
        "algorithm": "LGR",
        "controls": {"n_segments": 20},
        "optimizer": {"multistart": 2},
        "sweep": {"radii": [0.1], "trials": 3, "tolerance": 0.005},
        "out_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


class TestConfigValidation:
    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(cli.ConfigError, match="bogus"):
            cli.validate_config({"bogus": 1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(cli.ConfigError, match="model.bogus"):
            cli.validate_config({"model": {"bogus": 1}})

    def test_wrong_type_rejected(self):
        with pytest.raises(cli.ConfigError, match="seed"):
            cli.validate_config({"seed": "zero"})

    def test_valid_config_accepted(self, tmp_path):
        path, cfg = write_config(tmp_path)
        assert cli.load_config(path) == cfg


class TestHelpDocSync:
    def test_every_config_key_in_help(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["offline", "--help"])
        text = capsys.readouterr().out
        for key, _ in cli.config_keys():
            assert key in text, f"config key {key} missing from --help"

    def test_commands_listed(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["--help"])
        text = capsys.readouterr().out
        for command in ("offline", "online", "sweep", "diagnose", "oracle"):
            assert command in text


class TestOffline:
    def test_writes_controls_and_exits_zero(self, tmp_path):
        path, cfg = write_config(tmp_path)
        assert cli.main(["offline", "--config", str(path), "--quiet"]) == 0
        ctl_dir = os.path.join(cfg["out_dir"], "controls")
        assert len(os.listdir(ctl_dir)) == 4
        log = open(os.path.join(cfg["out_dir"], "offline_log.txt")).read()
        assert "seed: 0" in log

    def test_unobservable_model_exits_two(self, tmp_path):
        path, cfg = write_config(
            tmp_path, model={"family": "linear_drift", "dim": 2, "horizon": 1.0,
                             "known_matrix": "random",
                             "observer": [[0.0, 0.0]]})
        assert cli.main(["offline", "--config", str(path), "--quiet"]) == 2

    def test_malformed_config_exits_one(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"bogus_key": 1}))
        assert cli.main(["offline", "--config", str(path), "--quiet"]) == 1

    def test_missing_config_exits_one(self, tmp_path):
        assert cli.main(["offline", "--config", str(tmp_path / "nope.json"),
                         "--quiet"]) == 1


class TestOnline:
    def test_converges_after_offline(self, tmp_path):
        path, cfg = write_config(tmp_path)
        assert cli.main(["offline", "--config", str(path), "--quiet"]) == 0
        assert cli.main(["online", "--config", str(path), "--quiet"]) == 0
        report = open(os.path.join(cfg["out_dir"], "gn_report.txt")).read()
        assert "verdict: converged" in report
        assert "seed: 0" in report

    def test_missing_controls_dir_exits_one(self, tmp_path):
        path, cfg = write_config(tmp_path)
        assert cli.main(["online", "--config", str(path), "--quiet",
                         "--controls", str(tmp_path / "nowhere")]) == 1


class TestSweepCommand:
    def test_runs_and_is_deterministic(self, tmp_path):
        path, cfg = write_config(tmp_path)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert cli.main(["sweep", "--config", str(path), "--quiet",
                         "--out", str(out_a)]) == 0
        assert cli.main(["sweep", "--config", str(path), "--quiet",
                         "--out", str(out_b)]) == 0
        assert (out_a / "sweep.csv").read_bytes() == (out_b / "sweep.csv").read_bytes()
        for name in sorted(os.listdir(out_a / "controls")):
            assert (out_a / "controls" / name).read_bytes() == \
                (out_b / "controls" / name).read_bytes()


class TestDiagnose:
    def test_full_rank_system_passes(self, tmp_path, capsys):
        path, cfg = write_config(tmp_path)
        assert cli.main(["diagnose", "--config", str(path)]) == 0
        text = capsys.readouterr().out
        assert "PASS" in text and "FAIL" not in text

    def test_unobservable_fails(self, tmp_path, capsys):
        path, cfg = write_config(
            tmp_path, model={"family": "linear_drift", "dim": 2, "horizon": 1.0,
                             "known_matrix": "random",
                             "observer": [[0.0, 0.0]]})
        assert cli.main(["diagnose", "--config", str(path)]) == 2
        assert "observability rank: 0/2 FAIL" in capsys.readouterr().out

    def test_bilinear_lie_check(self, tmp_path, capsys):
        b = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
        elements = []
        pairs = [(0, 1), (0, 2), (1, 2)]
        for i, j in pairs:
            m = np.zeros((3, 3))
            m[i, j], m[j, i] = 1.0, -1.0
            elements.append(m.tolist())
        path, cfg = write_config(
            tmp_path,
            model={"family": "bilinear_drift", "dim": 3, "horizon": 1.0,
                   "known_matrix": b, "observer": "identity", "y0": [1.0, 0.0, 0.0]},
            basis={"kind": "explicit", "elements": elements},
            alpha_circ={"kind": "explicit", "values": [0.0, 0.0, 1.0]})
        code = cli.main(["diagnose", "--config", str(path)])
        text = capsys.readouterr().out
        assert "Lie algebra dimension: 3/3 PASS" in text
        assert code == 0


class TestOracleCommand:
    def test_exit_zero(self, capsys):
        assert cli.main(["oracle", "--quiet"]) == 0


class TestSchrodingerConfig:
    def test_olgr_offline_on_embedded_system(self, tmp_path):
        cfg = {
            "seed": 0,
            "model": {"family": "schrodinger_real", "dim": 3,
                      "horizon": 31.41592653589793, "n_steps": 500,
                      "h_real": [[4.0, 0, 0], [0, 8.0, 0], [0, 0, 16.0]],
                      "psi0_real": [1.0, 0.0, 0.0],
                      "psi1_real": [0.5773502691896258] * 3},
            "basis": {"kind": "hermitian_canonical"},
            "alpha_star": {"kind": "random"},
            "alpha_circ": {"kind": "zero"},
            "algorithm": "OLGR",
            "controls": {"n_segments": 10},
            "optimizer": {"multistart": 2},
            "out_dir": str(tmp_path / "out"),
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code = cli.main(["offline", "--config", str(path), "--quiet"])
        assert code in (0, 2)
        assert os.path.isdir(tmp_path / "out" / "controls")

    def test_olgr_sweep_on_union_basis(self, tmp_path):
        cfg = {
            "seed": 1,
            "model": {"family": "linear_drift", "dim": 3, "horizon": 1.0,
                      "known_matrix": "random", "observer": "random"},
            "basis": {"kind": "union", "count": 9},
            "alpha_star": {"kind": "random"},
            "alpha_circ": {"kind": "relative", "rho": 0.01},
            "algorithm": "OLGR",
            "controls": {"n_segments": 20},
            "optimizer": {"multistart": 2},
            "sweep": {"radii": [0.1], "trials": 2, "tolerance": 0.005},
            "out_dir": str(tmp_path / "out"),
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert cli.main(["sweep", "--config", str(path), "--quiet"]) == 0
        rows = open(tmp_path / "out" / "sweep.csv").read().strip().split("\n")
        assert len(rows) == 2
