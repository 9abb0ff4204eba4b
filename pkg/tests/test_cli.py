"""CLI contract: exit codes, config validation, determinism, file handling."""

import json
from pathlib import Path

import pytest

from sautemdp.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_VERIFY,
    main,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write_json(path: Path, payload: dict) -> str:
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    return str(path)


@pytest.fixture
def tiny_run_config(tmp_path):
    cfg = {
        "schema_version": "1",
        "master_seed": 3,
        "environment": {"type": "pendulum", "horizon": 30},
        "saute": {
            "budget_d": 30.0,
            "gamma_l": 1.0,
            "reshape_n": 200.0,
            "normalize": True,
            "mode": "maximize_reward",
        },
        "agent": {
            "type": "cem",
            "plan_horizon": 8,
            "population": 24,
            "elite_fraction": 0.2,
            "iterations": 2,
            "initial_stddev": 1.0,
            "min_stddev": 0.05,
            "replan_every": 4,
            "objective": "shaped",
            "risk_floor": 0.005,
        },
        "eval": {"n_seeds": 1, "n_eval_trajectories": 2, "label": "tiny"},
    }
    return write_json(tmp_path / "run.json", cfg)


class TestSolve:
    def test_risky_chain_solve(self, tmp_path, capsys):
        out = tmp_path / "table.json"
        code = main(["solve", "--config", str(CONFIG_DIR / "risky_chain_solve.json"), "--out", str(out)])
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "residual" in printed
        payload = json.loads(out.read_text())
        assert payload["residual"] <= 1e-8
        assert len(payload["values"]) == 3

    def test_refuses_existing_output_without_force(self, tmp_path):
        out = tmp_path / "table.json"
        out.write_text("occupied")
        code = main(["solve", "--config", str(CONFIG_DIR / "risky_chain_solve.json"), "--out", str(out)])
        assert code == EXIT_IO
        assert out.read_text() == "occupied"

    def test_force_overwrites(self, tmp_path):
        out = tmp_path / "table.json"
        out.write_text("occupied")
        code = main([
            "solve", "--config", str(CONFIG_DIR / "risky_chain_solve.json"),
            "--out", str(out), "--force",
        ])
        assert code == EXIT_OK


class TestConfigErrors:
    def test_malformed_json_reports_position(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema_version": "1",\n  "fixture": }')
        code = main(["solve", "--config", str(bad), "--out", str(tmp_path / "o.json")])
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "line 2" in err and "column" in err

    def test_unknown_keys_rejected(self, tmp_path, capsys):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "schema_version": "1",
                "fixture": "risky-chain",
                "reshape_n": 1.0,
                "z_grid": {"type": "integer"},
                "surprise": 1,
            },
        )
        code = main(["solve", "--config", cfg, "--out", str(tmp_path / "o.json")])
        assert code == EXIT_CONFIG
        assert "surprise" in capsys.readouterr().err

    def test_wrong_schema_version(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"schema_version": "0"})
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o.json")]) == EXIT_CONFIG


class TestVerify:
    def test_t2b_passes(self, capsys):
        code = main(["verify", "t2b", "--config", str(CONFIG_DIR / "verify.json")])
        assert code == EXIT_OK
        assert "t2b: PASS" in capsys.readouterr().out

    def test_t3_random_policy_negative_control_fails(self, tmp_path, capsys):
        cfg = write_json(
            tmp_path / "v.json",
            {
                "schema_version": "1",
                "t3": {
                    "fixtures": ["risky-chain"],
                    "episodes": 200,
                    "seed": 5,
                    "policy": "random",
                },
            },
        )
        code = main(["verify", "t3", "--config", cfg])
        assert code == EXIT_VERIFY
        assert "FAIL" in capsys.readouterr().out


class TestRun:
    def test_dry_run_validates_without_outputs(self, tiny_run_config, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(["run", "--config", tiny_run_config, "--out", str(out_dir), "--dry-run"])
        assert code == EXIT_OK
        assert "dry run ok" in capsys.readouterr().out
        assert not out_dir.exists()

    def test_run_writes_results_and_manifest(self, tiny_run_config, tmp_path):
        out_dir = tmp_path / "out"
        code = main(["run", "--config", tiny_run_config, "--out", str(out_dir)])
        assert code == EXIT_OK
        assert (out_dir / "results.csv").exists()
        assert (out_dir / "results.json").exists()
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["master_seed"] == 3
        assert "config_sha256" in manifest
        assert not (out_dir / "FAILED").exists()

    def test_same_config_twice_identical_csv(self, tiny_run_config, tmp_path):
        d1, d2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["run", "--config", tiny_run_config, "--out", str(d1)]) == EXIT_OK
        assert main(["run", "--config", tiny_run_config, "--out", str(d2)]) == EXIT_OK
        assert (d1 / "results.csv").read_bytes() == (d2 / "results.csv").read_bytes()

    def test_jobs_flag_preserves_output(self, tiny_run_config, tmp_path):
        d1, d2 = tmp_path / "j1", tmp_path / "j4"
        assert main(["run", "--config", tiny_run_config, "--out", str(d1)]) == EXIT_OK
        assert main(["run", "--config", tiny_run_config, "--out", str(d2), "--jobs", "4"]) == EXIT_OK
        assert (d1 / "results.csv").read_bytes() == (d2 / "results.csv").read_bytes()


class TestFailureMarker:
    def test_failed_marker_written_on_runtime_error(self, tmp_path):
        cfg = write_json(
            tmp_path / "bad_agent.json",
            {
                "schema_version": "1",
                "master_seed": 0,
                "environment": {"type": "pendulum", "horizon": 10},
                "saute": {"budget_d": 30.0, "gamma_l": 1.0, "reshape_n": 200.0},
                "agent": {"type": "tabular-q", "episodes": 10, "z_grid": {"type": "integer"}},
                "eval": {"n_seeds": 1, "n_eval_trajectories": 1},
            },
        )
        out_dir = tmp_path / "out"
        code = main(["run", "--config", cfg, "--out", str(out_dir)])
        assert code == EXIT_CONFIG  # pendulum has no discrete state index
        assert (out_dir / "FAILED").exists()


class TestExport:
    def test_round_trip_json_to_csv(self, tiny_run_config, tmp_path):
        out_dir = tmp_path / "out"
        main(["run", "--config", tiny_run_config, "--out", str(out_dir)])
        exported = tmp_path / "again.csv"
        code = main([
            "export", "--results", str(out_dir / "results.json"),
            "--format", "csv", "--out", str(exported),
        ])
        assert code == EXIT_OK
        assert exported.read_bytes() == (out_dir / "results.csv").read_bytes()
