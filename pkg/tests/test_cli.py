from __future__ import annotations

import json
from pathlib import Path

import pytest

from app.cli import run_cli
from app.ensemble.trajectory import DivergenceError
from app.services.experiment_service import ExperimentCheckError

TINY_CUSTOM = {
    "preset": "custom",
    "arch": {"kind": "shallow", "hidden_nodes": 3},
    "k": 10,
    "alpha": 0.01,
    "lam": 0.5,
    "n": 4,
    "t_max": 0.2,
    "record_interval": 0.1,
    "n_samples": 2,
}


def _write_config(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def test_parser_requires_a_command() -> None:
    with pytest.raises(SystemExit):
        run_cli.build_parser().parse_args([])


def test_flags_override_config_file(tmp_path: Path) -> None:
    config_path = _write_config(tmp_path / "c.json", {**TINY_CUSTOM, "master_seed": 1})
    args = run_cli.build_parser().parse_args(
        ["run", "--config", str(config_path), "--seed", "9", "--workers", "2", "--scale", "full"]
    )
    config = run_cli.config_from_args(args)
    assert config.master_seed == 9
    assert config.workers == 2
    assert config.scale.value == "full"
    assert config.lam == 0.5


def test_run_from_config_and_rerun_from_manifest(tmp_path: Path, capsys) -> None:
    config_path = _write_config(tmp_path / "c.json", TINY_CUSTOM)
    assert run_cli.main(["run", "--config", str(config_path), "--out", str(tmp_path / "first")]) == run_cli.EXIT_OK
    out = capsys.readouterr().out
    assert "Run complete: preset=custom" in out
    assert "loss.csv" in out

    manifest = tmp_path / "first" / "manifest.json"
    assert run_cli.load_config_file(manifest)["lam"] == 0.5
    assert run_cli.main(["run", "--config", str(manifest), "--out", str(tmp_path / "second")]) == run_cli.EXIT_OK
    for name in ("loss.csv", "delta.csv", "timeseries.csv"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_invalid_config_exits_2(tmp_path: Path, capsys) -> None:
    config_path = _write_config(tmp_path / "bad.json", {"preset": "fig1", "beta": 10.0})
    assert run_cli.main(["run", "--config", str(config_path)]) == run_cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "Invalid configuration" in err
    assert "beta=inf" in err


def test_config_file_must_hold_an_object(tmp_path: Path, capsys) -> None:
    config_path = _write_config(tmp_path / "list.json", [1, 2, 3])
    assert run_cli.main(["run", "--config", str(config_path)]) == run_cli.EXIT_CONFIG
    assert "JSON object" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path: Path) -> None:
    assert run_cli.main(["run", "--config", str(tmp_path / "absent.json")]) == run_cli.EXIT_CONFIG


def test_divergence_exits_3(monkeypatch, capsys) -> None:
    def diverge(*args, **kwargs):
        raise DivergenceError("non-finite loss", trajectory=7, step=12, scaled_time=0.012)

    monkeypatch.setattr(run_cli, "run_experiment", diverge)
    assert run_cli.main(["run", "--preset", "fig1"]) == run_cli.EXIT_DIVERGENCE
    assert "trajectory 7 at step 12" in capsys.readouterr().err


def test_failed_check_exits_4(monkeypatch, capsys) -> None:
    def fail(*args, **kwargs):
        raise ExperimentCheckError(["delta_ordered_by_lam"])

    monkeypatch.setattr(run_cli, "run_experiment", fail)
    assert run_cli.main(["run", "--preset", "fig2", "--check"]) == run_cli.EXIT_CHECK_FAILED
    assert "delta_ordered_by_lam" in capsys.readouterr().err


def test_plot_command(tmp_path: Path, capsys) -> None:
    config_path = _write_config(tmp_path / "c.json", TINY_CUSTOM)
    run_dir = tmp_path / "run"
    assert run_cli.main(["run", "--config", str(config_path), "--out", str(run_dir)]) == run_cli.EXIT_OK

    svg = tmp_path / "w1.svg"
    code = run_cli.main([
        "plot", str(run_dir / "timeseries.csv"), "--y", "evo_mean", "--y", "gd_value",
        "--where", "weight_id=1", "--output", str(svg), "--title", "weight 1",
    ])
    assert code == run_cli.EXIT_OK
    assert svg.is_file()
    assert "Plot written" in capsys.readouterr().out

    assert run_cli.main(["plot", str(run_dir / "loss.csv"), "--y", "gd_loss", "--log-y"]) == run_cli.EXIT_OK
    assert (run_dir / "loss.svg").is_file()


def test_plot_command_errors(tmp_path: Path, capsys) -> None:
    csv_path = tmp_path / "x.csv"
    csv_path.write_text("t,v\n0.0,1.0\n", encoding="utf-8")
    assert run_cli.main(["plot", str(csv_path), "--y", "nope"]) == run_cli.EXIT_CONFIG
    assert "no column" in capsys.readouterr().err
    assert run_cli.main(["plot", str(csv_path), "--y", "v", "--where", "t"]) == run_cli.EXIT_CONFIG
    assert "COLUMN=VALUE" in capsys.readouterr().err
