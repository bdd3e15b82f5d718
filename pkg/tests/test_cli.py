"""
Tests for the command-line entry point
"""
import json

import pytest

from main import EXIT_FAULT, EXIT_OK, EXIT_VALIDATION, build_parser, main


def test_parser_defaults():
    args = build_parser().parse_args(["run"])
    assert args.strategy == "full"
    assert args.jobs == 1
    assert not args.record
    args = build_parser().parse_args(["calibrate", "--oracle-release"])
    assert args.target == pytest.approx(0.99)
    assert args.oracle_release


def test_unknown_strategy_is_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--strategy", "teleport"])


def test_missing_scenario_exits_with_validation_code(tmp_path):
    code = main(["run", "--scenario", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "out")])
    assert code == EXIT_VALIDATION


def test_invalid_scenario_exits_with_validation_code(tmp_path):
    scenario = tmp_path / "bad.toml"
    scenario.write_text("[planner]\nsafety_radius = -1.0\n", encoding="utf-8")
    assert main(["run", "--scenario", str(scenario), "--out", str(tmp_path / "out")]) == EXIT_VALIDATION


def test_dump_defaults(tmp_path):
    target = tmp_path / "defaults.toml"
    assert main(["dump-defaults", str(target)]) == EXIT_OK
    assert target.is_file()


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--strategy", "frozen", "--record", "--out", str(out)]) == EXIT_OK
    for name in ("metrics.jsonl", "trajectory.csv", "cost_reports.jsonl", "summary.json",
                 "summary.txt", "stream.jsonl"):
        assert (out / name).is_file(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["strategy"] == "frozen"
    assert "success: false" in capsys.readouterr().out

    replay_out = tmp_path / "replay"
    assert main(["replay", "--stream", str(out / "stream.jsonl"), "--out", str(replay_out)]) == EXIT_OK
    assert json.loads((replay_out / "summary.json").read_text())["candidates"] > 0


def test_replay_of_missing_stream(tmp_path):
    code = main(["replay", "--stream", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "out")])
    assert code == EXIT_VALIDATION


def test_gradcheck_passes(tmp_path):
    out = tmp_path / "out"
    assert main(["gradcheck", "--trials", "2", "--seed", "4", "--out", str(out)]) == EXIT_OK
    assert (out / "gradcheck.csv").is_file()


def test_internal_errors_exit_with_fault_code(tmp_path, monkeypatch):
    import main as entry

    def boom(args, ledger):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(entry.COMMANDS, "ablate", boom)
    assert main(["ablate", "--out", str(tmp_path / "out")]) == EXIT_FAULT
