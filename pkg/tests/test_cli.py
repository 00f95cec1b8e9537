"""CLI surface: subcommands, outputs, exit codes."""

import json

import pytest

from qmip import cli, files, fixtures


@pytest.fixture(scope="module")
def fdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixtures")
    fixtures.generate_all(d)
    return d


def run_cli(capsys, *args) -> tuple[int, str, str]:
    code = cli.main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_always(fdir, capsys):
    code, out, _ = run_cli(capsys, "simulate", str(fdir / "always.json"))
    assert code == 0
    assert "p_acc = 1.000000000000" in out


def test_simulate_optimal_shared(fdir, capsys):
    code, out, _ = run_cli(capsys, "simulate", str(fdir / "rw_good.json"),
                           "--optimal-shared")
    assert code == 0
    assert "p_acc = 0.500000000000" in out


def test_simulate_missing_register_error(fdir, tmp_path, capsys):
    data = json.loads((fdir / "guess.json").read_text())
    data["output_qubit"] = ["NOPE", 0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    code, _, err = run_cli(capsys, "simulate", str(bad))
    assert code == 2
    assert "error" in err


def test_transform_and_report(fdir, tmp_path, capsys):
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(capsys, "transform", str(fdir / "good.json"),
                           "--pass", "rewindable", "--out", str(out_dir))
    assert code == 0
    assert "(1, 2) -> (1, 2)" in out
    produced = files.load(out_dir / "good.rewindable.json")
    assert produced.meta.claimed_completeness == 0.5
    report = json.loads((out_dir / "good.rewindable.report.json").read_text())
    assert report["transform"] == "rewindable"


def test_transform_precondition_exit_code(fdir, tmp_path, capsys):
    code, _, err = run_cli(capsys, "transform", str(fdir / "good.json"),
                           "--pass", "halve", "--out", str(tmp_path))
    assert code == 3
    assert "4m+1" in err


def test_transform_no_verify_on_no_instance(fdir, tmp_path, capsys):
    code, out, _ = run_cli(capsys, "transform", str(fdir / "five_turn_no.json"),
                           "--pass", "halve", "--out", str(tmp_path))
    assert code == 0  # role = no disables honest verification automatically


def test_audit_consistent_verdict(fdir, capsys):
    code, out, _ = run_cli(capsys, "audit", str(fdir / "guess.json"),
                           "--restarts", "3", "--dims", "1")
    assert code == 0
    assert "CONSISTENT" in out
    assert "no strategy found exceeding" in out


def test_audit_grid_method(fdir, capsys):
    code, out, _ = run_cli(capsys, "audit", str(fdir / "always.json"),
                           "--method", "grid")
    assert code == 0
    assert "1.000000000000" in out


def test_audit_strategy_file_feeds_simulate(fdir, tmp_path, capsys):
    strat = tmp_path / "strat.json"
    code, out, _ = run_cli(capsys, "audit", str(fdir / "chsh.json"),
                           "--restarts", "6", "--dims", "1,1",
                           "--out-strategy", str(strat))
    assert code == 0
    code, out, _ = run_cli(capsys, "simulate", str(fdir / "chsh.json"),
                           "--strategy", str(strat))
    assert code == 0
    assert "p_acc = 0.8535" in out


def test_pipeline_aborts_on_zero_gap(fdir, tmp_path, capsys):
    code, _, err = run_cli(capsys, "pipeline", str(fdir / "good.json"),
                           "--out", str(tmp_path))
    assert code == 3
    assert "stage rewindable" in err
    assert "gap" in err


def test_fixtures_verify(fdir, capsys):
    code, out, _ = run_cli(capsys, "fixtures", "verify", "--dir", str(fdir))
    assert code == 0
    assert "verified" in out


def test_fixtures_verify_detects_tampering(fdir, tmp_path, capsys):
    import shutil
    d = tmp_path / "tampered"
    shutil.copytree(fdir, d)
    p = d / "always.json"
    p.write_text(p.read_text().replace(" ", "  ", 1))
    code, out, _ = run_cli(capsys, "fixtures", "verify", "--dir", str(d))
    assert code == 5
    assert "digest mismatch" in out


def test_records_are_json_lines(fdir, capsys):
    code, out, _ = run_cli(capsys, "simulate", str(fdir / "never.json"))
    line = [l for l in out.splitlines() if l.startswith("{")][-1]
    rec = json.loads(line)
    assert rec["command"] == "simulate"
    assert rec["acceptance"] == 0.0
