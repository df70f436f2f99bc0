import json

import pytest

from careloop.cli import main
from careloop.reference import constant_scenario, fever_scenario


@pytest.fixture
def files(tmp_path):
    good = tmp_path / "fog.json"
    good.write_text(json.dumps(constant_scenario(duration_ms=20_000)))
    cloud = tmp_path / "cloud.json"
    cloud.write_text(json.dumps(constant_scenario("apaas", duration_ms=20_000)))
    bad = fever_scenario()
    bad["duration_ms"] = 0
    bad["associations"].append({"element": "p1", "sensor": "ghost"})
    invalid = tmp_path / "bad.json"
    invalid.write_text(json.dumps(bad))
    return tmp_path, good, cloud, invalid


def test_validate(files, capsys):
    _, good, _, invalid = files
    assert main(["validate", str(good)]) == 0
    assert main(["validate", str(invalid)]) == 1
    err = capsys.readouterr().err
    assert "ghost" in err and "duration_ms" in err


def test_run_text(files, capsys):
    _, good, _, _ = files
    assert main(["run", str(good)]) == 0
    assert "mean decision latency" in capsys.readouterr().out


def test_run_json_to_file(files, capsys):
    tmp, good, _, _ = files
    out, log = tmp / "r.json", tmp / "events.log"
    assert main(["run", str(good), "--format", "json", "--out", str(out), "--log", str(log)]) == 0
    assert capsys.readouterr().out == ""
    rep = json.loads(out.read_text())
    assert rep["name"] == "constant-fog"
    lines = log.read_text().splitlines()
    assert all(len(l.split("|")) == 4 for l in lines)
    assert main(["report", str(out), "--format", "text"]) == 0
    assert "constant-fog" in capsys.readouterr().out


def test_follow_streams_notifications(files, capsys):
    _, good, _, _ = files
    assert main(["run", str(good), "--follow"]) == 0
    assert "doctor <- p1 v1" in capsys.readouterr().err


def test_unknown_format(files, capsys):
    _, good, _, _ = files
    assert main(["run", str(good), "--format", "xml"]) == 1
    assert "unknown report format" in capsys.readouterr().err


def test_compare_scenarios_and_reports(files, capsys):
    tmp, good, cloud, _ = files
    assert main(["compare", str(good), str(cloud), "--format", "json"]) == 0
    diff = json.loads(capsys.readouterr().out)
    assert diff["same_insights"] is True
    out = tmp / "r.json"
    main(["run", str(good), "--format", "json", "--out", str(out)])
    assert main(["compare", str(out), str(good)]) == 0
    assert "insights identical: True" in capsys.readouterr().out


def test_missing_file(capsys):
    assert main(["run", "/nonexistent/x.json"]) == 1


def test_invariant_violation_exit_code(files, monkeypatch, capsys):
    from careloop import simulation
    from careloop.errors import InvariantViolation

    def boom(sim, report):
        raise InvariantViolation("bytes do not add up")
    monkeypatch.setattr(simulation, "check_invariants", boom)
    _, good, _, _ = files
    assert main(["run", str(good)]) == 2
    assert "bytes do not add up" in capsys.readouterr().err
