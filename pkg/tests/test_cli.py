import os

import pytest

import risjsdm.cli as cli
from risjsdm.errors import SingularityError


def test_run_writes_outputs(tmp_path, capsys):
    code = cli.main(["run", "--trials", "2", "--configs", "2,3", "--out", str(tmp_path), "--quiet"])
    assert code == 0
    assert sorted(os.listdir(tmp_path)) == ["run.csv", "run.manifest.json"]
    assert (tmp_path / "run.csv").read_text().startswith("experiment,parameter,")


def test_sweep_with_values(tmp_path):
    code = cli.main(["sweep", "power", "--values", "10,20", "--configs", "2", "--trials", "2", "--out", str(tmp_path), "--quiet", "--plot"])
    assert code == 0
    assert (tmp_path / "power.gp").exists()
    assert len((tmp_path / "power.csv").read_text().splitlines()) == 3


def test_usage_errors_exit_1(capsys):
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["run", "--trials", "0"]) == 1
    assert cli.main(["sweep", "offset", "--values", "a,b"]) == 1
    assert cli.main([]) == 1


def test_scenario_errors_exit_2(tmp_path, capsys):
    assert cli.main(["run", "--override", "tau=7", "--out", str(tmp_path)]) == 2
    assert cli.main(["run", "--scenario", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2
    assert "scenario error" in capsys.readouterr().err
    assert os.listdir(tmp_path) == []


def test_numerical_failure_exit_3_without_files(tmp_path, monkeypatch, capsys):
    def fail(*a, **k):
        raise SingularityError("group 1 block is singular")

    monkeypatch.setattr(cli, "sweep", fail)
    assert cli.main(["run", "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_validate_passes(capsys):
    assert cli.main(["validate"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 4 and all(line.startswith("PASS") for line in out)


def test_cross_check_lists_links(capsys):
    assert cli.main(["cross-check"]) == 0
    out = capsys.readouterr().out
    for link in cli.REFERENCE_LEVELS:
        assert link in out


def test_version(capsys):
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["--version"])
    assert cli.main(["--version"]) == 0
