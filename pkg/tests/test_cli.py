import json

import pytest

from answipt.cli import (
    ConfigError,
    build_run_config,
    main,
    parse_config,
    parse_power,
    resolved_config,
)
from answipt.config import dbm_to_watts


def run(tmp_path, *args):
    return main(["--out", str(tmp_path / "runs"), *args])


def only_dir(tmp_path, prefix):
    dirs = sorted((tmp_path / "runs").glob(prefix + "-*"))
    assert len(dirs) == 1
    return dirs[0]


def test_defaults():
    rc = parse_config()
    sc = rc.scenario
    assert sc.n_t == 4 and sc.n_users == 3
    assert sc.p_total == pytest.approx(1.0)
    assert sc.e_bar == pytest.approx(dbm_to_watts(8.0))
    assert rc.design == "perfect" and rc.experiment.antennas == (4,)


def test_gamma_in_db():
    assert parse_config(overrides=["gamma_db=8"]).scenario.gamma == pytest.approx(10**0.8)
    assert parse_config(overrides=["scenario.gamma=8 dB"]).scenario.gamma == pytest.approx(10**0.8)
    # later spelling wins; a bare gamma is linear
    assert parse_config(overrides=["gamma_db=8", "gamma=2"]).scenario.gamma == 2.0
    assert parse_config(overrides=["gamma=2", "gamma_db=8"]).scenario.gamma == pytest.approx(10**0.8)


def test_power_units():
    assert parse_power("30 dBm", "k") == pytest.approx(1.0)
    assert parse_power("250mW", "k") == pytest.approx(0.25)
    assert parse_power("0.5 w", "k") == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        parse_power("30", "k")


@pytest.mark.parametrize(
    "override,match",
    [
        ("e_bar=12dBm", "saturation"),
        ("p_total=30", "unit"),
        ("scenario.colour=red", "unknown key"),
        ("nonsense=1", "unknown key"),
        ("eps2=0.01", "ambiguous"),
        ("design=robust", "design"),
        ("n_t=zero", "n_t"),
    ],
)
def test_rejected_overrides(override, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(overrides=[override])


def test_ini_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[scenario]\ngamma_db = 6\np_total = 27 dBm\n[solve]\ndesign = bounded\neps2 = 0.005\n")
    rc = parse_config(ini)
    assert rc.scenario.gamma == pytest.approx(10**0.6)
    assert rc.scenario.p_total == pytest.approx(dbm_to_watts(27.0))
    assert rc.design == "bounded" and rc.eps2 == 0.005


def test_resolved_config_round_trip():
    rc = parse_config(overrides=["gamma_db=6", "solve.design=statistical", "experiment.grid=4,6", "seed=9"])
    res = resolved_config(rc)
    again = build_run_config(res)
    assert again.scenario.gamma == rc.scenario.gamma and again.design == rc.design
    assert again.experiment.grid == rc.experiment.grid and again.seed == 9
    assert resolved_config(again) == res


def test_selftest(tmp_path, capsys):
    assert run(tmp_path, "--command", "selftest") == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS" in out
    d = only_dir(tmp_path, "selftest")
    assert json.loads((d / "manifest.json").read_text())["exit_code"] == 0


def test_solve_twice_is_identical(tmp_path):
    args = ["--command", "solve", "--set", "design=bounded", "--seed", "3"]
    assert run(tmp_path, *args) == 0
    d = only_dir(tmp_path, "solve")
    first = (d / "solution.json").read_text()
    assert run(tmp_path, *args) == 0
    assert only_dir(tmp_path, "solve") == d
    assert (d / "solution.json").read_text() == first
    doc = json.loads(first)
    assert doc["status"] == "optimal" and doc["design"] == "bounded"
    assert (d / "program.txt").read_text().startswith("conic-program 1")


def test_infeasible_exit_code(tmp_path):
    assert run(tmp_path, "--set", "design=statistical", "--set", "gamma_db=12", "--seed", "1") == 1
    doc = json.loads((only_dir(tmp_path, "solve") / "solution.json").read_text())
    assert doc["status"] == "primal_infeasible"


def test_config_error_exit_code(tmp_path, capsys):
    assert run(tmp_path, "--set", "e_bar=12dBm") == 2
    assert "saturation" in capsys.readouterr().err


def test_sweep_and_manifest_replay(tmp_path):
    args = ["--command", "sweep", "--set", "experiment.grid=4,6,8,10,12", "--set", "trials=1", "--workers", "1"]
    assert run(tmp_path, *args) == 0
    d = only_dir(tmp_path, "sweep")
    results = (d / "results.csv").read_text()
    assert len(results.strip().splitlines()) == 1 + 5 * 2
    # replaying the manifest lands in the same directory with identical output
    manifest = d / "manifest.json"
    copy = tmp_path / "replay.json"
    copy.write_text(manifest.read_text())
    (d / "results.csv").unlink()
    assert run(tmp_path, "--config", str(copy), "--workers", "1") == 0
    assert (d / "results.csv").read_text() == results


def test_verify_bounded_solution(tmp_path):
    assert run(tmp_path, "--set", "design=bounded", "--seed", "5") == 0
    sol = only_dir(tmp_path, "solve") / "solution.json"
    code = run(tmp_path, "--command", "verify", "--solution", str(sol), "--set", "n_samples=2000", "--seed", "5")
    assert code == 0
    rep = json.loads((only_dir(tmp_path, "verify") / "verify.json").read_text())
    assert rep["passed"] and rep["robustness"]["violations"] == 0


def test_verify_needs_solution(tmp_path):
    with pytest.raises(SystemExit):
        run(tmp_path, "--command", "verify")
