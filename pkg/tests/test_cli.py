import json

import pytest

from zyglab.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, build_config, main
from zyglab.errors import ConfigurationError
from zyglab.experiments import EXPERIMENTS, BmoNormConfig, CalderonRunConfig, list_experiments

# one key per experiment that no run can satisfy
FAILING = {
    "plancherel": "tol = -1",
    "equivalence": "ratio_min = 100",
    "calderon": "ratio_min = 0.9",
    "almost-orth": "slope_max = -100",
    "ap-char": "char_max = 0.5",
    "bmo-norm": "osc_tol = -1",
    "jn-tail": "r2_min = 1.5",
    "exp-log": "target = 0.5",
    "counterexample": "",
    "lower-bound": "floor_min = 1e9",
    "upper-sweep": "spread_limit = 0.5",
}


def write_ini(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    names = [line.split()[0] for line in out.strip().splitlines()[1:]]
    assert len(names) >= 11
    assert "lower-bound" in names and "calderon" in names
    assert set(names) == set(EXPERIMENTS) == {n for n, _, _ in list_experiments()}


def test_unknown_experiment(capsys):
    assert main(["no-such-thing"]) == EXIT_USAGE
    assert "unknown experiment" in capsys.readouterr().err


def test_bad_flag_is_usage_error(capsys):
    assert main(["plancherel", "--seed", "x"]) == EXIT_USAGE


def test_config_errors(tmp_path, capsys):
    out = str(tmp_path / "o")
    bad_key = write_ini(tmp_path, "[bmo-norm]\nsides = 3\n")
    assert main(["bmo-norm", "--config", bad_key, "--out", out]) == EXIT_USAGE
    bad_val = write_ini(tmp_path, "[bmo-norm]\nn = many\n", "v.ini")
    assert main(["bmo-norm", "--config", bad_val, "--out", out]) == EXIT_USAGE
    assert main(["bmo-norm", "--config", str(tmp_path / "missing.ini"), "--out", out]) == EXIT_USAGE
    assert "configuration error" in capsys.readouterr().err


def test_build_config_coercion():
    cfg = build_config(BmoNormConfig, {"a_values": "4", "n": "32", "osc_tol": "0.05", "b": " x1 "})
    assert cfg.a_values == (4.0,) and cfg.n == 32 and cfg.osc_tol == 0.05 and cfg.b == "x1"
    cfg = build_config(CalderonRunConfig, {"policy": "center", "N_max": "3"})
    assert cfg.policy == "center" and cfg.N_max == 3
    assert build_config(BmoNormConfig, None) == BmoNormConfig()
    with pytest.raises(ConfigurationError):
        build_config(BmoNormConfig, {"n": "1.5"})


def test_bmo_norm_a4(tmp_path):
    ini = write_ini(tmp_path, "[bmo-norm]\na_values = 4\n")
    assert main(["bmo-norm", "--config", ini, "--out", str(tmp_path / "o")]) == EXIT_OK
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["metrics"]["means"] == pytest.approx([6.0], rel=0.01)
    assert rep["metrics"]["oscillations"] == pytest.approx([1.0], rel=0.02)
    assert (tmp_path / "o" / "summary.txt").read_text().startswith("bmo-norm: PASS")
    assert (tmp_path / "o" / "curves" / "oscillation.csv").exists()


def test_plancherel_zero_field(tmp_path):
    ini = write_ini(tmp_path, "[plancherel]\nzero = true\nsamples = 3\n")
    assert main(["plancherel", "--small", "--config", ini, "--out", str(tmp_path / "o")]) == EXIT_OK
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["metrics"]["max_relative_error"] == 0.0


def test_run_section_sets_seed_and_out(tmp_path):
    out = tmp_path / "from_ini"
    ini = write_ini(tmp_path, f"[run]\nseed = 5\nout = {out}\n[plancherel]\nsamples = 2\n")
    assert main(["plancherel", "--small", "--config", ini]) == EXIT_OK
    assert json.loads((out / "report.json").read_text())["meta"]["seed"] == 5


@pytest.mark.parametrize("name", ["plancherel", "calderon", "upper-sweep"])
def test_rerun_is_byte_identical(tmp_path, name):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main([name, "--small", "--seed", "3", "--out", str(d)]) == EXIT_OK
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    for csv in (a / "curves").iterdir():
        assert csv.read_bytes() == (b / "curves" / csv.name).read_bytes()


@pytest.mark.parametrize("name", sorted(FAILING))
def test_failing_tolerance_exits_one(tmp_path, capsys, name):
    ini = write_ini(tmp_path, f"[{name}]\n{FAILING[name]}\n")
    assert main([name, "--small", "--config", ini, "--out", str(tmp_path / "o")]) == EXIT_FAIL
    err = capsys.readouterr().err
    assert "failing checks:" in err
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert not all(rep["checks"].values())
