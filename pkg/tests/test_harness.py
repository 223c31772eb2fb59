import json
import math

import numpy as np
import pytest

from bogodyn import cli, report
from bogodyn.config import DEFAULTS, load_config, parse_override
from bogodyn.errors import ConfigError
from bogodyn.sweep import fit_rate, fits_from_records, run_sweep

SMALL = ["basis.kmax=1", "sweep.N=[4,8,16]", "sweep.beta=[0.0]", "sweep.times=[0.5]"]
FROZEN = {4: 6.369746713591435e-4, 8: 1.2168568143280252e-4, 16: 2.6914238934390695e-5}


@pytest.fixture(scope="module")
def small_sweep():
    return run_sweep(load_config(None, SMALL))


def test_defaults_validate():
    cfg = load_config()
    assert cfg.seed == DEFAULTS["seed"]
    assert cfg.n_modes == 5
    assert cfg.cells()[:2] == [(4, 0.0), (8, 0.0)]
    assert cfg.fit_time() == 0.5


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('seed = 7\n[sweep]\nN = [4, 6]\nbeta = [0.1]\ntimes = [0.25, 0.5]\n')
    cfg = load_config(p, ["integrator.nmax=10", "potential.profile=zero"])
    assert cfg.seed == 7 and cfg["integrator"]["nmax"] == 10
    assert cfg["potential"]["profile"] == "zero"
    s = cfg.comparison(6, 0.1)
    assert (s.N, s.beta, s.times, s.profile_params) == (6, 0.1, (0.25, 0.5), {})
    assert parse_override("a.b=[1, 2]") == {"a": {"b": [1, 2]}}


@pytest.mark.parametrize("override", [
    "sweep.bogus=1", "sweep.N=[1]", "sweep.beta=[0.5]", "sweep.times=[0.123]",
    "integrator.hartree_scheme=euler", "basis.kmax=1.5", "sweep.fit_time=0.3",
    "run.workers=0", "sweep.N=[]", "integrator.fock_dt=-1", "initial.excitation=thermal",
])
def test_config_rejects_invalid(override):
    with pytest.raises(ConfigError):
        load_config(None, [override])


def test_config_errors_on_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[sweep\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        parse_override("no-equals-sign")


def test_fit_rate_exact_power_law():
    f = fit_rate([(n, 3 * n ** -0.5) for n in (4, 8, 16, 32)], beta=0.0)
    assert f.slope == pytest.approx(-0.5, abs=1e-12)
    assert f.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert f.residual <= 1e-12
    assert f.reference_slope == -0.5 and f.slope_gap == pytest.approx(0, abs=1e-12)


def test_fit_rate_constant_and_jitter():
    assert fit_rate([(n, 0.01) for n in (4, 8, 16)], 0.2).slope == pytest.approx(0, abs=1e-12)
    rng = np.random.default_rng(0)
    pts = [(n, n ** -0.3 * (1 + rng.uniform(-0.05, 0.05))) for n in (4, 8, 16, 32, 64)]
    assert fit_rate(pts, 0.2).slope == pytest.approx(-0.3, abs=0.05)


def test_fit_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rate([(4, 1e-3), (8, 1e-4)], 0.0)
    with pytest.raises(ValueError):
        fit_rate([(4, 1e-3), (8, 0.0), (16, 1e-5)], 0.0)
    with pytest.raises(ValueError):
        fit_rate([(4, 1e-3), (8, float("nan")), (16, 1e-5)], 0.0)


def test_sweep_baseline(small_sweep):
    assert len(small_sweep.records) == 3 and len(small_sweep.fits) == 1
    for r in small_sweep.records:
        assert r.status == "ok"
        assert r.error2 == pytest.approx(FROZEN[r.N], rel=1e-6)
    assert small_sweep.fits[0].slope < 0


def test_emit_report(small_sweep, tmp_path):
    paths = report.emit_report(small_sweep.records, small_sweep.fits, tmp_path / "o", "run")
    assert sorted(p.name for p in paths.values()) == ["run_plot.json", "run_records.csv",
                                                      "run_records.jsonl"]
    lines = paths["csv"].read_text().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1].split(",") == report.RECORD_FIELDS
    rows = [json.loads(x) for x in paths["jsonl"].read_text().splitlines()]
    assert len(rows) == 3 and all(r["schema_version"] == 1 for r in rows)
    plot = json.loads(paths["plot"].read_text())
    assert plot["fits"][0]["slope"] == small_sweep.fits[0].slope
    assert plot["n_series"][0]["N"] == [4, 8, 16]
    with pytest.raises(ValueError):
        report.emit_report([], [], tmp_path / "e")


def test_csv_reingest_reproduces_fits(small_sweep, tmp_path):
    path = tmp_path / "r.csv"
    report.write_records_csv(small_sweep.records, path)
    back = report.read_records_csv(path)
    assert [r.as_dict() for r in back] == [r.as_dict() for r in small_sweep.records]
    f = fits_from_records(back, 0.5)[0]
    assert f.slope == small_sweep.fits[0].slope and f.intercept == small_sweep.fits[0].intercept
    (tmp_path / "x.csv").write_text("N,error2\n")
    with pytest.raises(ValueError):
        report.read_records_csv(tmp_path / "x.csv")


def test_sweep_is_deterministic(small_sweep, tmp_path):
    again = run_sweep(load_config(None, SMALL))
    report.write_records_csv(small_sweep.records, tmp_path / "a.csv")
    report.write_records_csv(again.records, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_parallel_matches_serial(small_sweep):
    par = run_sweep(load_config(None, SMALL), workers=2)
    assert [r.as_dict() for r in par.records] == [r.as_dict() for r in small_sweep.records]


def test_budget_skip_is_isolated():
    res = run_sweep(load_config(None, SMALL[:1] + ["sweep.N=[4,8,16,200]", "sweep.beta=[0.0]",
                                                   "sweep.times=[0.5]", "budget.sector=2000"]))
    status = {r.N: r.status for r in res.records}
    assert status[200].startswith("skipped")
    assert all(status[n] == "ok" for n in (4, 8, 16))
    assert res.n_skipped == 1 and res.n_ok == 3 and len(res.fits) == 1


def test_cli_sweep_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "s"
    assert cli.main(["sweep", "--out", str(out)] + sum((["--set", s] for s in SMALL), [])) == 0
    assert (out / "bogodyn_records.csv").exists()
    assert "slope" in capsys.readouterr().out
    args = ["sweep", "--out", str(out), "--set", "sweep.N=[4,8,16,200]", "--set", "budget.sector=2000"]
    assert cli.main(args + ["--set", "basis.kmax=1", "--set", "sweep.beta=[0.0]",
                            "--set", "sweep.times=[0.5]"]) == 2
    assert cli.main(["sweep", "--set", "sweep.bogus=1"]) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_cli_single_cell_commands(tmp_path, capsys):
    common = ["--out", str(tmp_path), "--set", "basis.kmax=1", "--set", "sweep.times=[0.1]"]
    assert cli.main(["hartree", "--N", "4"] + common) == 0
    assert (tmp_path / "bogodyn_hartree.csv").exists()
    assert cli.main(["bogoliubov", "--backend", "pair"] + common) == 0
    assert cli.main(["bogoliubov", "--backend", "fock"] + common) == 0
    assert (tmp_path / "bogodyn_fock.npz").exists()
    assert cli.main(["nbody-compare", "--N", "4", "--beta", "0.1"] + common) == 0
    assert (tmp_path / "bogodyn_compare_records.csv").exists()
    assert cli.main(["nbody-compare", "--N", "4", "--beta", "0.7"] + common) == 1


def test_cli_checks(capsys):
    assert cli.main(["gse-check", "--set", "gse.draws=20"]) == 0
    assert "0 violations" in capsys.readouterr().out


def test_cli_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5
