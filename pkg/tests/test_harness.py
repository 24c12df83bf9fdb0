import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttdbeam import checks, cli
from ttdbeam.config import ConfigurationError, desk_config
from ttdbeam.harness import (
    CSV_FIELDS,
    ExperimentSpec,
    ResultRecord,
    gain_map,
    parse_records,
    read_records,
    records_to_csv,
    run_experiment,
    summarize,
    trial_seed,
    write_gain_map,
)


def _spec(**kw):
    base = dict(base=desk_config(), schemes=["HTS_PNF", "CF"], n_trials=2, master_seed=5)
    base.update(kw)
    return ExperimentSpec(**base)


# -- seeds and specs --------------------------------------------------------------------


def test_trial_seed_stable_and_distinct():
    assert trial_seed(0, 0) == trial_seed(0, 0)
    seeds = {trial_seed(0, t) for t in range(100)}
    assert len(seeds) == 100
    assert trial_seed(1, 0) != trial_seed(0, 1)
    assert 0 <= trial_seed(7, 3) < 2**64


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        _spec(sweep_variable="antennas", sweep_values=[1])
    with pytest.raises(ConfigurationError):
        _spec(n_trials=0)
    with pytest.raises(ConfigurationError):
        _spec(sweep_variable="n_ttd", sweep_values=[3])  # 64 not divisible by 3
    with pytest.raises(ValueError):
        _spec(schemes=["Magic"])
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"trials": 3})


def test_spec_json_round_trip():
    spec = _spec(sweep_variable="n_ttd", sweep_values=[2, 4])
    back = ExperimentSpec.from_json(spec.to_json())
    assert back.to_dict() == spec.to_dict()


def test_bandwidth_sweep_keeps_snr():
    spec = _spec(sweep_variable="bandwidth", sweep_values=[5e9, 20e9])
    a, b = spec.config_for(5e9), spec.config_for(20e9)
    assert a.tx_power / a.noise_var == pytest.approx(b.tx_power / b.noise_var, rel=1e-12)
    assert b.tx_power == pytest.approx(2.0)


# -- runs ---------------------------------------------------------------------------------


def test_one_record_per_scheme_seed_value():
    spec = _spec(sweep_variable="tx_power", sweep_values=[0.1, 1.0])
    recs = run_experiment(spec)
    keys = {(r.scheme, r.seed, r.sweep_value) for r in recs}
    assert len(recs) == len(keys) == 2 * 2 * 2
    assert all(r.converged and np.isfinite(r.spectral_efficiency) for r in recs)


def test_determinism_excluding_timing():
    spec = _spec()
    a = records_to_csv(run_experiment(spec), include_timing=False)
    b = records_to_csv(run_experiment(spec), include_timing=False)
    assert a == b


def test_adding_trials_keeps_earlier_trials():
    small = run_experiment(_spec(n_trials=1, schemes=["CF"]))
    large = run_experiment(_spec(n_trials=3, schemes=["CF"]))
    assert any(small[0].same_result(r) for r in large)


def test_failures_are_recorded_and_sweep_continues(monkeypatch):
    from ttdbeam import harness

    real = harness.run_scheme

    def flaky(scheme, *a, **k):
        if scheme.value == "CF":
            raise RuntimeError("boom")
        return real(scheme, *a, **k)

    monkeypatch.setattr(harness, "run_scheme", flaky)
    recs = run_experiment(_spec(n_trials=1))
    cf = [r for r in recs if r.scheme == "CF"][0]
    pnf = [r for r in recs if r.scheme == "HTS_PNF"][0]
    assert math.isnan(cf.spectral_efficiency) and not cf.converged
    assert pnf.converged and np.isfinite(pnf.spectral_efficiency)


def test_summary_means():
    recs = [
        ResultRecord("CF", 1, "none", None, 2.0, 1.0, 3, 0.1, True),
        ResultRecord("CF", 2, "none", None, 4.0, 3.0, 3, 0.1, True),
        ResultRecord("CF", 3, "none", None, float("nan"), float("nan"), 0, 0.1, False),
    ]
    s = summarize(recs)[("CF", None)]
    assert s["se"] == 3.0 and s["ee"] == 2.0 and s["n"] == 3


# -- CSV ----------------------------------------------------------------------------------

_finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
_records = st.builds(
    ResultRecord,
    scheme=st.sampled_from(["FDA_Full", "CF", "OptimalDigital"]),
    seed=st.integers(0, 2**64 - 1),
    sweep_variable=st.sampled_from(["none", "tx_power", "n_ttd"]),
    sweep_value=st.one_of(st.none(), _finite),
    spectral_efficiency=st.one_of(_finite, st.just(float("nan"))),
    energy_efficiency=_finite,
    iterations=st.integers(0, 10_000),
    wall_time_s=st.floats(0, 1e4),
    converged=st.booleans(),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(_records, max_size=5))
def test_csv_round_trip(records):
    back = parse_records(records_to_csv(records))
    assert len(back) == len(records)
    for a, b in zip(records, back):
        assert a.same_result(b)
        assert a.wall_time_s == b.wall_time_s


def test_csv_header():
    assert records_to_csv([]).strip().split(",") == list(CSV_FIELDS)
    assert "wall_time_s" not in records_to_csv([], include_timing=False)


# -- gain maps ----------------------------------------------------------------------------


def test_gain_map_grid_and_cf_peak(tmp_path):
    cfg = desk_config()
    rows = gain_map("CF", 1.0, 8.0, cfg, n_points=11)
    assert rows[0][0] == pytest.approx(cfg.freqs[0]) and rows[-1][0] == pytest.approx(cfg.freqs[-1])
    center = gain_map("CF", 1.0, 8.0, cfg, n_points=1)
    assert center[0][3] == pytest.approx(1.0)
    path = tmp_path / "g.csv"
    write_gain_map(rows, path)
    assert path.read_text().splitlines()[0] == "f,theta,r,gain"
    with pytest.raises(ValueError):
        gain_map("Nope", 1.0, 8.0, cfg)


def test_gain_map_robust_floor():
    from ttdbeam.config import SystemConfig

    rows = gain_map("Robust", np.pi / 4, 10.0, SystemConfig(n_antennas=256, n_ttd=16), n_points=101)
    assert min(r[3] for r in rows) >= 0.85


# -- check battery --------------------------------------------------------------------------


def test_check_suite_pristine_passes():
    rep = checks.check_suite(verbose=False)
    assert rep.ok, rep.lines()
    assert len(rep.results) == len(checks.CHECKS)


def test_injected_mask_violation_is_named():
    def corrupt(A):
        A = A.copy()
        A[0, -1] = 1.0  # off-support entry
        return A

    rep = checks.check_suite({"design-invariants": lambda: checks.check_design_invariants(corrupt)}, verbose=False)
    assert not rep.ok
    assert rep.failed == ["design-invariants"]
    detail = dict((n, d) for n, _, d in rep.results)["design-invariants"]
    assert "analog-mask" in detail


def test_crashing_check_is_a_failure():
    rep = checks.check_suite({"boom": lambda: 1 / 0}, verbose=False)
    assert rep.failed == ["boom"]


# -- CLI ------------------------------------------------------------------------------------


def _doc(tmp_path, **extra):
    doc = {"config": desk_config().to_dict(), "schemes": ["HTS_PNF"], "n_trials": 1}
    doc.update(extra)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_cli_simulate_writes_csv_and_manifest(tmp_path):
    out = tmp_path / "run.csv"
    rc = cli.main(["simulate", "--config", _doc(tmp_path), "--seed", "3", "--out", str(out),
                   "--scheme", "HTS_PNF,CF"])
    assert rc == 0
    recs = read_records(out)
    assert sorted(r.scheme for r in recs) == ["CF", "HTS_PNF"]
    manifest = json.loads((tmp_path / "run.csv.manifest.json").read_text())
    assert manifest["experiment"]["master_seed"] == 3
    assert "code_version" in manifest


def test_cli_sweep_with_overrides(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = cli.main(["sweep", "--config", _doc(tmp_path), "--out", str(out),
                   "--set", "sweep.variable=n_ttd", "--set", "sweep.values=[2,4]", "--set", "n_trials=2"])
    assert rc == 0
    recs = read_records(out)
    assert sorted({r.sweep_value for r in recs}) == [2.0, 4.0]
    assert len(recs) == 4


def test_cli_same_seed_same_csv(tmp_path):
    paths = []
    for name in ("a.csv", "b.csv"):
        p = tmp_path / name
        cli.main(["sweep", "--config", _doc(tmp_path), "--seed", "9", "--out", str(p)])
        paths.append(p)
    a, b = (records_to_csv(read_records(p), include_timing=False) for p in paths)
    assert a == b


def test_cli_gain_map_and_check(tmp_path, capsys):
    out = tmp_path / "gm.csv"
    assert cli.main(["gain-map", "--scheme", "PNF", "--points", "5", "--out", str(out),
                     "--set", "n_antennas=64", "--set", "n_ttd=4"]) == 0
    assert len(out.read_text().splitlines()) == 6
    assert cli.main(["check"]) == 0
    assert "checks passed" in capsys.readouterr().out


def test_cli_rejects_bad_override(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["simulate", "--set", "novalue"])


def test_apply_overrides_dot_path():
    doc = cli.apply_overrides({}, ["config.n_antennas=128", "fda.rho=10.5", "output=x.csv"])
    assert doc == {"config": {"n_antennas": 128}, "fda": {"rho": 10.5}, "output": "x.csv"}


@pytest.mark.slow
def test_delay_range_sweep_trends():
    values = [0.0, 0.04e-9, 0.08e-9, 0.16e-9, 0.32e-9]
    means = {}
    for arch, scheme in (("fully-connected", "FDA_Full"), ("sub-connected", "FDA_Sub")):
        spec = ExperimentSpec(base=desk_config(architecture=arch), schemes=[scheme], sweep_variable="t_max",
                              sweep_values=values, n_trials=20, master_seed=1)
        s = summarize(run_experiment(spec))
        means[arch] = np.array([s[(scheme, v)]["se"] for v in values])
    full, sub = means["fully-connected"], means["sub-connected"]
    # non-decreasing up to averaging noise
    assert np.all(np.diff(full) >= -0.01 * full[:-1])

    def saturation(se):
        return int(np.argmax(se >= 0.99 * se.max()))

    assert saturation(sub) <= saturation(full)
