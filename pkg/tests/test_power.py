import json
import math

import numpy as np
import pytest

from gerrysim import (AsymptoticFit, cfmp_p_value, ChainConfig, OutlierTestConfig, PowerExperiment, PowerReport,
                      fit_power_curve, power_analysis, run_neutral_chain, seed_plan, sweep,
                      wilson_interval)
from gerrysim.chains import EnsembleLog
from gerrysim.power import (ConvergenceError, asymptotic_power, read_sweep_csv, write_fit_json,
                            write_sweep_csv)


def curve_points(a, b, c, ks):
    return [(k, float(asymptotic_power(k / 1000, a, b, c))) for k in ks]


@pytest.fixture(scope="module")
def neutral(grid6):
    start = seed_plan(grid6, 4, 0.1, np.random.default_rng(0))
    return run_neutral_chain(grid6, start, ChainConfig("recom", 0.1, 5, step_budget=60))


def test_fit_recovers_parameters():
    ks = np.linspace(1000, 200_000, 20)
    fit = fit_power_curve(curve_points(0.8, 0.1, 0.02, ks))
    for got, want in [(fit.a, 0.8), (fit.b, 0.1), (fit.c_rate, 0.02)]:
        assert abs(got - want) / want < 1e-6
    assert fit.residual < 1e-6
    assert not fit.degenerate


@pytest.mark.parametrize("a,b,c", [(0.95, 0.0, 0.5), (0.3, 0.29, 0.01), (0.6, 0.05, 3.0)])
def test_fit_other_shapes(a, b, c):
    ks = np.geomspace(200, 200_000, 15)
    fit = fit_power_curve(curve_points(a, b, c, ks))
    assert fit(ks) == pytest.approx([p for _, p in curve_points(a, b, c, ks)], abs=1e-7)


def test_fit_degenerate():
    fit = fit_power_curve([(1000, 0.5), (2000, 0.5), (5000, 0.5)])
    assert fit.a == fit.b == 0.5 and fit.degenerate
    assert fit.to_dict()["c_rate"] is None


def test_fit_json_step_data(tmp_path):
    # a step-shaped sweep fits to a near-vertical curve; the JSON must still be plain
    fit = fit_power_curve([(200, 0.1), (500, 0.1), (1000, 0.275), (2000, 0.275)])
    write_fit_json(fit, tmp_path / "f.json")
    back = json.loads((tmp_path / "f.json").read_text())
    assert set(back) >= {"a", "b", "c_rate", "k_near_max", "residual", "degenerate"}
    assert isinstance(back["degenerate"], bool)


def test_fit_input_checks():
    with pytest.raises(ValueError):
        fit_power_curve([(1000, 0.1), (1000, 0.2), (2000, 0.3)])
    with pytest.raises(ValueError):
        fit_power_curve([(1000, 0.1), (2000, 1.2), (3000, 0.3)])


def test_fit_non_convergence():
    ks = np.linspace(1000, 200_000, 20)
    with pytest.raises(ConvergenceError):
        fit_power_curve(curve_points(0.8, 0.1, 0.02, ks) + [(5000, 0.9)], max_iter=1, rtol=0)


def test_k_near_max():
    fit = AsymptoticFit(0.79, 0.1, 0.02, 0.0)
    x = fit.x_near_max
    assert fit(x * 1000) == pytest.approx(0.78, abs=1e-12)
    assert fit.k_near_max == pytest.approx(1000 * math.log(0.69 / 0.01) / 0.02)


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0 and 0.03 < hi < 0.04
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and lo == pytest.approx(1 - hi)


def test_report_from_counts():
    test = OutlierTestConfig("mean_median", "D", 0.05, 0.002, 32, 2000)
    counts = np.zeros((3, 32), dtype=int)
    counts[0] = 2000          # every trajectory flagged
    counts[1, :20] = 1997     # flagged at eps=0.002 (> 1996) but not at 0.001 (> 1998)
    counts[2, :15] = 2000
    rep = PowerReport.from_counts(counts, test)
    assert rep.detections == 2 and rep.rate == pytest.approx(2 / 3)
    assert rep.ci_lo <= rep.rate <= rep.ci_hi
    assert rep.p_values[0] == pytest.approx(cfmp_p_value(32, 32, 0.002, 0.05))
    tighter = rep.at_epsilon(0.001)
    assert tighter.detections == 1
    assert tighter.p_values[0] == pytest.approx(math.exp(-25.6 / 3))


def test_power_analysis_neutral(grid6, neutral):
    test = OutlierTestConfig("partisan_gini", "D", 0.05, 0.001, 4, 2000)
    rep = power_analysis(PowerExperiment(grid6, neutral, test, n=10), np.random.default_rng(0))
    assert rep.n == 10 and len(set(rep.sample_steps)) == 10
    assert 0 <= rep.rate <= 1 and rep.ci_lo <= rep.rate <= rep.ci_hi
    assert rep.counts.shape == (10, 4)


def test_power_analysis_too_small(grid6, neutral):
    test = OutlierTestConfig(k=2000)
    with pytest.raises(ValueError):
        power_analysis(PowerExperiment(grid6, neutral, test, n=1000), np.random.default_rng(0))


def test_power_analysis_single_extreme_map(grid6):
    # a one-map "ensemble" whose plan admits no flip: trajectory labels tie with the
    # start, so nothing is strictly below it and nothing is flagged
    start = seed_plan(grid6, 9, 0.0, np.random.default_rng(1))
    log = EnsembleLog({"d": 9, "pop_tolerance": 0.0})
    log.append(0, start.assignment, {})
    test = OutlierTestConfig("mean_median", "D", 0.05, 0.001, 4, 2000)
    rep = power_analysis(PowerExperiment(grid6, log, test, n=1), np.random.default_rng(0))
    assert rep.detections == 0 and rep.counts.sum() == 0


def test_sweep_skips_invalid_points(grid6, neutral, tmp_path):
    base = PowerExperiment(grid6, neutral, OutlierTestConfig("mean_median", "D", 0.05, 0.001, 2, 2000), n=3)
    grid = {"epsilon": [0.001, 0.03], "k": [2000, 500], "metric": ["mean_median", "safe_seats"]}
    res = sweep(grid, base, master_seed=9)
    assert len(res.rows) == 2 and len(res.skipped) == 6
    assert all("reason" in s for s in res.skipped)
    again = sweep(grid, base, master_seed=9)
    assert again.rows == res.rows
    write_sweep_csv(res.rows, tmp_path / "s.csv")
    back = read_sweep_csv(tmp_path / "s.csv")
    for row, orig in zip(back, res.rows):
        for key in ("metric", "k", "epsilon", "detections", "rate", "ci_lo", "mean_p"):
            assert row[key] == orig[key]


def test_sweep_unknown_axis(grid6, neutral):
    base = PowerExperiment(grid6, neutral, OutlierTestConfig(k=2000), n=2)
    with pytest.raises(ValueError):
        sweep({"beta": [1]}, base)
