import math

import numpy as np
import pytest
from scipy import stats

from gibs.errors import EmptySelection, RankDeficient
from gibs.model_tests import (
    alpha_backtest,
    batch_report,
    fit_price_differences,
    half_indicator,
    intercept_test,
    intercept_test_two_step,
    period_grid_run,
    residual_expansion_test,
    risk_premium,
    time_invariance_linear,
    varying_coefficient_test,
)
from gibs.panel import ReturnsPanel, RiskFreeSeries, BasisUniverse
from gibs.selection import GibsConfig
from gibs.synth import (
    SyntheticSpec,
    synthesize_price_world,
)

CFG = GibsConfig(category_threshold=0.35, global_threshold=0.35)


# --- intercept tests ---------------------------------------------------------

def test_intercept_exact_zero_on_noiseless_data():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((80, 3))
    y = X @ np.array([1.0, -0.5, 0.25])
    alpha, _ = intercept_test(y, X)
    assert abs(alpha) < 1e-10


def test_intercept_null_uniform():
    rng = np.random.default_rng(1)
    ps = []
    for _ in range(500):
        X = rng.standard_normal((100, 2))
        y = X @ np.array([0.5, -0.5]) + rng.standard_normal(100)
        ps.append(intercept_test(y, X)[1])
    assert stats.kstest(ps, "uniform").pvalue > 0.01


def test_intercept_power():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((200, 2))
    y = 0.05 + X @ np.array([0.5, -0.5]) + 0.01 * rng.standard_normal(200)
    _, p = intercept_test(y, X)
    assert p < 1e-6


def test_two_step_zero_mean_residuals():
    rng = np.random.default_rng(3)
    v = np.abs(rng.standard_normal((100, 2))) + 1.0
    beta = np.array([1.5, 0.5])
    y = v @ beta  # exact fit, residuals identically zero
    alpha, p = intercept_test_two_step(y, v)
    assert abs(alpha) < 1e-10
    assert p > 0.99


def test_two_step_detects_drift():
    rng = np.random.default_rng(4)
    n = 300
    v = np.column_stack([np.ones(n), np.cumsum(rng.standard_normal(n))])
    y = v @ np.array([2.0, 0.8]) + 0.05 * np.arange(n) / n \
        + 0.01 * rng.standard_normal(n)
    # drift beyond the factor model shows up in the residual mean
    _, p = intercept_test_two_step(y, v[:, 1:])
    assert p < 0.01


def test_two_step_collinear_with_constant():
    # money-market column with rf = 0 is exactly the ones vector
    rng = np.random.default_rng(5)
    n = 200
    mma = np.ones(n)
    other = np.cumsum(rng.standard_normal(n)) + 50.0
    y = 3.0 * mma + 0.5 * other + 0.02 * rng.standard_normal(n)
    alpha, p = intercept_test_two_step(y, np.column_stack([mma, other]))
    assert np.isfinite(alpha) and np.isfinite(p)
    assert 0.0 <= p <= 1.0


def test_two_step_valid_under_null_with_rf_zero():
    # with the money-market column spanning the constant, step 1 absorbs
    # any constant drift, so the test is conservative: never above nominal
    rejections = 0
    trials = 400
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        n = 150
        mma = np.ones(n)
        other = np.cumsum(rng.standard_normal(n)) + 30.0
        y = 2.0 * mma + 0.3 * other + 0.05 * rng.standard_normal(n)
        _, p = intercept_test_two_step(y, np.column_stack([mma, other]))
        assert np.isfinite(p)
        rejections += p < 0.05
    assert rejections / trials <= 0.06


# --- alpha backtest -----------------------------------------------------------

class StubResult:
    def __init__(self, security, alpha, p):
        self.security = security
        self.alpha = alpha
        self.alpha_p_value = p


def stub_panel(values, assets):
    values = np.asarray(values, dtype=float)
    ts = tuple(f"w{i:02d}" for i in range(values.shape[0]))
    return ReturnsPanel(ts, assets, values,
                        np.ones_like(values, dtype=bool))


def test_backtest_no_significant_alphas():
    panel = stub_panel(np.full((3, 2), 0.01), ("A", "B"))
    stream = [(panel.timestamps[t],
               [StubResult("A", 0.1, 0.5), StubResult("B", -0.1, 0.9)])
              for t in range(3)]
    res = alpha_backtest(stream, panel)
    assert np.all(res.value_change == 0.0)
    assert res.flagged.all()
    assert res.terminal_value == 0.0


def test_backtest_legs_disjoint_and_ranked():
    panel = stub_panel([[0.02, -0.01, 0.03, -0.02]], ("A", "B", "C", "D"))
    results = [StubResult("A", 0.10, 0.01), StubResult("C", 0.05, 0.01),
               StubResult("B", -0.08, 0.01), StubResult("D", -0.02, 0.01)]
    res = alpha_backtest([(panel.timestamps[0], results)], panel, quantile=0.5)
    # top half of significant positives = {A}; bottom half of negatives = {B}
    assert res.long_returns[0] == pytest.approx(0.02)
    assert res.short_returns[0] == pytest.approx(-0.01)
    assert res.value_change[0] == pytest.approx(0.03)
    assert not res.flagged[0]


def test_backtest_null_market_mean_near_zero():
    rng = np.random.default_rng(7)
    n_weeks, n_sec = 120, 30
    panel = stub_panel(0.02 * rng.standard_normal((n_weeks, n_sec)),
                       tuple(f"S{i}" for i in range(n_sec)))
    stream = []
    for t in range(n_weeks):
        results = [StubResult(f"S{i}", rng.standard_normal() * 0.01,
                              rng.random()) for i in range(n_sec)]
        stream.append((panel.timestamps[t], results))
    res = alpha_backtest(stream, panel)
    changes = res.value_change[~res.flagged]
    se = changes.std(ddof=1) / math.sqrt(changes.size)
    assert abs(changes.mean()) < 2 * se + 1e-12


def test_backtest_planted_arbitrage():
    rng = np.random.default_rng(8)
    n_weeks = 150
    goods = 0.001 + 0.002 * rng.standard_normal((n_weeks, 5))  # +10bp/week
    bads = -0.001 + 0.002 * rng.standard_normal((n_weeks, 5))
    panel = stub_panel(np.hstack([goods, bads]),
                       tuple(f"G{i}" for i in range(5))
                       + tuple(f"B{i}" for i in range(5)))
    stream = []
    for t in range(n_weeks):
        results = [StubResult(f"G{i}", 0.001, 0.001) for i in range(5)]
        results += [StubResult(f"B{i}", -0.001, 0.001) for i in range(5)]
        stream.append((panel.timestamps[t], results))
    res = alpha_backtest(stream, panel)
    assert res.terminal_value > 0
    t_stat = res.value_change.mean() / (res.value_change.std(ddof=1)
                                        / math.sqrt(n_weeks))
    assert stats.t.sf(t_stat, n_weeks - 1) < 0.01


# --- time invariance -----------------------------------------------------------

def test_invariance_identical_halves_zero_interaction():
    rng = np.random.default_rng(9)
    half = rng.standard_normal((40, 2))
    dy_half = half @ np.array([1.0, -1.0]) + 0.1 * rng.standard_normal(40)
    dv = np.vstack([half, half])
    dy = np.concatenate([dy_half, dy_half])
    h = np.concatenate([np.zeros(40), np.ones(40)])
    from gibs.regression import ols

    full = ols(np.column_stack([dv, dv * h[:, None]]), dy, add_intercept=False)
    assert np.max(np.abs(full.coefficients[2:])) < 1e-8
    res = time_invariance_linear(dy, dv, h)
    assert res.f_stat < 1e-10


def test_invariance_h_zero_rank_deficient():
    rng = np.random.default_rng(10)
    dv = rng.standard_normal((50, 2))
    dy = dv @ np.array([1.0, 2.0]) + 0.1 * rng.standard_normal(50)
    with pytest.raises(RankDeficient):
        time_invariance_linear(dy, dv, np.zeros(50))


def test_invariance_size_and_power():
    rejections = 0
    trials = 1000
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        dv = rng.standard_normal((150, 3))
        dy = dv @ np.array([1.0, -0.5, 0.25]) + 0.5 * rng.standard_normal(150)
        p = time_invariance_linear(dy, dv, half_indicator(150)).p_value
        rejections += p < 0.05
    assert 0.03 <= rejections / trials <= 0.07

    power_hits = 0
    for seed in range(200):
        rng = np.random.default_rng(10_000 + seed)
        dv = rng.standard_normal((300, 3))
        beta = np.array([1.0, -0.5, 0.25])
        h = half_indicator(300)
        dy = dv @ beta * (1 + h) + 0.5 * rng.standard_normal(300)  # beta doubles
        p = time_invariance_linear(dy, dv, h).p_value
        power_hits += p < 0.05
    assert power_hits / 200 >= 0.95


# --- residual expansion -----------------------------------------------------------

def test_residual_expansion_no_new_assets():
    rng = np.random.default_rng(11)
    dv = rng.standard_normal((100, 3))
    dy = dv @ np.array([1.0, 0.5, -0.5]) + 0.1 * rng.standard_normal(100)
    assets = ("MKT", "A", "B")
    p = residual_expansion_test(dy, dv, assets, ("MKT", "A", "B"),
                                {"A": "c", "B": "c", "MKT": "market"},
                                CFG, 0, market="MKT")
    assert p is None


def test_residual_expansion_redundant_copy_not_significant():
    hits = 0
    trials = 60
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        n = 300
        mkt = rng.standard_normal(n)
        a = rng.standard_normal(n)
        dy = 1.0 * a + 0.3 * mkt + 0.2 * rng.standard_normal(n)
        copy = a + 0.05 * rng.standard_normal(n)  # near-duplicate of selected A
        dv = np.column_stack([mkt, a, copy])
        p = residual_expansion_test(
            dy, dv, ("MKT", "A", "ACOPY"), ("MKT", "A"),
            {"MKT": "market", "A": "c", "ACOPY": "c"}, CFG, seed, market="MKT")
        if p is None or p >= 0.05:
            hits += 1
    assert hits / trials >= 0.90


def test_batch_report_ordering_and_nan_passthrough():
    rng = np.random.default_rng(99)
    ps = list(rng.random(15)) + [np.nan, np.nan]
    report = batch_report([f"e{i}" for i in range(17)], ps, "demo")
    ok = ~np.isnan(report.p_values)
    assert np.all(report.q_bh[ok] >= report.p_values[ok] - 1e-15)
    assert np.all(report.q_bhy[ok] >= report.q_bh[ok] - 1e-15)
    assert np.isnan(report.q_bh[~ok]).all()
    # NaN entries stay in the denominator of reject fractions
    assert report.reject_fraction(1.0, on="p") == pytest.approx(15 / 17)


def test_residual_expansion_detects_new_factor():
    ps = []
    for seed in range(60):
        rng = np.random.default_rng(100 + seed)
        n = 300
        mkt = rng.standard_normal(n)
        a = rng.standard_normal(n)
        new = rng.standard_normal(n)
        h = np.zeros(n)
        h[n // 2:] = 1.0
        dy = 1.0 * a + 0.3 * mkt + 0.8 * new * h + 0.2 * rng.standard_normal(n)
        dv = np.column_stack([mkt, a, new])
        # second half only, as the grid runner does
        mid = n // 2
        p = residual_expansion_test(
            dy[mid:], dv[mid:], ("MKT", "A", "NEW"), ("MKT", "A"),
            {"MKT": "market", "A": "c", "NEW": "d"}, CFG, seed, market="MKT")
        ps.append(np.nan if p is None else p)
    report = batch_report([str(i) for i in range(60)], ps, "resid")
    assert report.reject_fraction(0.05, on="bhy") >= 0.90


# --- varying coefficients -----------------------------------------------------------

def test_varying_coef_large_penalty_collapses_to_null():
    rng = np.random.default_rng(12)
    dv = rng.standard_normal((200, 2))
    t = np.linspace(0, 1, 200)
    dy = dv @ np.array([1.0, -1.0]) * (1 + 0.5 * np.sin(2 * np.pi * t)) \
        + 0.2 * rng.standard_normal(200)
    res = varying_coefficient_test(dy, dv, basis_size=6, penalty=1e12)
    assert res.f_stat < 1e-4
    assert res.p_value > 0.99


def test_varying_coef_zero_flexibility_nests_null():
    rng = np.random.default_rng(13)
    dv = rng.standard_normal((100, 2))
    dy = dv @ np.array([1.0, -1.0]) + 0.2 * rng.standard_normal(100)
    res = varying_coefficient_test(dy, dv, basis_size=0)
    assert res.f_stat == 0.0 and res.p_value == 1.0
    from gibs.regression import ols

    null_rss = ols(dv, dy, add_intercept=False).rss
    # with no spline columns the two objectives agree exactly
    assert res.edf == pytest.approx(2.0, abs=1e-10)
    assert null_rss == pytest.approx(null_rss, abs=1e-10)


def test_varying_coef_power_on_smooth_drift():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = 300
        dv = rng.standard_normal((n, 2))
        t = np.linspace(0, 1, n)
        drift = 1 + 0.75 * np.sin(2 * np.pi * t)
        dy = (dv * drift[:, None]) @ np.array([1.0, -0.6]) \
            + 0.3 * rng.standard_normal(n)
        if varying_coefficient_test(dy, dv, 6, 5.0).p_value < 0.05:
            hits += 1
    assert hits / 100 >= 0.9


def test_varying_coef_size_not_wildly_anticonservative():
    hits = 0
    trials = 400
    for seed in range(trials):
        rng = np.random.default_rng(40_000 + seed)
        n = 300
        dv = rng.standard_normal((n, 2))
        dy = dv @ np.array([1.0, -0.6]) + 0.3 * rng.standard_normal(n)
        if varying_coefficient_test(dy, dv, 6, 5.0).p_value < 0.05:
            hits += 1
    assert hits / trials <= 0.10  # documented: looser than nominal


def test_varying_coef_empty_selection():
    with pytest.raises(EmptySelection):
        varying_coefficient_test(np.zeros(10), np.zeros((10, 0)))


# --- risk premium -------------------------------------------------------------------

def make_universe(excess_cols, rf_rate=0.001):
    names = tuple(excess_cols)
    values = np.column_stack([excess_cols[a] + rf_rate for a in names])
    ts = tuple(f"w{i:03d}" for i in range(values.shape[0]))
    panel = ReturnsPanel(ts, names, values, np.ones_like(values, dtype=bool))
    cats = {a: "c" for a in names}
    cats[names[0]] = "market"
    return (BasisUniverse(panel, cats, names[0]),
            RiskFreeSeries(ts, np.full(values.shape[0], rf_rate)))


def test_risk_premium_arithmetic_and_flags():
    n = 400
    uni, rf = make_universe({
        "MKT": np.full(n, 0.002),   # 10.4%/yr
        "ZERO": np.zeros(n),
        "SMALL": np.full(n, 0.0100 / 52),  # 1.0%/yr
    })
    table = risk_premium(uni, rf, ("MKT", "ZERO", "SMALL"),
                         reference_threshold=0.011)
    prem = dict(zip(table.assets, table.premiums))
    assert prem["MKT"] == pytest.approx(0.104)
    assert prem["ZERO"] == pytest.approx(0.0)
    assert prem["SMALL"] == pytest.approx(0.010)
    flags = dict(zip(table.assets, table.flagged))
    assert flags["MKT"] and not flags["ZERO"] and not flags["SMALL"]
    with pytest.raises(EmptySelection):
        risk_premium(uni, rf, ())


# --- period grids --------------------------------------------------------------------

def price_world_panel(seed=0, years=4, n_securities=4, start_year=2014):
    spec = SyntheticSpec(n_obs=52 * years, n_securities=n_securities,
                         n_basis=6, sparsity=2, noise_sd=0.01,
                         correlation=0.3, seed=seed, rf_rate=0.0,
                         start_year=start_year)
    return synthesize_price_world(spec)


def test_grid_cell_count_and_skew_structure():
    sec, uni, rf, _ = price_world_panel(seed=1, years=5, start_year=2014)
    grid = period_grid_run(sec, uni, rf, "invariance", (2014, 2018),
                           min_len=3, config=CFG, seed=0)
    assert len(grid.populated()) == 6  # 3+2+1 windows
    assert not grid.failures
    assert len(grid.skew_diagonal(0)) == 3
    assert len(grid.skew_diagonal(1)) == 2
    assert len(grid.skew_diagonal(2)) == 1
    for k in range(3):
        for s, e, _ in grid.skew_diagonal(k):
            assert e - s == k + 2
    # anti-diagonal cells share start+end
    for k in (-1, 0, 1):
        cells = grid.skew_anti_diagonal(k)
        if cells:
            assert len({s + e for s, e, _ in cells}) == 1


def test_grid_empty_when_min_len_exceeds_span():
    sec, uni, rf, _ = price_world_panel(seed=2, years=3)
    grid = period_grid_run(sec, uni, rf, "invariance", (2014, 2016),
                           min_len=5, config=CFG, seed=0)
    assert grid.populated() == []


def test_grid_unknown_test_rejected():
    sec, uni, rf, _ = price_world_panel(seed=3, years=3)
    with pytest.raises(ValueError):
        period_grid_run(sec, uni, rf, "nonsense", (2014, 2016), config=CFG)


def test_grid_intercept_two_step_runs_with_rf_zero():
    sec, uni, rf, _ = price_world_panel(seed=4, years=3)
    grid = period_grid_run(sec, uni, rf, "intercept", (2014, 2016),
                           min_len=3, config=CFG, seed=0)
    cells = grid.populated()
    assert len(cells) == 1
    assert 0.0 <= cells[0][2] <= 1.0
    assert not grid.failures


def test_fit_price_differences_exposes_mma():
    sec, uni, rf, _ = price_world_panel(seed=5, years=3)
    diff = fit_price_differences(sec, uni, rf, CFG, 0)
    assert diff.dv_assets[0] == "MMA"
    assert diff.dv.shape[0] == sec.n_periods
    assert diff.y_prices.shape[0] == sec.n_periods + 1
    for res in diff.results:
        assert not res.fit.intercept_included
