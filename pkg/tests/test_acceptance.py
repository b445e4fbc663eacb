"""Acceptance suite: one test per criterion, each printing a
``[criterion N] PASS/FAIL`` line with the measured quantities.

Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import subprocess
import sys
import time

import numpy as np

from gibs.comparison import compare_methods
from gibs.fdr import adjust
from gibs.lasso import lasso_fit, soft_threshold
from gibs.cluster import DistanceMatrix, minimax_cluster
from gibs.model_tests import (
    half_indicator,
    intercept_test,
    intercept_test_two_step,
    period_grid_run,
    time_invariance_linear,
)
from gibs.panel import BasisUniverse, ReturnsPanel, RiskFreeSeries
from gibs.selection import GibsConfig, fit_panel
from gibs.synth import SyntheticSpec, synthesize, synthesize_price_world, with_seed
from gibs.vol import anomaly_test, form_vol_portfolios, loading_difference_test
from tests.oracles import (
    kkt_violation,
    lasso_objective,
    lattice_minimizer,
    reference_minimax_merges,
    stepup_qvalues,
)


def report(num, ok, detail):
    print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# -------------------------------------------------------------------------------

def test_criterion_01_lasso_kkt_suite():
    rng = np.random.default_rng(101)
    t0 = time.time()
    worst_kkt = 0.0
    worst_ortho = 0.0
    for trial in range(1000):
        n = int(rng.integers(20, 201))
        p = int(rng.integers(2, 51))
        if trial % 3 == 0:
            p = min(p, n)
            q, _ = np.linalg.qr(rng.standard_normal((n, p)))
            X = q * np.sqrt(n)  # X'X = n I
        else:
            X = rng.standard_normal((n, p))
        beta = np.zeros(p)
        k = int(rng.integers(0, min(p, 5) + 1))
        if k:
            beta[rng.choice(p, k, replace=False)] = rng.uniform(-2, 2, k)
        y = X @ beta + rng.standard_normal(n)
        lam_max = np.max(np.abs(X.T @ y)) / n
        lam = float(rng.uniform(0.05, 0.9)) * lam_max
        b = lasso_fit(X, y, lam, standardize=False)
        worst_kkt = max(worst_kkt, kkt_violation(X, y, b, lam))
        if trial % 3 == 0:
            closed = soft_threshold(X.T @ y / n, lam)
            worst_ortho = max(worst_ortho, float(np.max(np.abs(b - closed))))
    elapsed = time.time() - t0
    ok = worst_kkt < 1e-6 and worst_ortho < 1e-8 and elapsed < 60
    report(1, ok, f"1000 problems: max KKT violation {worst_kkt:.2e} (<1e-6), "
                  f"max orthonormal gap {worst_ortho:.2e} (<1e-8), "
                  f"{elapsed:.1f}s (<60s)")


def test_criterion_02_lasso_brute_force():
    rng = np.random.default_rng(202)
    t0 = time.time()
    worst_gap = 0.0
    objective_ok = True
    for _ in range(50):
        n = int(rng.integers(8, 21))
        p = int(rng.integers(1, 4))
        X = rng.standard_normal((n, p))
        y = X @ rng.uniform(-1.5, 1.5, p) + 0.4 * rng.standard_normal(n)
        lam = float(rng.uniform(0.03, 0.5))
        b = lasso_fit(X, y, lam, standardize=False)
        lattice = lattice_minimizer(X, y, lam)
        worst_gap = max(worst_gap, float(np.max(np.abs(b - lattice))))
        if lasso_objective(X, y, b, lam) > lasso_objective(X, y, lattice, lam) + 1e-10:
            objective_ok = False
    elapsed = time.time() - t0
    ok = worst_gap <= 2e-3 and objective_ok and elapsed < 120
    report(2, ok, f"50 problems: max solver-lattice gap {worst_gap:.2e} "
                  f"(<=2e-3 at step 1e-3), solver objective never above the "
                  f"lattice, {elapsed:.1f}s (<120s)")


def test_criterion_03_minimax_oracle():
    rng = np.random.default_rng(303)
    t0 = time.time()
    identical = 0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        d = rng.random((n, n))
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0.0)
        dm = DistanceMatrix(d)
        ours = minimax_cluster(dm).merges
        ref = reference_minimax_merges(dm)
        match = len(ours) == len(ref) and all(
            {a1, b1} == {a2, b2} and abs(h1 - h2) < 1e-12 and p1 == p2
            for (a1, b1, h1, p1), (a2, b2, h2, p2) in zip(ours, ref))
        identical += match
    inversions = 0
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        d = rng.random((n, n))
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0.0)
        heights = [m[2] for m in minimax_cluster(DistanceMatrix(d)).merges]
        inversions += int(np.any(np.diff(heights) < -1e-12))
    elapsed = time.time() - t0
    ok = identical == 200 and inversions == 0 and elapsed < 60
    report(3, ok, f"{identical}/200 merge sequences identical to the "
                  f"exhaustive oracle, {inversions} inversions over 1000 "
                  f"matrices (n<=50), {elapsed:.1f}s (<60s)")


def test_criterion_04_fdr_correctness():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(10_000):
        m = int(rng.integers(1, 21))
        p = rng.random(m) ** rng.uniform(0.5, 2.0)
        for method in ("BH", "BHY"):
            mult = float(m) if method == "BH" \
                else m * float(np.sum(1.0 / np.arange(1, m + 1)))
            q = adjust(p, method).q_values
            worst = max(worst, float(np.max(np.abs(q - stepup_qvalues(p, mult)))))
    # empirical FDR under independent true nulls
    m, reps, alpha = 20, 10_000, 0.05
    fdp = np.empty(reps)
    for i in range(reps):
        q = adjust(rng.random(m), "BH").q_values
        rejected = int(np.sum(q <= alpha))
        fdp[i] = rejected / max(rejected, 1) if rejected else 0.0
    fdr = float(fdp.mean())
    ok = worst < 1e-12 and fdr <= 0.06
    report(4, ok, f"10^4 vectors: max |q - oracle| {worst:.2e} (<1e-12); "
                  f"empirical FDR {fdr:.4f} (<=0.06 at nominal 0.05)")


def test_criterion_05_gibs_support_recovery():
    # SNR: signal sd ~ beta_scale * basis_vol * sqrt(sparsity * (1 + ml^2))
    spec = SyntheticSpec(n_obs=300, n_securities=1, n_basis=50, sparsity=3,
                         beta_scale=1.0, noise_sd=0.011, correlation=0.5,
                         n_blocks=10, market_loading=0.7, seed=0)
    cfg = GibsConfig(category_threshold=0.35, global_threshold=0.35)
    recovered = 0
    cap_ok = True
    snrs = []
    for seed in range(200):
        sec, uni, rf, truth = synthesize(with_seed(spec, 7000 + seed))
        y = sec.values[:, 0] - rf.rate
        signal_var = np.var(y) - spec.noise_sd ** 2
        snrs.append(signal_var / spec.noise_sd ** 2)
        results, _ = fit_panel(sec, uni, rf, cfg, seed=seed)
        res = results[0]
        if set(truth.supports[0]) <= set(res.selected):
            recovered += 1
        if len(res.selected) > 20:
            cap_ok = False
    rate = recovered / 200
    snr = float(np.median(snrs))
    ok = rate >= 0.90 and cap_ok and snr >= 10
    report(5, ok, f"true support recovered in {rate:.1%} of 200 seeds "
                  f"(>=90%), |S_i|<=20 always: {cap_ok}, "
                  f"median SNR {snr:.1f} (>=10)")


def test_criterion_06_method_comparison_ordering():
    t0 = time.time()
    spec = SyntheticSpec(n_obs=130, n_securities=15, n_basis=40, sparsity=3,
                         beta_scale=1.0, noise_sd=0.05, correlation=0.5,
                         n_blocks=13, market_loading=0.7, seed=0)
    cfg = GibsConfig(category_threshold=0.35, global_threshold=0.35)
    diffs = []
    for seed in range(40):
        sec, uni, rf, _ = synthesize(with_seed(spec, 6000 + seed))
        table = compare_methods(sec, uni, rf, cfg, ("gibs", "lasso-cv"),
                                holdout_len=26, seed=seed)
        diffs.append(table.row("gibs").avg_oos_r2
                     - table.row("lasso-cv").avg_oos_r2)
    diffs = np.array(diffs)
    rng = np.random.default_rng(606)
    boot = np.array([diffs[rng.integers(0, 40, 40)].mean()
                     for _ in range(4000)])
    lo, hi = np.quantile(boot, [0.025, 0.975])
    elapsed = time.time() - t0
    ok = diffs.mean() > 0 and lo > 0 and elapsed < 600
    report(6, ok, f"mean OoS R^2 difference GIBS-LASSO {diffs.mean():+.4f}, "
                  f"95% bootstrap CI [{lo:+.4f}, {hi:+.4f}] excludes reversal, "
                  f"{elapsed:.0f}s (<600s)")


def test_criterion_07_test_size_calibration():
    trials = 1000
    msgs = []
    all_ok = True

    # intercept test --------------------------------------------------------
    size = power = 0
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((150, 3))
        y = X @ np.array([0.5, -0.5, 0.25]) + rng.standard_normal(150)
        size += intercept_test(y, X)[1] < 0.05
    for seed in range(200):
        rng = np.random.default_rng(90_000 + seed)
        X = rng.standard_normal((200, 3))
        y = 0.05 + X @ np.array([0.5, -0.5, 0.25]) + 0.1 * rng.standard_normal(200)
        power += intercept_test(y, X)[1] < 0.05
    s, p = size / trials, power / 200
    all_ok &= 0.03 <= s <= 0.07 and p >= 0.95
    msgs.append(f"intercept size {s:.3f}, power {p:.2f}")

    # time-invariance interaction test ---------------------------------------
    size = power = 0
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        dv = rng.standard_normal((150, 3))
        dy = dv @ np.array([1.0, -0.5, 0.25]) + 0.5 * rng.standard_normal(150)
        size += time_invariance_linear(dy, dv, half_indicator(150)).p_value < 0.05
    for seed in range(200):
        rng = np.random.default_rng(91_000 + seed)
        dv = rng.standard_normal((300, 3))
        h = half_indicator(300)
        dy = dv @ np.array([1.0, -0.5, 0.25]) * (1 + h) \
            + 0.5 * rng.standard_normal(300)
        power += time_invariance_linear(dy, dv, h).p_value < 0.05
    s, p = size / trials, power / 200
    all_ok &= 0.03 <= s <= 0.07 and p >= 0.95
    msgs.append(f"invariance size {s:.3f}, power {p:.2f}")

    # loading-difference test --------------------------------------------------
    size = power = 0
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((150, 3))
        beta = np.array([1.0, -0.5, 0.25])
        y1 = x @ beta + 0.3 * rng.standard_normal(150)
        y2 = x @ beta + 0.3 * rng.standard_normal(150)
        res = loading_difference_test(y1, y2, x, ("A", "B", "C"),
                                      ("A", "B"), ("B", "C"))
        size += res.p_value < 0.05
    for seed in range(200):
        rng = np.random.default_rng(92_000 + seed)
        x = rng.standard_normal((150, 3))
        y1 = x @ np.array([1.0, 0.0, 0.0]) + 0.2 * rng.standard_normal(150)
        y2 = x @ np.array([0.0, 0.0, 1.0]) + 0.2 * rng.standard_normal(150)
        res = loading_difference_test(y1, y2, x, ("A", "B", "C"), ("A",), ("C",))
        power += res.p_value < 0.05
    s, p = size / trials, power / 200
    all_ok &= 0.03 <= s <= 0.07 and p >= 0.95
    msgs.append(f"loading-diff size {s:.3f}, power {p:.2f}")

    report(7, all_ok, "; ".join(msgs) + " (sizes in [0.03,0.07], power >= 0.95)")


def test_criterion_08_two_step_with_degenerate_mma():
    finite = True
    rejections = 0
    trials = 500
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        n = 150
        mma = np.ones(n)  # rf = 0: exactly collinear with the constant
        walk = np.cumsum(rng.standard_normal(n)) + 40.0
        y = 2.0 * mma + 0.5 * walk + 0.05 * rng.standard_normal(n)
        alpha, p = intercept_test_two_step(y, np.column_stack([mma, walk]))
        finite &= bool(np.isfinite(alpha) and np.isfinite(p) and 0 <= p <= 1)
        rejections += p < 0.05
    # through the full price pipeline with rf = 0
    spec = SyntheticSpec(n_obs=156, n_securities=4, n_basis=6, sparsity=2,
                         noise_sd=0.01, correlation=0.3, seed=9, rf_rate=0.0,
                         start_year=2014)
    sec, uni, rf, _ = synthesize_price_world(spec)
    grid = period_grid_run(sec, uni, rf, "intercept", (2014, 2016), 3,
                           config=GibsConfig(category_threshold=0.35,
                                             global_threshold=0.35), seed=0)
    cell_ok = len(grid.populated()) == 1 and not grid.failures
    rate = rejections / trials
    ok = finite and rate <= 0.06 and cell_ok
    report(8, ok, f"all results finite, null rejection rate {rate:.3f} "
                  f"(<=0.06, conservative by construction), full-pipeline "
                  f"grid cell with rf=0 ran: {cell_ok}")


def test_criterion_09_period_grid_structure():
    spec = SyntheticSpec(n_obs=12 * 52, n_securities=4, n_basis=6, sparsity=2,
                         noise_sd=0.01, correlation=0.3, seed=5, rf_rate=0.0,
                         start_year=2007)
    sec, uni, rf, _ = synthesize_price_world(spec)
    cfg = GibsConfig(category_threshold=0.35, global_threshold=0.35)
    grid = period_grid_run(sec, uni, rf, "invariance", (2007, 2018), 3,
                           config=cfg, seed=2, threads=4)
    n_cells = len(grid.populated())
    diag_ok = all(len(grid.skew_diagonal(k)) == 10 - k for k in range(10))
    anti_ok = True
    years = grid.years
    for k in range(-(len(years) - 3), len(years) - 2):
        cells = grid.skew_anti_diagonal(k)
        target = len(years) - 1 + k
        expect = sum(1 for i in range(len(years)) for j in range(len(years))
                     if i + j == target and j - i >= 2)
        anti_ok &= len(cells) == expect
        anti_ok &= all(years.index(s) + years.index(e) == target
                       for s, e, _ in cells)
    ok = n_cells == 55 and not grid.failures and diag_ok and anti_ok
    report(9, ok, f"{n_cells} populated cells (=55), skew-diagonal lengths "
                  f"10..1: {diag_ok}, anti-diagonal mid-year slices "
                  f"combinatorially correct: {anti_ok}")


def _anomaly_universe(seed, T=286):
    rng = np.random.default_rng(seed)
    mkt = 0.001 + 0.02 * rng.standard_normal(T)
    fl = 0.005 + 0.006 * rng.standard_normal(T)   # calm factor, high premium
    fh = 0.0005 + 0.05 * rng.standard_normal(T)   # volatile factor, low premium
    ts = tuple(f"{2008 + w // 52}-W{w % 52 + 1:02d}" for w in range(T))
    basis = ReturnsPanel(ts, ("MKT", "FL", "FH"),
                         np.column_stack([mkt, fl, fh]),
                         np.ones((T, 3), dtype=bool))
    uni = BasisUniverse(basis, {"MKT": "market", "FL": "bond",
                                "FH": "commodity"}, "MKT")
    lows = np.column_stack([fl + 0.004 * rng.standard_normal(T)
                            for _ in range(8)])
    highs = np.column_stack([fh + 0.01 * rng.standard_normal(T)
                             for _ in range(8)])
    names = tuple(f"L{i}" for i in range(8)) + tuple(f"H{i}" for i in range(8))
    sec = ReturnsPanel(ts, names, np.hstack([lows, highs]),
                       np.ones((T, 16), dtype=bool))
    return sec, uni, RiskFreeSeries(ts, np.zeros(T))


def test_criterion_10_anomaly_pattern_rate():
    # NOTE: expected RED (spec defect, see the decisions ledger): with a
    # loadings-only anomaly both residual series are mean zero, so the
    # Welch direction on residual capital is decided by the realised path
    # wander and cannot concentrate above 0.5 at a 90% rate.
    cfg = GibsConfig(category_threshold=0.3, global_threshold=0.3)
    joint = exc_hits = resid_hits = 0
    n_seeds = 100
    for seed in range(n_seeds):
        sec, uni, rf = _anomaly_universe(seed)
        ports = form_vol_portfolios(sec, rf, lookback=52)
        off = sec.n_periods - ports.n_weeks
        rf_t = rf.slice_rows(off, sec.n_periods)
        uni_t = BasisUniverse(uni.panel.slice_rows(off, sec.n_periods),
                              uni.categories, "MKT")
        pe = anomaly_test(ports.low_returns, ports.high_returns, "excess",
                          rf=rf_t).p_value
        pr = anomaly_test(ports.low_returns, ports.high_returns,
                          "residual_amf", rf=rf_t, universe=uni_t, config=cfg,
                          window=104, seed=seed).p_value
        exc_hits += pe < 0.05
        resid_hits += pr > 0.5
        joint += (pe < 0.05) and (pr > 0.5)
    rate = joint / n_seeds
    ok = rate >= 0.90
    report(10, ok, f"joint rate {rate:.2f} (criterion: >=0.90); "
                   f"excess p<0.05 in {exc_hits / n_seeds:.2f}, residual "
                   f"p>0.5 in {resid_hits / n_seeds:.2f} of {n_seeds} seeds "
                   f"- see ledger: the residual direction is a coin flip "
                   f"under a loadings-only anomaly")


def test_criterion_11_end_to_end_determinism(tmp_path):
    def cli(*argv):
        proc = subprocess.run([sys.executable, "-m", "gibs.cli", *argv],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        return proc

    fx = tmp_path / "fx"
    synth_cfg = tmp_path / "synth.cfg"
    synth_cfg.write_text(
        "n_obs = 160\nn_securities = 8\nn_basis = 12\nsparsity = 2\n"
        "noise_sd = 0.004\ncorrelation = 0.4\nn_classes = 2\n")
    cli("synth", "--config", str(synth_cfg), "--seed", "11", "--out", str(fx))

    run_cfg = tmp_path / "run.cfg"
    run_cfg.write_text(
        f"securities = {fx}/securities.csv\nbasis = {fx}/basis.csv\n"
        f"rf = {fx}/rf.csv\ncategories = {fx}/categories.csv\n"
        f"classes = {fx}/classes.csv\ncategory_threshold = 0.35\n"
        f"global_threshold = 0.35\nholdout_len = 10\n")

    artifacts = {
        "fit": ["selection.csv", "summary_counts.csv",
                "summary_proportions.csv", "prototypes.csv", "manifest.json"],
        "report": ["heatmap.csv", "hist_adj_r2.csv", "hist_n_selected.csv"],
        "test": ["report.csv"],
    }
    outputs = {}
    for tag, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / f"run_{tag}"
        cli("fit", "--config", str(run_cfg), "--seed", "5",
            "--threads", threads, "--out", str(out))
        cli("test", "invariance", "--config", str(run_cfg), "--seed", "5",
            "--threads", threads, "--out", str(out))
        cli("report", "--config", str(run_cfg), "--out", str(out))
        blob = {}
        for names in artifacts.values():
            for name in names:
                blob[name] = (out / name).read_bytes()
        outputs[tag] = blob

    rerun_ok = outputs["a"] == outputs["b"]
    thread_ok = outputs["a"] == outputs["c"]
    ok = rerun_ok and thread_ok
    report(11, ok, f"fit/test/report byte-identical across reruns: {rerun_ok}, "
                   f"across thread counts 1 vs 4: {thread_ok}")
