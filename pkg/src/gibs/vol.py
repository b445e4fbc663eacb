"""Volatility-sorted portfolios and the low-volatility anomaly study.

Portfolios re-sort weekly on trailing excess-return volatility; the
anomaly tests compare cumulative capital of the low and high legs in
excess returns and in rolling-model residual returns, and a stacked
interaction ANOVA checks whether the two legs share factor loadings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptySelection, UniverseTooSmall
from .panel import (
    BasisUniverse,
    ReturnsPanel,
    RiskFreeSeries,
    cumulative_capital,
)
from .regression import FTestResult, WelchResult, nested_f_test, ols, welch_test
from .selection import (
    GibsConfig,
    SelectionResult,
    gibs_select,
    orthogonalize_universe,
    pca_dimension,
    select_prototypes,
)

ANOMALY_MODES = ("excess", "residual_ff5", "residual_amf")


@dataclass(frozen=True)
class VolPortfolios:
    """Weekly low/high volatility memberships and their return series."""

    weeks: tuple[str, ...]
    low_members: tuple[tuple[str, ...], ...]
    high_members: tuple[tuple[str, ...], ...]
    low_returns: np.ndarray   # raw equal-weighted returns
    high_returns: np.ndarray
    formation_vols: tuple[dict, ...]

    @property
    def n_weeks(self) -> int:
        return len(self.weeks)


def form_vol_portfolios(panel: ReturnsPanel, rf: RiskFreeSeries,
                        lookback: int = 52, quantile: float = 0.25, *,
                        min_obs: int | None = None,
                        eligibility: dict | None = None,
                        max_cap_rank: int | None = None) -> VolPortfolios:
    """Sort assets weekly by trailing excess-return volatility.

    An asset is eligible at week t when it has at least ``min_obs``
    observations over the previous ``lookback`` weeks (default 80% of
    the lookback) and, if a cap-rank table is supplied, ranks within
    ``max_cap_rank``.  Leg sizes use the floor of
    ``quantile * n_eligible``; volatility ties break by asset id.
    """
    if not 0 < quantile <= 0.5:
        raise ConfigError("quantile must lie in (0, 0.5]")
    if panel.n_periods <= lookback:
        raise UniverseTooSmall("panel shorter than the volatility lookback")
    min_obs = min_obs if min_obs is not None else math.ceil(0.8 * lookback)
    excess = panel.values - rf.rate[:, None]

    weeks, low_m, high_m, low_r, high_r, vols_all = [], [], [], [], [], []
    for t in range(lookback, panel.n_periods):
        window = slice(t - lookback, t)
        vols = {}
        for j, asset in enumerate(panel.assets):
            if eligibility is not None and max_cap_rank is not None:
                rank = eligibility.get(asset)
                if rank is None or rank > max_cap_rank:
                    continue
            obs = panel.mask[window, j]
            if obs.sum() < min_obs:
                continue
            x = excess[window, j][obs]
            vols[asset] = float(np.std(x, ddof=1))
        if len(vols) < 8:
            raise UniverseTooSmall(
                f"only {len(vols)} eligible assets at week {panel.timestamps[t]}")
        n_leg = int(quantile * len(vols))
        ordered = sorted(vols, key=lambda a: (vols[a], a))
        low = tuple(ordered[:n_leg])
        high = tuple(sorted(ordered[-n_leg:]))

        def leg_return(names):
            vals = [panel.values[t, panel.assets.index(a)] for a in names
                    if panel.mask[t, panel.assets.index(a)]]
            return float(np.mean(vals)) if vals else np.nan

        weeks.append(panel.timestamps[t])
        low_m.append(low)
        high_m.append(high)
        low_r.append(leg_return(low))
        high_r.append(leg_return(high))
        vols_all.append(vols)
    return VolPortfolios(tuple(weeks), tuple(low_m), tuple(high_m),
                         np.array(low_r), np.array(high_r), tuple(vols_all))


def rolling_residuals(y_excess: np.ndarray, universe: BasisUniverse,
                      rf: RiskFreeSeries, mode: str, config: GibsConfig, *,
                      window: int, seed, fixed_factors=()) -> np.ndarray:
    """One-week-ahead residual returns from a rolling factor model.

    For every week t >= window the model is fit on the trailing window
    of excess returns (fixed-factor OLS or the selection pipeline) and
    the residual is the realised excess return minus the model's
    prediction from that week's basis returns.
    """
    y = np.asarray(y_excess, dtype=float).ravel()
    n = y.shape[0]
    if n <= window + 1:
        raise UniverseTooSmall("series shorter than the rolling window")
    basis = universe.panel
    x_all = basis.values - rf.rate[:, None]
    resid = np.empty(n - window)
    for t in range(window, n):
        lo, hi = t - window, t
        uni_w = BasisUniverse(basis.slice_rows(lo, hi), universe.categories,
                              universe.market_index)
        rf_w = rf.slice_rows(lo, hi)
        if mode == "residual_ff5":
            if not fixed_factors:
                raise ConfigError("residual_ff5 needs fixed_factors")
            idx = [basis.assets.index(a) for a in fixed_factors]
            fit = ols(x_all[lo:hi, idx], y[lo:hi], add_intercept=True)
            pred = float(fit.predict(x_all[t:t + 1, idx])[0])
        elif mode == "residual_amf":
            orth = orthogonalize_universe(uni_w, rf_w, config.protected_assets)
            protos = select_prototypes(orth, universe.categories, config)
            res = gibs_select(y[lo:hi][orth.row_index], orth, protos, config,
                              (seed, t))
            if res.selected:
                idx = [basis.assets.index(a) for a in res.selected]
                pred = float(res.fit.predict(x_all[t:t + 1, idx])[0])
            else:
                pred = float(res.fit.coefficients[0])
        else:
            raise ConfigError(f"unknown residual mode {mode!r}")
        resid[t - window] = y[t] - pred
    return resid


def anomaly_test(low: np.ndarray, high: np.ndarray, mode: str = "excess", *,
                 rf: RiskFreeSeries | None = None,
                 universe: BasisUniverse | None = None,
                 config: GibsConfig | None = None, window: int = 156,
                 seed=0, fixed_factors=()) -> WelchResult:
    """One-sided Welch test of low-leg vs high-leg cumulative capital.

    ``low`` and ``high`` are raw weekly returns aligned with ``rf`` (and
    with the universe panel rows for the residual modes).  The residual
    modes compound one-week-ahead residual returns from the rolling
    FF5-style or selection model before testing.
    """
    low = np.asarray(low, dtype=float).ravel()
    high = np.asarray(high, dtype=float).ravel()
    if low.shape != high.shape:
        raise ConfigError("low and high series must be aligned")
    if mode not in ANOMALY_MODES:
        raise ConfigError(f"mode must be one of {ANOMALY_MODES}")
    if rf is None or low.shape[0] != len(rf.timestamps):
        raise ConfigError("aligned risk-free series required")
    if mode == "excess":
        cap_low = cumulative_capital(low - rf.rate)
        cap_high = cumulative_capital(high - rf.rate)
    else:
        if universe is None or config is None:
            raise ConfigError("residual modes need universe and config")
        # one seed for both legs keeps the test exactly antisymmetric
        cap_low = cumulative_capital(rolling_residuals(
            low - rf.rate, universe, rf, mode, config, window=window,
            seed=seed, fixed_factors=fixed_factors))
        cap_high = cumulative_capital(rolling_residuals(
            high - rf.rate, universe, rf, mode, config, window=window,
            seed=seed, fixed_factors=fixed_factors))
    return welch_test(cap_low, cap_high, "greater")


def loading_difference_test(y_low, y_high, x_basis, assets, s_low, s_high) -> FTestResult:
    """Do the two portfolios share coefficients on the union of factors?

    Stacks the two excess-return series, regresses on the shared
    selected columns, and compares against the model with high-leg
    interaction terms by ANOVA.
    """
    y_low = np.asarray(y_low, dtype=float).ravel()
    y_high = np.asarray(y_high, dtype=float).ravel()
    x = np.atleast_2d(np.asarray(x_basis, dtype=float))
    assets = tuple(assets)
    union = [a for a in assets if a in (set(s_low) | set(s_high))]
    if not union:
        raise EmptySelection("no selected factors in either portfolio")
    idx = [assets.index(a) for a in union]
    w = np.vstack([x[:, idx], x[:, idx]])
    z = np.concatenate([y_low, y_high])
    h = np.concatenate([np.zeros(y_low.shape[0]), np.ones(y_high.shape[0])])
    restricted = ols(w, z, add_intercept=False)
    full = ols(np.column_stack([w, w * h[:, None]]), z, add_intercept=False)
    return nested_f_test(restricted, full)


@dataclass(frozen=True)
class PortfolioWeekFit:
    """One portfolio's diagnostics for one rolling week."""

    amf: SelectionResult
    ff5_alpha: float
    ff5_alpha_p: float
    ff5_adj_r2: float
    amf_pred: float
    ff5_pred: float
    realized: float
    baseline: float


@dataclass(frozen=True)
class RollingWeek:
    week: str
    low: PortfolioWeekFit | None
    high: PortfolioWeekFit | None
    gibs_dim: int
    pca_dim: int
    error: str = ""


def rolling_study(ports: VolPortfolios, universe: BasisUniverse,
                  rf: RiskFreeSeries, config: GibsConfig, *,
                  window: int = 156, horizon: int | None = None, seed=0,
                  fixed_factors=(), threads: int = 1) -> tuple[RollingWeek, ...]:
    """Weekly re-estimation of both portfolios under both models.

    ``ports`` must be aligned with the tail of the universe panel (its
    weeks are universe timestamps).  Each study week uses the trailing
    ``window`` portfolio returns; failures are flagged per week and the
    stream continues.
    """
    from .parallel import ordered_map

    if not fixed_factors:
        raise ConfigError("rolling_study needs fixed_factors for the baseline")
    basis = universe.panel
    offset = len(basis.timestamps) - len(ports.weeks)
    if offset < 0 or basis.timestamps[offset:] != ports.weeks:
        raise ConfigError("portfolio weeks must be a suffix of universe weeks")
    start = window
    stop = len(ports.weeks) if horizon is None else min(len(ports.weeks),
                                                        window + horizon)
    x_all = basis.values - rf.rate[:, None]

    def run(t):
        week = ports.weeks[t]
        lo, hi = offset + t - window, offset + t
        uni_w = BasisUniverse(basis.slice_rows(lo, hi), universe.categories,
                              universe.market_index)
        rf_w = rf.slice_rows(lo, hi)
        try:
            orth = orthogonalize_universe(uni_w, rf_w, config.protected_assets)
            protos = select_prototypes(orth, universe.categories, config)
            gdim = len(protos)
            pdim = pca_dimension(uni_w, rf_w)
            fits = {}
            for leg, series in (("low", ports.low_returns),
                                ("high", ports.high_returns)):
                y = series[t - window:t] - rf.rate[lo:hi]
                y_t = float(series[t] - rf.rate[offset + t])
                res = gibs_select(y[orth.row_index], orth, protos, config,
                                  (seed, leg, t), security=leg)
                if res.selected:
                    idx = [basis.assets.index(a) for a in res.selected]
                    amf_pred = float(res.fit.predict(
                        x_all[offset + t:offset + t + 1, idx])[0])
                else:
                    amf_pred = float(res.fit.coefficients[0])
                fidx = [basis.assets.index(a) for a in fixed_factors]
                ff5 = ols(x_all[lo:hi, fidx], y, add_intercept=True)
                ff5_pred = float(ff5.predict(
                    x_all[offset + t:offset + t + 1, fidx])[0])
                fits[leg] = PortfolioWeekFit(
                    res, float(ff5.coefficients[0]), float(ff5.p_values[0]),
                    float(ff5.adj_r2), amf_pred, ff5_pred, y_t, float(y.mean()))
            return RollingWeek(week, fits["low"], fits["high"], gdim, pdim)
        except Exception as exc:
            return RollingWeek(week, None, None, 0, 0,
                               f"{type(exc).__name__}: {exc}")

    return tuple(ordered_map(run, range(start, stop), threads))
