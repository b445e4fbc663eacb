"""Comparison harness: fixed factors, capped-1se selection, CV LASSO,
elastic net, and ridge on a shared prototype universe.

Every method sees the same orthogonalised prototype columns and the
same train/holdout split; sparse methods are refit by OLS on their
selected original columns so that significance counts and adjusted R^2
are comparable.  Ridge never sparsifies and reports NaN for the
refit-based columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .lasso import LassoPath, cross_validate, lasso_path
from .seeding import stable_seed
from .panel import BasisUniverse, ReturnsPanel, RiskFreeSeries
from .regression import ols, out_of_sample_r2
from .selection import (
    GibsConfig,
    gibs_select,
    orthogonalize_universe,
    select_prototypes,
)

DEFAULT_METHODS = ("ff5", "gibs", "gibs+ff5", "lasso-cv",
                   "enet:0.75", "enet:0.5", "enet:0.25", "ridge")


@dataclass(frozen=True)
class MethodRow:
    method: str
    avg_selected: float
    avg_significant: float
    avg_adj_r2: float
    avg_oos_r2: float


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[MethodRow, ...]
    n_securities: int
    n_prototypes: int

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)


def _parse_method(spec: str):
    if spec in ("ff5", "gibs", "gibs+ff5", "lasso-cv", "ridge"):
        return spec, None
    if spec.startswith("enet:"):
        alpha = float(spec.split(":", 1)[1])
        if not 0 < alpha < 1:
            raise ConfigError(f"elastic-net alpha must be in (0,1), got {alpha}")
        return "enet", alpha
    raise ConfigError(f"unknown comparison method {spec!r}")


def _refit_stats(orth, names, y, x_hold, y_hold, sig_level):
    """OLS refit on original columns; returns (n_sig, adj_r2, oos)."""
    baseline = np.full(y_hold.shape[0], float(y.mean()))
    if names:
        fit = ols(orth.columns(names), y, add_intercept=True)
        n_sig = int(np.sum(fit.p_values[1:] < sig_level))
        idx = [orth.assets.index(a) for a in names]
        pred = fit.predict(x_hold[:, idx])
        adj = fit.adj_r2
    else:
        fit = ols(np.ones((y.shape[0], 1)), y)
        n_sig = 0
        pred = np.full(y_hold.shape[0], float(fit.coefficients[0]))
        adj = 0.0
    return n_sig, adj, out_of_sample_r2(pred, y_hold, baseline)


def _ridge_cv_fit(xt, y, folds, seed, n_lambda=100):
    """Ridge on standardised columns with lambda from K-fold CV.

    Solved in closed form from one eigendecomposition per fold; the
    returned callable predicts on raw holdout rows.
    """
    n = xt.shape[0]
    mean = xt.mean(axis=0)
    sd = xt.std(axis=0)
    scale = np.where(sd > 1e-12, sd, 1.0)
    xs = (xt - mean) / scale
    ym = float(y.mean())
    yc = y - ym
    base = float(np.max(np.abs(xs.T @ yc / n)))
    base = base if base > 0 else 1e-12
    lambdas = np.geomspace(base * 100, base * 1e-4, n_lambda)

    def solve_all(xtr, ytr):
        g = xtr.T @ xtr / xtr.shape[0]
        c = xtr.T @ ytr / xtr.shape[0]
        w, v = np.linalg.eigh(g)
        vc = v.T @ c
        return np.stack([v @ (vc / (w + lam)) for lam in lambdas])

    rng = np.random.default_rng(stable_seed(seed))
    perm = rng.permutation(n)
    blocks = np.array_split(perm, folds)
    mse = np.zeros((folds, len(lambdas)))
    for f, test_idx in enumerate(blocks):
        train = np.setdiff1d(perm, test_idx, assume_unique=True)
        betas = solve_all(xs[train], yc[train])
        err = betas @ xs[test_idx].T - yc[test_idx]
        mse[f] = np.mean(err * err, axis=1)
    best = int(np.argmin(mse.mean(axis=0)))
    beta = solve_all(xs, yc)[best]

    def predict(x_raw):
        return ym + ((x_raw - mean) / scale) @ beta

    return predict


def compare_methods(securities: ReturnsPanel, universe: BasisUniverse,
                    rf: RiskFreeSeries, config: GibsConfig,
                    methods=DEFAULT_METHODS, *, holdout_len: int, seed: int = 0,
                    threads: int = 1) -> ComparisonTable:
    """Average selection counts, fits, and 1-step-ahead R^2 per method."""
    from .parallel import ordered_map

    if holdout_len < 1:
        raise ConfigError("holdout must be nonempty")
    parsed = [_parse_method(m) for m in methods]
    if any(k in ("ff5", "gibs+ff5") for k, _ in parsed) and not config.fixed_factors:
        raise ConfigError("ff5 baselines need config.fixed_factors")

    n_total = securities.n_periods
    train_stop = n_total - holdout_len
    train_uni = BasisUniverse(universe.panel.slice_rows(0, train_stop),
                              universe.categories, universe.market_index)
    orth = orthogonalize_universe(train_uni, rf.slice_rows(0, train_stop),
                                  config.protected_assets)
    protos = select_prototypes(orth, universe.categories, config)
    xt = orth.tilde_columns(protos)

    hold_rows = np.arange(train_stop, n_total)
    bx = universe.panel.values[hold_rows] - rf.rate[hold_rows, None]
    cols = [universe.panel.assets.index(a) for a in orth.assets]
    x_hold = bx[:, cols]

    def run(i):
        y = securities.values[orth.row_index, i] - rf.rate[orth.row_index]
        y_hold = securities.values[hold_rows, i] - rf.rate[hold_rows]
        out = {}
        path_cache: dict[float, tuple[LassoPath, np.ndarray]] = {}

        def cv_support(alpha):
            if alpha not in path_cache:
                path = lasso_path(xt, y, config.n_lambda,
                                  config.lambda_min_ratio, alpha=alpha)
                curve = cross_validate(xt, y, config.cv_folds, path,
                                       (seed, i), alpha=alpha)
                beta = path.coef_at(curve.lambda_min)
                path_cache[alpha] = (path, beta)
            return path_cache[alpha][1]

        for kind, alpha in parsed:
            if kind == "ff5":
                names = [a for a in orth.assets if a in config.fixed_factors]
                n_sig, adj, oos = _refit_stats(orth, names, y, x_hold, y_hold,
                                               config.sig_level)
                out[("ff5", None)] = (len(names), n_sig, adj, oos)
            elif kind in ("gibs", "gibs+ff5"):
                cfg = config
                if kind == "gibs+ff5" and not config.include_fixed_factors:
                    from dataclasses import replace
                    cfg = replace(config, include_fixed_factors=True)
                elif kind == "gibs" and config.include_fixed_factors:
                    from dataclasses import replace
                    cfg = replace(config, include_fixed_factors=False)
                res = gibs_select(y, orth, protos, cfg, (seed, i),
                                  holdout=(x_hold, y_hold))
                out[(kind, None)] = (len(res.selected), len(res.significant),
                                     res.fit.adj_r2 if res.selected else 0.0,
                                     res.oos_r2)
            elif kind in ("lasso-cv", "enet"):
                a = 1.0 if kind == "lasso-cv" else alpha
                beta = cv_support(a)
                names = [protos[j] for j in np.flatnonzero(beta)]
                n_sig, adj, oos = _refit_stats(orth, names, y, x_hold, y_hold,
                                               config.sig_level)
                out[(kind, alpha)] = (len(names), n_sig, adj, oos)
            else:  # ridge
                predict = _ridge_cv_fit(xt, y, config.cv_folds, (seed, i, "r"))
                idxp = [orth.assets.index(a) for a in protos]
                pred = predict(x_hold[:, idxp])
                baseline = np.full(y_hold.shape[0], float(y.mean()))
                oos = out_of_sample_r2(pred, y_hold, baseline)
                out[("ridge", None)] = (len(protos), np.nan, np.nan, oos)
        return out

    per_sec = ordered_map(run, range(securities.n_assets), threads)
    rows = []
    for (kind, alpha), label in zip(parsed, methods):
        key = (kind, alpha)
        sel = [d[key][0] for d in per_sec]
        sig = [d[key][1] for d in per_sec]
        adj = [d[key][2] for d in per_sec]
        oos = [d[key][3] for d in per_sec]
        rows.append(MethodRow(label, float(np.mean(sel)),
                              float(np.mean(sig)), float(np.mean(adj)),
                              float(np.mean(oos))))
    return ComparisonTable(tuple(rows), securities.n_assets, len(protos))
