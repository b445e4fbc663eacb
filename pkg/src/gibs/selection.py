"""The groupwise interpretable basis selection pipeline.

Steps: orthogonalize every non-protected basis asset against the
market excess return, reduce each category to minimax prototypes, pool
and reduce again, select per security with a capped one-standard-error
LASSO, then refit by OLS on the original (unorthogonalised) columns to
obtain coefficients and significance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .cluster import correlation_distance, cut_by_threshold, minimax_cluster
from .errors import (
    DegenerateAfterSelection,
    MissingMarketIndex,
    UnclassifiedEntity,
)
from .lasso import cross_validate, lasso_path, select_lambda_gibs
from .panel import BasisUniverse, ReturnsPanel, RiskFreeSeries
from .regression import OlsFit, ols, out_of_sample_r2, project_out

log = logging.getLogger(__name__)

ZERO_COLUMN_RTOL = 1e-10


@dataclass(frozen=True)
class GibsConfig:
    """Tuning parameters of the selection pipeline."""

    category_threshold: float = 0.5
    global_threshold: float = 0.5
    support_cap: int = 20
    cv_folds: int = 10
    sig_level: float = 0.05
    protected_assets: tuple[str, ...] = ()
    include_fixed_factors: bool = False
    fixed_factors: tuple[str, ...] = ()
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-3
    max_prototypes_per_category: int | None = None

    def __post_init__(self):
        if not (0 <= self.category_threshold <= 1
                and 0 <= self.global_threshold <= 1):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.support_cap < 0:
            raise ValueError("support_cap must be non-negative")
        if not 0 < self.sig_level < 1:
            raise ValueError("sig_level must lie in (0, 1)")
        object.__setattr__(self, "protected_assets", tuple(self.protected_assets))
        object.__setattr__(self, "fixed_factors", tuple(self.fixed_factors))


@dataclass(frozen=True)
class OrthogonalizedUniverse:
    """Basis matrix with non-protected columns residualised on the market."""

    assets: tuple[str, ...]
    x_orig: np.ndarray    # (n, k) excess returns
    x_tilde: np.ndarray   # (n, k) market column and protected kept verbatim
    market: str
    protected: tuple[str, ...]
    row_index: np.ndarray  # rows of the source panel that were used
    dropped: tuple[str, ...] = ()

    def columns(self, names) -> np.ndarray:
        idx = [self.assets.index(a) for a in names]
        return self.x_orig[:, idx]

    def tilde_columns(self, names) -> np.ndarray:
        idx = [self.assets.index(a) for a in names]
        return self.x_tilde[:, idx]


def orthogonalize_universe(universe: BasisUniverse, rf: RiskFreeSeries,
                           protected=()) -> OrthogonalizedUniverse:
    """Project the market excess return out of every unprotected column.

    Rows with any missing basis cell are dropped listwise.  Columns
    whose residual is numerically zero (assets indistinguishable from
    the market) are dropped with a warning.
    """
    panel = universe.panel
    if universe.market_index not in panel.assets:
        raise MissingMarketIndex(universe.market_index)
    keep_rows = np.flatnonzero(panel.mask.all(axis=1))
    if keep_rows.size < 3:
        raise DegenerateAfterSelection("fewer than three complete basis rows")
    x = panel.values[keep_rows] - rf.rate[keep_rows, None]
    protected = tuple(dict.fromkeys((universe.market_index, *protected)))
    m_col = x[:, panel.assets.index(universe.market_index)]

    names, orig_cols, tilde_cols, dropped = [], [], [], []
    for j, asset in enumerate(panel.assets):
        col = x[:, j]
        if asset in protected:
            resid = col
        else:
            resid = project_out(col, m_col)
            if np.linalg.norm(resid) <= ZERO_COLUMN_RTOL * max(
                    np.linalg.norm(col), 1.0):
                dropped.append(asset)
                continue
        names.append(asset)
        orig_cols.append(col)
        tilde_cols.append(resid)
    if dropped:
        log.warning("dropping %d basis column(s) identical to the market: %s",
                    len(dropped), dropped)
    return OrthogonalizedUniverse(
        tuple(names), np.column_stack(orig_cols), np.column_stack(tilde_cols),
        universe.market_index, protected, keep_rows, tuple(dropped))


def _prototype_pass(orth: OrthogonalizedUniverse, names, threshold,
                    max_count=None):
    """One clustering pass; returns prototype names in universe order."""
    if len(names) <= 1:
        return list(names)
    cols = orth.tilde_columns(names)
    panel = ReturnsPanel(tuple(str(i) for i in range(cols.shape[0])),
                         tuple(names), cols, np.ones(cols.shape, dtype=bool))
    dend = minimax_cluster(correlation_distance(panel))
    cut = cut_by_threshold(dend, threshold)
    if max_count is not None and len(cut) > max_count:
        cut = _cut_by_count(dend, max_count)
    return [names[proto] for _, proto in cut]


def _cut_by_count(dend, k):
    """Replay merges until exactly k clusters remain."""
    n = dend.leaves
    clusters = {i: [i] for i in range(n)}
    protos = {i: i for i in range(n)}
    next_id = n
    for a, b, _, proto in dend.merges:
        if len(clusters) <= k:
            break
        clusters[next_id] = clusters.pop(a) + clusters.pop(b)
        protos.pop(a)
        protos.pop(b)
        protos[next_id] = proto
        next_id += 1
    return [(tuple(sorted(clusters[c])), protos[c])
            for c in sorted(clusters, key=lambda c: min(clusters[c]))]


def select_prototypes(orth: OrthogonalizedUniverse, categories: dict,
                      config: GibsConfig) -> tuple[str, ...]:
    """Two-stage prototype reduction: within category, then pooled.

    Protected assets bypass clustering and are always part of the
    result.  The result preserves the universe column order.
    """
    candidates = [a for a in orth.assets if a not in orth.protected]
    missing = [a for a in candidates if a not in categories]
    if missing:
        raise UnclassifiedEntity(f"no category for: {missing[:5]}")
    by_cat: dict[str, list[str]] = {}
    for a in candidates:
        by_cat.setdefault(categories[a], []).append(a)

    pooled: list[str] = []
    for cat in sorted(by_cat):
        pooled.extend(_prototype_pass(orth, by_cat[cat],
                                      config.category_threshold,
                                      config.max_prototypes_per_category))
    final = _prototype_pass(orth, pooled, config.global_threshold)
    chosen = set(final) | set(orth.protected)
    return tuple(a for a in orth.assets if a in chosen)


@dataclass(frozen=True)
class SelectionResult:
    """Per-security outcome of the selection pipeline."""

    security: str
    selected: tuple[str, ...]
    significant: tuple[str, ...]
    fit: OlsFit
    lambda_: float
    oos_r2: float | None = None

    @property
    def alpha(self) -> float | None:
        return float(self.fit.coefficients[0]) if self.fit.intercept_included else None

    @property
    def alpha_p_value(self) -> float | None:
        return float(self.fit.p_values[0]) if self.fit.intercept_included else None

    @property
    def adj_r2(self) -> float:
        return self.fit.adj_r2


def gibs_select(y: np.ndarray, orth: OrthogonalizedUniverse,
                prototypes, config: GibsConfig, seed, *,
                security: str = "", intercept: bool = True,
                holdout: tuple[np.ndarray, np.ndarray] | None = None) -> SelectionResult:
    """Select basis assets for one security and refit by OLS.

    LASSO runs on the orthogonalised prototype columns with the capped
    one-standard-error lambda; the OLS refit uses the original columns
    (plus an intercept unless ``intercept`` is false).  ``holdout``
    supplies (X_holdout, y_holdout) where X_holdout has one column per
    ``orth.assets``; the out-of-sample R^2 uses the training-mean
    baseline.
    """
    y = np.asarray(y, dtype=float).ravel()
    protos = tuple(prototypes)
    xt = orth.tilde_columns(protos)
    if y.shape[0] != xt.shape[0]:
        raise DegenerateAfterSelection("response and design row counts differ")

    path = lasso_path(xt, y, config.n_lambda, config.lambda_min_ratio)
    curve = cross_validate(xt, y, config.cv_folds, path, seed)
    lam = select_lambda_gibs(curve, path, config.support_cap)
    beta = path.coef_at(lam)
    selected = [protos[j] for j in np.flatnonzero(beta)]

    if config.include_fixed_factors:
        extra = [a for a in config.fixed_factors
                 if a in orth.assets and a not in selected]
        selected = selected + extra
    selected = tuple(a for a in orth.assets if a in set(selected))

    k = len(selected) + (1 if intercept else 0)
    if y.shape[0] <= k + 1:
        raise DegenerateAfterSelection(
            f"{y.shape[0]} rows cannot support {len(selected)} selected assets")

    if selected:
        fit = ols(orth.columns(selected), y, add_intercept=intercept)
        offset = 1 if intercept else 0
        significant = tuple(
            a for i, a in enumerate(selected)
            if fit.p_values[offset + i] < config.sig_level)
    else:
        design = np.ones((y.shape[0], 1))
        fit = ols(design, y, add_intercept=False)
        fit = replace(fit, intercept_included=intercept)
        significant = ()

    oos = None
    if holdout is not None:
        x_hold_all, y_hold = holdout
        x_hold_all = np.atleast_2d(np.asarray(x_hold_all, dtype=float))
        y_hold = np.asarray(y_hold, dtype=float).ravel()
        if selected:
            idx = [orth.assets.index(a) for a in selected]
            pred = fit.predict(x_hold_all[:, idx])
        else:
            base_val = fit.coefficients[0] if intercept else 0.0
            pred = np.full(y_hold.shape[0], base_val)
        baseline = np.full(y_hold.shape[0], float(y.mean()))
        oos = out_of_sample_r2(pred, y_hold, baseline)

    return SelectionResult(security, selected, significant, fit, lam, oos)


@dataclass(frozen=True)
class SelectionSummary:
    """Counts of significant basis assets by category and security class."""

    basis_categories: tuple[str, ...]
    security_classes: tuple[str, ...]
    count_matrix: np.ndarray       # (m categories, l classes) ints
    proportion_matrix: np.ndarray  # column-normalised; zero columns left zero
    avg_selected: float
    avg_significant: float


def summarize_selection(results, security_classes: dict,
                        basis_categories: dict) -> SelectionSummary:
    """Aggregate significant selections into count and proportion matrices.

    ``count[b, d]`` is the number of significant basis assets in
    category b across securities of class d; proportions normalise each
    class column to sum to one (columns with no counts stay zero).
    """
    results = list(results)
    for r in results:
        if r.security not in security_classes:
            raise UnclassifiedEntity(f"no class for security {r.security!r}")
        for a in r.selected:
            if a not in basis_categories:
                raise UnclassifiedEntity(f"no category for basis asset {a!r}")
    cats = tuple(sorted(set(basis_categories.values())))
    classes = tuple(sorted(set(security_classes.values())))
    cat_ix = {c: i for i, c in enumerate(cats)}
    cls_ix = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(cats), len(classes)), dtype=int)
    for r in results:
        d = cls_ix[security_classes[r.security]]
        for a in r.significant:
            counts[cat_ix[basis_categories[a]], d] += 1
    sums = counts.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        props = np.where(sums > 0, counts / np.maximum(sums, 1), 0.0)
    avg_sel = float(np.mean([len(r.selected) for r in results])) if results else 0.0
    avg_sig = float(np.mean([len(r.significant) for r in results])) if results else 0.0
    return SelectionSummary(cats, classes, counts, props, avg_sel, avg_sig)


def gibs_dimension(universe: BasisUniverse, rf: RiskFreeSeries,
                   config: GibsConfig) -> int:
    """Number of prototypes the two-stage reduction keeps."""
    orth = orthogonalize_universe(universe, rf, config.protected_assets)
    return len(select_prototypes(orth, universe.categories, config))


def pca_dimension(universe: BasisUniverse, rf: RiskFreeSeries,
                  variance_frac: float = 0.9) -> int:
    """Principal components needed to reach a variance share.

    Computed from the covariance of basis excess returns on listwise
    complete rows.
    """
    if not 0 < variance_frac <= 1:
        raise ValueError("variance_frac must lie in (0, 1]")
    panel = universe.panel
    rows = np.flatnonzero(panel.mask.all(axis=1))
    if rows.size < 3:
        raise DegenerateAfterSelection("fewer than three complete basis rows")
    x = panel.values[rows] - rf.rate[rows, None]
    cov = np.cov(x, rowvar=False)
    eig = np.sort(np.linalg.eigvalsh(np.atleast_2d(cov)))[::-1]
    eig = np.clip(eig, 0.0, None)
    total = eig.sum()
    if total <= 0:
        return 0
    share = np.cumsum(eig) / total
    return int(np.searchsorted(share, variance_frac - 1e-12) + 1)


# --- per-security batch driver ----------------------------------------------

def fit_panel(securities: ReturnsPanel, universe: BasisUniverse,
              rf: RiskFreeSeries, config: GibsConfig, seed: int, *,
              holdout_len: int = 0, threads: int = 1):
    """Run the pipeline for every security in a panel.

    The panel is split into a training window and a trailing holdout of
    ``holdout_len`` rows used only for out-of-sample R^2.  Rows with a
    missing security observation are dropped listwise per security.
    Results are ordered by panel column and independent of ``threads``.
    """
    from .parallel import ordered_map

    if securities.timestamps != universe.panel.timestamps:
        raise UnclassifiedEntity("securities and basis timestamps differ")
    n_total = securities.n_periods
    train_stop = n_total - holdout_len
    if train_stop < 10:
        raise DegenerateAfterSelection("training window too short")

    train_universe = BasisUniverse(
        universe.panel.slice_rows(0, train_stop), universe.categories,
        universe.market_index)
    orth = orthogonalize_universe(
        train_universe, rf.slice_rows(0, train_stop), config.protected_assets)
    protos = select_prototypes(orth, universe.categories, config)

    hold_rows = np.arange(train_stop, n_total)
    basis_hold_ok = universe.panel.mask[hold_rows].all(axis=1) if holdout_len else None

    def run(i):
        name = securities.assets[i]
        obs = securities.mask[orth.row_index, i]
        rows = orth.row_index[obs]
        sub = OrthogonalizedUniverse(
            orth.assets, orth.x_orig[obs], orth.x_tilde[obs], orth.market,
            orth.protected, rows, orth.dropped)
        y = securities.values[rows, i] - rf.rate[rows]
        holdout = None
        if holdout_len:
            ok = basis_hold_ok & securities.mask[hold_rows, i]
            hr = hold_rows[ok]
            if hr.size:
                bx = universe.panel.values[hr] - rf.rate[hr, None]
                cols = [universe.panel.assets.index(a) for a in orth.assets]
                y_hold = securities.values[hr, i] - rf.rate[hr]
                holdout = (bx[:, cols], y_hold)
        return gibs_select(y, sub, protos, config, (seed, i),
                           security=name, holdout=holdout)

    return list(ordered_map(run, range(securities.n_assets), threads)), protos
