"""Dense linear-model machinery: OLS with inference, projection,
nested F-tests, Welch's unequal-variance t-test, and out-of-sample R^2.

All routines are pure functions of their inputs and safe to call from
parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import (
    NotNested,
    RankDeficient,
    TooFewObservations,
    ZeroBaselineSSE,
    ZeroDirection,
    ZeroResidual,
)

RANK_TOL = 1e-10


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit with classical inference.

    ``coefficients`` follow the column order of the design matrix; when
    an intercept was requested it is column 0.  ``p_values`` are
    two-sided Student-t probabilities with ``df_resid`` degrees of
    freedom.
    """

    coefficients: np.ndarray
    stderr: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    residuals: np.ndarray
    r2: float
    adj_r2: float
    rss: float
    df_resid: int
    n_obs: int
    intercept_included: bool

    @property
    def n_params(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.intercept_included:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return X @ self.coefficients


@dataclass(frozen=True)
class FTestResult:
    f_stat: float
    df1: int
    df2: int
    p_value: float


@dataclass(frozen=True)
class WelchResult:
    t_stat: float
    df: float
    p_value: float


def ols(X: np.ndarray, y: np.ndarray, add_intercept: bool = False) -> OlsFit:
    """Fit y on X by QR least squares with rank checking.

    When ``add_intercept`` is true a ones column is prepended.  The
    total sum of squares for R^2 is centered whenever an intercept is
    present and uncentered otherwise.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    n, k = X.shape
    if y.shape[0] != n:
        raise TooFewObservations(f"X has {n} rows but y has {y.shape[0]}")
    if n <= k:
        raise TooFewObservations(f"need n > k, got n={n}, k={k}")

    q, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    col_norms = np.linalg.norm(X, axis=0)
    tol = RANK_TOL * max(col_norms.max(), 1.0)
    if diag.min() <= tol:
        raise RankDeficient(
            f"design matrix is rank deficient (pivot {diag.min():.3e} <= {tol:.3e})")

    beta_piv = scipy.linalg.solve_triangular(r, q.T @ y)
    beta = np.empty_like(beta_piv)
    beta[piv] = beta_piv
    resid = y - X @ beta
    rss = float(resid @ resid)
    df_resid = n - k
    sigma2 = rss / df_resid

    # var(beta) = sigma^2 (X'X)^{-1} via the pivoted R factor
    rinv = scipy.linalg.solve_triangular(r, np.eye(k))
    var_piv = sigma2 * np.sum(rinv * rinv, axis=1)
    var = np.empty_like(var_piv)
    var[piv] = var_piv
    stderr = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(stderr > 0, beta / stderr, 0.0)
    p_values = 2.0 * stats.t.sf(np.abs(t_stats), df_resid)

    has_const = add_intercept or _has_constant_column(X)
    if has_const:
        tss = float(np.sum((y - y.mean()) ** 2))
        df_total = n - 1
    else:
        tss = float(y @ y)
        df_total = n
    if tss > 0:
        r2 = 1.0 - rss / tss
        adj_r2 = 1.0 - (rss / df_resid) / (tss / df_total)
    else:
        r2 = adj_r2 = 0.0

    return OlsFit(beta, stderr, t_stats, p_values, resid, r2, adj_r2,
                  rss, df_resid, n, bool(add_intercept))


def _has_constant_column(X: np.ndarray) -> bool:
    return bool(np.any(np.all(X == X[0, :], axis=0) & (X[0, :] != 0)))


def project_out(target: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Residual of regressing ``target`` on ``direction`` without intercept."""
    target = np.asarray(target, dtype=float)
    direction = np.asarray(direction, dtype=float).ravel()
    nrm2 = float(direction @ direction)
    if nrm2 <= 0 or not np.isfinite(nrm2):
        raise ZeroDirection("projection direction has zero norm")
    if target.ndim == 1:
        return target - direction * (direction @ target / nrm2)
    return target - np.outer(direction, direction @ target / nrm2)


def nested_f_test(restricted: OlsFit, full: OlsFit) -> FTestResult:
    """ANOVA comparison of two nested least-squares fits on the same y.

    F = ((RSS_restricted - RSS_full) / extra_params)
        / (RSS_full / df_resid_full).
    """
    if restricted.n_obs != full.n_obs:
        raise NotNested("fits use different numbers of observations")
    r2 = full.n_params - restricted.n_params
    if r2 <= 0:
        raise NotNested("full model must add at least one regressor")
    if full.rss > restricted.rss * (1 + 1e-8) + 1e-12:
        raise NotNested("full model fits worse than restricted; not nested")
    if full.df_resid < 1:
        raise TooFewObservations("full model has no residual degrees of freedom")
    if full.rss <= 0:
        raise ZeroResidual("full model has zero residual sum of squares")
    num = max(restricted.rss - full.rss, 0.0) / r2
    den = full.rss / full.df_resid
    f_stat = num / den
    p = float(stats.f.sf(f_stat, r2, full.df_resid))
    return FTestResult(float(f_stat), r2, full.df_resid, p)


def welch_test(sample_a, sample_b, alternative: str = "greater") -> WelchResult:
    """Welch's unequal-variance t-test of mean(a) vs mean(b).

    ``greater`` tests H0: mean(a) <= mean(b) against HA: mean(a) > mean(b).
    Two constant, equal samples return the documented convention
    (t=0, p=0.5).
    """
    if alternative != "greater":
        raise ValueError("only the one-sided 'greater' alternative is supported")
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise TooFewObservations("each sample needs at least two observations")
    va = a.var(ddof=1) / a.shape[0]
    vb = b.var(ddof=1) / b.shape[0]
    denom = va + vb
    if denom <= 0:
        if a.mean() == b.mean():
            return WelchResult(0.0, float(a.shape[0] + b.shape[0] - 2), 0.5)
        t = np.inf if a.mean() > b.mean() else -np.inf
        return WelchResult(float(t), float(a.shape[0] + b.shape[0] - 2),
                           0.0 if t > 0 else 1.0)
    t = (a.mean() - b.mean()) / np.sqrt(denom)
    df = denom ** 2 / (va ** 2 / (a.shape[0] - 1) + vb ** 2 / (b.shape[0] - 1))
    p = float(stats.t.sf(t, df))
    return WelchResult(float(t), float(df), p)


def out_of_sample_r2(predicted, realized, baseline) -> float:
    """Campbell-Thompson style out-of-sample R^2.

    ``1 - SSE(prediction) / SSE(baseline)`` where the baseline is the
    historical-mean forecast.
    """
    predicted = np.asarray(predicted, dtype=float).ravel()
    realized = np.asarray(realized, dtype=float).ravel()
    baseline = np.asarray(baseline, dtype=float).ravel()
    if not (predicted.shape == realized.shape == baseline.shape) or predicted.size < 1:
        raise TooFewObservations("series must share a positive length")
    sse_base = float(np.sum((realized - baseline) ** 2))
    if sse_base <= 0:
        raise ZeroBaselineSSE("baseline SSE is zero")
    sse_pred = float(np.sum((realized - predicted) ** 2))
    return 1.0 - sse_pred / sse_base
