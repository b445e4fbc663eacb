"""Coordinate-descent LASSO, regularization paths, K-fold cross
validation, and the capped one-standard-error lambda rule.

The solver minimises ``(1/2n) ||y - X b||^2 + lam * ||b||_1`` by cyclic
coordinate descent on the Gram matrix.  By default columns are scaled
to unit standard deviation and the response is centered inside the
solver (an implicit unpenalised intercept); coefficients are reported
on the original scale.  An elastic-net ridge term is supported for the
method-comparison harness only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DidNotConverge, TooFewObservations
from .seeding import stable_seed

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap(args[0]) if args and callable(args[0]) else wrap


MAX_SWEEPS = 10_000
COORD_TOL = 1e-9


@njit(cache=True)
def _cd_sweeps(gram, cty, lam1, lam2, beta, gb, max_sweeps, tol, obj_buf):
    """Full cyclic sweeps until the largest coefficient change < tol.

    ``gram`` is X'X/n, ``cty`` is X'y/n; ``beta`` and ``gb = gram @ beta``
    are updated in place.  When ``obj_buf`` is nonempty the objective
    (up to the constant y'y/2n term) is recorded per sweep.
    """
    p = beta.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for j in range(p):
            denom = gram[j, j] + lam2
            if denom <= 1e-300:
                continue
            z = cty[j] - gb[j] + gram[j, j] * beta[j]
            if z > lam1:
                new = (z - lam1) / denom
            elif z < -lam1:
                new = (z + lam1) / denom
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                beta[j] = new
                for k in range(p):
                    gb[k] += gram[k, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if obj_buf.shape[0] >= sweeps:
            quad = 0.0
            l1 = 0.0
            l2 = 0.0
            for j in range(p):
                quad += beta[j] * (0.5 * gb[j] - cty[j])
                l1 += abs(beta[j])
                l2 += beta[j] * beta[j]
            obj_buf[sweeps - 1] = quad + lam1 * l1 + 0.5 * lam2 * l2
        if max_delta < tol:
            return sweeps, True
    return sweeps, False


@njit(cache=True)
def _cd_grid(gram, cty, lambdas, alpha, max_sweeps, tol):
    """Warm-started solves along a lambda grid, entirely in the kernel.

    Returns (coefs, ok_flag); coefs[i] solves at lambdas[i].
    """
    p = gram.shape[0]
    beta = np.zeros(p)
    gb = np.zeros(p)
    coefs = np.empty((lambdas.shape[0], p))
    empty = np.empty(0)
    for i in range(lambdas.shape[0]):
        lam1 = lambdas[i] * alpha
        lam2 = lambdas[i] * (1.0 - alpha)
        _, ok = _cd_sweeps(gram, cty, lam1, lam2, beta, gb, max_sweeps, tol,
                           empty)
        if not ok:
            return coefs, False
        coefs[i] = beta
    return coefs, True


@dataclass(frozen=True)
class _Prepared:
    """Standardised problem data shared across lambdas and folds."""

    gram: np.ndarray
    cty: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    n: int

    @property
    def lam_max(self) -> float:
        m = float(np.max(np.abs(self.cty))) if self.cty.size else 0.0
        return m if m > 0 else 1e-12


def _prepare(X, y, standardize: bool) -> _Prepared:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise TooFewObservations("X and y disagree on the number of rows")
    if n < 2:
        raise TooFewObservations("need at least two observations")
    if standardize:
        x_mean = X.mean(axis=0)
        sd = X.std(axis=0)
        x_scale = np.where(sd > 1e-12, sd, 1.0)
        xs = (X - x_mean) / x_scale
        xs[:, sd <= 1e-12] = 0.0
        y_mean = float(y.mean())
        yc = y - y_mean
    else:
        x_mean = np.zeros(p)
        x_scale = np.ones(p)
        xs = X
        y_mean = 0.0
        yc = y
    gram = np.ascontiguousarray(xs.T @ xs / n)
    cty = np.ascontiguousarray(xs.T @ yc / n)
    return _Prepared(gram, cty, x_mean, x_scale, y_mean, n)


def _solve_at(prep: _Prepared, lam1: float, lam2: float, beta_std: np.ndarray,
              max_sweeps: int, tol: float, obj_buf: np.ndarray):
    gb = np.ascontiguousarray(prep.gram @ beta_std)
    sweeps, ok = _cd_sweeps(prep.gram, prep.cty, lam1, lam2, beta_std, gb,
                            max_sweeps, tol, obj_buf)
    if not ok:
        raise DidNotConverge(
            f"coordinate descent did not converge in {max_sweeps} sweeps")
    return sweeps


def _to_original(prep: _Prepared, beta_std: np.ndarray):
    beta = beta_std / prep.x_scale
    intercept = prep.y_mean - float(prep.x_mean @ beta)
    return beta, intercept


def soft_threshold(z, threshold):
    """sign(z) * max(|z| - threshold, 0)."""
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - threshold, 0.0)


def lasso_fit(X, y, lam: float, *, standardize: bool = True,
              alpha: float = 1.0, max_sweeps: int = MAX_SWEEPS,
              tol: float = COORD_TOL, check_objective: bool = False):
    """Solve the penalised least-squares problem at a single lambda.

    ``alpha`` blends the L1 and L2 penalties (1 = pure LASSO); values
    below 1 exist for the comparison harness.  With
    ``check_objective`` the per-sweep objective is asserted to be
    non-increasing.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    prep = _prepare(X, y, standardize)
    beta_std = np.zeros(prep.gram.shape[0])
    obj_buf = np.empty(max_sweeps if check_objective else 0)
    sweeps = _solve_at(prep, lam * alpha, lam * (1.0 - alpha), beta_std,
                       max_sweeps, tol, obj_buf)
    if check_objective and sweeps > 1:
        objs = obj_buf[:sweeps]
        if np.any(np.diff(objs) > 1e-10 * (1.0 + np.abs(objs[:-1]))):
            raise AssertionError("objective increased during a sweep")
    beta, _ = _to_original(prep, beta_std)
    return beta


@dataclass(frozen=True)
class LassoPath:
    """Coefficients along a descending lambda grid (original scale)."""

    lambdas: np.ndarray
    coefs: np.ndarray       # (n_lambda, p)
    intercepts: np.ndarray  # (n_lambda,)
    support_sizes: np.ndarray

    def index_of(self, lam: float) -> int:
        return int(np.argmin(np.abs(self.lambdas - lam)))

    def coef_at(self, lam: float) -> np.ndarray:
        return self.coefs[self.index_of(lam)]


def _lambda_grid(lam_max: float, n_lambda: int, lambda_min_ratio: float):
    return np.geomspace(lam_max, lam_max * lambda_min_ratio, n_lambda)


def _solve_grid(prep: _Prepared, lambdas, alpha: float,
                max_sweeps: int, tol: float):
    coefs_std, ok = _cd_grid(prep.gram, prep.cty,
                             np.ascontiguousarray(lambdas, dtype=float),
                             alpha, max_sweeps, tol)
    if not ok:
        raise DidNotConverge(
            f"coordinate descent did not converge in {max_sweeps} sweeps")
    return coefs_std


def lasso_path(X, y, n_lambda: int = 100, lambda_min_ratio: float = 1e-3, *,
               standardize: bool = True, alpha: float = 1.0,
               max_sweeps: int = MAX_SWEEPS, tol: float = COORD_TOL) -> LassoPath:
    """Warm-started solutions on a log-spaced grid from lambda_max down.

    The grid starts at the smallest lambda that zeroes every
    coefficient, so the first entry is always the empty model.
    """
    if n_lambda < 2:
        raise ValueError("need at least two grid points")
    prep = _prepare(X, y, standardize)
    lambdas = _lambda_grid(prep.lam_max, n_lambda, lambda_min_ratio)
    coefs_std = _solve_grid(prep, lambdas, alpha, max_sweeps, tol)
    coefs = coefs_std / prep.x_scale
    intercepts = prep.y_mean - coefs @ prep.x_mean
    support = np.count_nonzero(coefs_std, axis=1)
    return LassoPath(lambdas, coefs, intercepts, support)


@dataclass(frozen=True)
class CvCurve:
    """Cross-validation error curve over a lambda grid."""

    lambdas: np.ndarray
    mean_error: np.ndarray
    se_error: np.ndarray
    lambda_min: float
    lambda_1se: float


def cross_validate(X, y, folds: int, path: LassoPath, seed, *,
                   standardize: bool = True, alpha: float = 1.0,
                   max_sweeps: int = MAX_SWEEPS, tol: float = COORD_TOL) -> CvCurve:
    """K-fold CV error along the grid of an existing path.

    Fold assignment is a seeded permutation split into K nearly equal
    blocks, so results are deterministic and independent of evaluation
    order.  ``lambda_1se`` is the largest lambda whose mean error stays
    within one standard error of the minimum.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if folds < 2:
        raise TooFewObservations("need at least two folds")
    if n < max(folds, 4):
        raise TooFewObservations(f"{n} observations cannot support {folds}-fold CV")
    rng = np.random.default_rng(stable_seed(seed))
    perm = rng.permutation(n)
    blocks = np.array_split(perm, folds)

    lambdas = path.lambdas
    fold_mse = np.empty((folds, len(lambdas)))
    for f, test_idx in enumerate(blocks):
        train = np.setdiff1d(perm, test_idx, assume_unique=True)
        prep = _prepare(X[train], y[train], standardize)
        coefs_std = _solve_grid(prep, lambdas, alpha, max_sweeps, tol)
        xs_test = (X[test_idx] - prep.x_mean) / prep.x_scale
        pred = prep.y_mean + coefs_std @ xs_test.T  # (L, n_test)
        err = pred - y[test_idx]
        fold_mse[f] = np.mean(err * err, axis=1)

    mean_error = fold_mse.mean(axis=0)
    se_error = fold_mse.std(axis=0, ddof=1) / np.sqrt(folds)
    i_min = int(np.argmin(mean_error))
    lambda_min = float(lambdas[i_min])
    cutoff = mean_error[i_min] + se_error[i_min]
    i_1se = int(np.flatnonzero(mean_error <= cutoff)[0])
    return CvCurve(lambdas, mean_error, se_error, lambda_min,
                   float(lambdas[i_1se]))


def select_lambda_gibs(curve: CvCurve, path: LassoPath, cap: int = 20) -> float:
    """max(lambda_1se, smallest lambda with support size <= cap).

    If support fluctuation along the path would leave the chosen grid
    point above the cap, the choice moves to the nearest larger lambda
    that honours it, so the returned lambda always satisfies the cap.
    """
    if cap < 0:
        raise ValueError("cap must be non-negative")
    if len(curve.lambdas) != len(path.lambdas) or not np.allclose(
            curve.lambdas, path.lambdas):
        raise ValueError("curve and path must share one lambda grid")
    eligible = np.flatnonzero(path.support_sizes <= cap)
    idx_cap = int(eligible[-1])  # grid is descending: last = smallest lambda
    idx_1se = path.index_of(curve.lambda_1se)
    idx = min(idx_1se, idx_cap)
    while path.support_sizes[idx] > cap and idx > 0:
        idx -= 1
    return float(path.lambdas[idx])
