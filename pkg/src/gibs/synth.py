"""Synthetic return panels with known ground truth.

Securities follow a sparse linear factor model on the basis assets'
excess returns with zero intercept.  Basis assets share a market
loading plus block-equicorrelated Gaussian shocks, which reproduces the
high mutual correlation that motivates prototype clustering.  All
output is deterministic under the spec seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidSpec
from .panel import BasisUniverse, ReturnsPanel, RiskFreeSeries

REGIMES = ("constant-beta", "break-at-midpoint", "smooth-drift")

MARKET_ID = "MKT"
MARKET_CATEGORY = "market"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic panel.

    ``sparsity`` is the per-security support size, ``correlation`` the
    within-block equicorrelation of basis shocks, and ``regime`` one of
    constant-beta, break-at-midpoint (betas double at T/2) or
    smooth-drift (betas follow a stored sinusoidal path).
    """

    n_obs: int
    n_securities: int
    n_basis: int
    sparsity: int
    beta_scale: float = 1.0
    noise_sd: float = 0.01
    correlation: float = 0.5
    seed: int = 0
    regime: str = "constant-beta"
    # plumbing knobs with stable defaults
    n_blocks: int = 0          # 0 = one block per ~5 assets
    start_year: int = 2014
    rf_rate: float = 0.0005
    market_loading: float = 1.0
    basis_vol: float = 0.02
    market_vol: float = 0.02
    market_mean: float = 0.002

    def validate(self) -> None:
        if self.n_obs < 2 or self.n_securities < 1 or self.n_basis < 1:
            raise InvalidSpec("n_obs >= 2, n_securities >= 1, n_basis >= 1 required")
        if not 0 <= self.sparsity <= self.n_basis:
            raise InvalidSpec("sparsity must lie in [0, n_basis]")
        if not 0 <= self.correlation < 1:
            raise InvalidSpec("correlation must lie in [0, 1)")
        if self.noise_sd <= 0:
            raise InvalidSpec("noise_sd must be positive")
        if self.regime not in REGIMES:
            raise InvalidSpec(f"regime must be one of {REGIMES}")


@dataclass(frozen=True)
class GroundTruth:
    """True supports and coefficient paths behind a synthetic panel."""

    supports: tuple[tuple[str, ...], ...]
    betas: np.ndarray       # (n_securities, n_basis), first-regime values
    beta_path: np.ndarray   # (n_obs, n_securities, n_basis)
    spec: SyntheticSpec = field(compare=False)


def week_labels(start_year: int, n_obs: int) -> tuple[str, ...]:
    """ISO-style year-week labels, 52 weeks per synthetic year."""
    return tuple(f"{start_year + w // 52}-W{w % 52 + 1:02d}" for w in range(n_obs))


def synthesize(spec: SyntheticSpec):
    """Generate (securities, universe, risk-free, truth) for a spec.

    The basis panel's first asset is the market index.  Security
    supports are drawn from the non-market basis assets so that
    recovery checks are unambiguous.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    T, N, p = spec.n_obs, spec.n_securities, spec.n_basis
    ts = week_labels(spec.start_year, T)
    rf = RiskFreeSeries(ts, np.full(T, spec.rf_rate))

    basis_names = [MARKET_ID] + [f"ETF{j:03d}" for j in range(1, p)]
    n_blocks = spec.n_blocks if spec.n_blocks > 0 else max(1, (p - 1) // 5)
    n_blocks = min(n_blocks, max(p - 1, 1))
    categories = {MARKET_ID: MARKET_CATEGORY}
    block_of = {}
    for j in range(1, p):
        b = (j - 1) % n_blocks
        block_of[j] = b
        categories[basis_names[j]] = f"cat{b:02d}"

    market = spec.market_mean + spec.market_vol * rng.standard_normal(T)
    block_shocks = rng.standard_normal((T, n_blocks))
    basis = np.empty((T, p))
    basis[:, 0] = market
    rho = spec.correlation
    for j in range(1, p):
        idio = rng.standard_normal(T)
        shock = np.sqrt(rho) * block_shocks[:, block_of[j]] + np.sqrt(1 - rho) * idio
        basis[:, j] = spec.rf_rate + spec.market_loading * (market - spec.rf_rate) \
            + spec.basis_vol * shock
    basis_panel = ReturnsPanel(ts, tuple(basis_names), basis,
                               np.ones((T, p), dtype=bool))
    universe = BasisUniverse(basis_panel, categories, MARKET_ID)

    base_betas = np.zeros((N, p))
    supports = []
    for i in range(N):
        k = spec.sparsity
        if k > 0 and p > 1:
            chosen = rng.choice(np.arange(1, p), size=min(k, p - 1), replace=False)
            chosen.sort()
            signs = rng.choice([-1.0, 1.0], size=chosen.size)
            mags = spec.beta_scale * rng.uniform(0.75, 1.25, size=chosen.size)
            base_betas[i, chosen] = signs * mags
            supports.append(tuple(basis_names[j] for j in chosen))
        else:
            supports.append(())

    beta_path = np.broadcast_to(base_betas, (T, N, p)).copy()
    if spec.regime == "break-at-midpoint":
        beta_path[T // 2:] = 2.0 * base_betas
    elif spec.regime == "smooth-drift":
        t = np.linspace(0.0, 1.0, T)
        drift = 1.0 + 0.75 * np.sin(2.0 * np.pi * t)
        beta_path = beta_path * drift[:, None, None]

    basis_excess = basis - spec.rf_rate
    noise = spec.noise_sd * rng.standard_normal((T, N))
    sec = np.einsum("tp,tnp->tn", basis_excess, beta_path) + noise + spec.rf_rate
    sec_names = tuple(f"SEC{i:03d}" for i in range(N))
    securities = ReturnsPanel(ts, sec_names, sec, np.ones((T, N), dtype=bool))

    truth = GroundTruth(tuple(supports), base_betas, beta_path, spec)
    return securities, universe, rf, truth


def synthesize_differences(spec: SyntheticSpec):
    """Generate panels whose VALUES are price differences, not returns.

    Same factor structure as ``synthesize`` but with the linear model
    holding exactly in differences: dY = dV * beta + noise with iid
    noise and alpha = 0.  ``rf_rate`` is ignored (differences carry no
    risk-free adjustment).  Useful for testing difference-domain
    procedures directly.
    """
    flat = replace(spec, rf_rate=0.0, market_mean=0.0)
    return synthesize(flat)


def synthesize_price_world(spec: SyntheticSpec, initial_price: float = 10.0):
    """Return panels that satisfy the difference model through prices.

    Basis and security PRICES follow random walks whose increments obey
    ``dY = dV * beta + noise`` exactly; the emitted panels contain the
    implied simple returns.  Reconstructing adjusted prices from these
    returns and differencing recovers the difference model up to
    per-asset scale, which leaves regression tests invariant.
    ``truth`` describes the difference-model coefficients.
    """
    spec.validate()
    dsec, duni, _, truth = synthesize_differences(spec)
    T = spec.n_obs

    def to_returns(diffs: np.ndarray) -> np.ndarray:
        prices = initial_price + np.cumsum(
            np.vstack([np.zeros(diffs.shape[1]), diffs]), axis=0)
        if prices.min() <= initial_price * 1e-3:
            raise InvalidSpec(
                "price path went non-positive; reduce volatility or horizon")
        return prices[1:] / prices[:-1] - 1.0

    # difference shocks scale like returns; shrink so paths stay positive
    scale = initial_price / 10.0
    sec_returns = to_returns(dsec.values * scale)
    basis_returns = to_returns(duni.panel.values * scale)
    ts = dsec.timestamps
    securities = ReturnsPanel(ts, dsec.assets, sec_returns,
                              np.ones((T, len(dsec.assets)), dtype=bool))
    basis_panel = ReturnsPanel(ts, duni.panel.assets, basis_returns,
                               np.ones((T, len(duni.panel.assets)), dtype=bool))
    universe = BasisUniverse(basis_panel, duni.categories, duni.market_index)
    rf = RiskFreeSeries(ts, np.full(T, spec.rf_rate))
    return securities, universe, rf, truth


def with_seed(spec: SyntheticSpec, seed: int) -> SyntheticSpec:
    return replace(spec, seed=seed)
