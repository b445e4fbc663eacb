"""Groupwise interpretable basis selection and the adaptive
multi-factor asset-pricing workflow on return panels."""

from .panel import (
    BasisUniverse,
    PricePanel,
    ReturnsPanel,
    RiskFreeSeries,
    adjusted_prices,
    cumulative_capital,
    excess_returns,
    filter_coverage,
    first_differences,
    load_panel,
    load_riskfree,
    money_market,
    write_panel,
)
from .regression import (
    FTestResult,
    OlsFit,
    WelchResult,
    nested_f_test,
    ols,
    out_of_sample_r2,
    project_out,
    welch_test,
)
from .lasso import (
    CvCurve,
    LassoPath,
    cross_validate,
    lasso_fit,
    lasso_path,
    select_lambda_gibs,
    soft_threshold,
)
from .cluster import (
    Dendrogram,
    DistanceMatrix,
    correlation_distance,
    cut_by_threshold,
    minimax_cluster,
    minimax_radius,
)
from .fdr import QValues, adjust
from .selection import (
    GibsConfig,
    SelectionResult,
    SelectionSummary,
    fit_panel,
    gibs_dimension,
    gibs_select,
    orthogonalize_universe,
    pca_dimension,
    select_prototypes,
    summarize_selection,
)
from .comparison import ComparisonTable, compare_methods
from .model_tests import (
    BacktestResult,
    PeriodGrid,
    TestReport,
    alpha_backtest,
    batch_report,
    intercept_test,
    intercept_test_two_step,
    period_grid_run,
    residual_expansion_test,
    risk_premium,
    time_invariance_linear,
    varying_coefficient_test,
)
from .vol import (
    VolPortfolios,
    anomaly_test,
    form_vol_portfolios,
    loading_difference_test,
    rolling_study,
)
from .synth import (
    GroundTruth,
    SyntheticSpec,
    synthesize,
    synthesize_differences,
    synthesize_price_world,
)

__version__ = "0.1.0"
