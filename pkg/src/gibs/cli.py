"""Batch command-line front end.

Subcommands: ``synth`` (generate a synthetic fixture), ``fit``
(per-security selection and summary matrices), ``test`` (hypothesis
tests and period grids), ``compare`` (method comparison table), and
``report`` (plot-ready long-format CSVs from prior artifacts).

Configuration is a flat ``key=value`` file; ``--seed``, ``--threads``
and ``--out`` override it.  Every run writes ``manifest.json`` with
input hashes so outputs are reproducible bit-for-bit.  Exit codes:
2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .comparison import DEFAULT_METHODS, compare_methods
from .errors import ConfigError, DataError, NumericalError
from .model_tests import (
    GRID_TESTS,
    batch_report,
    period_grid_run,
    window_test_pvalues,
)
from .panel import (
    BasisUniverse,
    load_label_map,
    load_panel,
    load_riskfree,
    write_label_map,
    write_panel,
    write_riskfree,
)
from .selection import GibsConfig, fit_panel, gibs_select, summarize_selection
from .synth import SyntheticSpec, synthesize
from .vol import anomaly_test, form_vol_portfolios, loading_difference_test

TEST_NAMES = ("intercept", "invariance", "residual-expansion",
              "varying-coef", "anomaly", "loading-diff")

_BOOL = {"true": True, "1": True, "yes": True,
         "false": False, "0": False, "no": False}


def read_config(path) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


class Settings:
    """Typed access to merged config-file and CLI values."""

    def __init__(self, config: dict[str, str], args):
        self.raw = dict(config)
        if getattr(args, "seed", None) is not None:
            self.raw["seed"] = str(args.seed)
        if getattr(args, "threads", None) is not None:
            self.raw["threads"] = str(args.threads)
        if getattr(args, "out", None) is not None:
            self.raw["out"] = args.out

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def need(self, key):
        if key not in self.raw:
            raise ConfigError(f"missing required config key {key!r}")
        return self.raw[key]

    def get_int(self, key, default):
        try:
            return int(self.raw.get(key, default))
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} must be an integer") from exc

    def get_float(self, key, default):
        try:
            return float(self.raw.get(key, default))
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} must be a number") from exc

    def get_bool(self, key, default):
        val = str(self.raw.get(key, default)).lower()
        if val not in _BOOL:
            raise ConfigError(f"config key {key!r} must be true/false")
        return _BOOL[val]

    def get_list(self, key):
        raw = self.raw.get(key, "")
        return tuple(x.strip() for x in raw.split(",") if x.strip())

    def path(self, key, required=True):
        val = self.raw.get(key)
        if val is None:
            if required:
                raise ConfigError(f"missing required input path {key!r}")
            return None
        if not os.path.exists(val):
            raise ConfigError(f"input path for {key!r} does not exist: {val}")
        return val

    @property
    def seed(self) -> int:
        return self.get_int("seed", 0)

    @property
    def threads(self) -> int:
        return self.get_int("threads", 1)

    @property
    def out_dir(self) -> str:
        out = self.raw.get("out")
        if not out:
            raise ConfigError("output directory required (--out or out=...)")
        return out

    def gibs_config(self) -> GibsConfig:
        mpc = self.get_int("max_prototypes_per_category", 0)
        return GibsConfig(
            category_threshold=self.get_float("category_threshold", 0.5),
            global_threshold=self.get_float("global_threshold", 0.5),
            support_cap=self.get_int("support_cap", 20),
            cv_folds=self.get_int("cv_folds", 10),
            sig_level=self.get_float("sig_level", 0.05),
            protected_assets=self.get_list("protected"),
            include_fixed_factors=self.get_bool("include_fixed_factors", "false"),
            fixed_factors=self.get_list("fixed_factors"),
            n_lambda=self.get_int("n_lambda", 100),
            lambda_min_ratio=self.get_float("lambda_min_ratio", 1e-3),
            max_prototypes_per_category=mpc if mpc > 0 else None,
        )


def _load_inputs(cfg: Settings):
    securities = load_panel(cfg.path("securities"), cfg.get("securities_layout", "wide"))
    basis = load_panel(cfg.path("basis"), cfg.get("basis_layout", "wide"))
    rf = load_riskfree(cfg.path("rf"))
    categories = load_label_map(cfg.path("categories"), "category")
    market = cfg.get("market", "MKT")
    universe = BasisUniverse(basis, categories, market)
    if rf.timestamps != securities.timestamps:
        raise DataError("risk-free dates do not match the securities panel")
    if basis.timestamps != securities.timestamps:
        raise DataError("basis dates do not match the securities panel")
    return securities, universe, rf


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def _write_csv(path, header, rows):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(cfg: Settings, command: str, outputs, input_keys):
    inputs = {}
    for key in input_keys:
        val = cfg.get(key)
        if val and os.path.exists(val):
            inputs[key] = {"path": val, "sha256": _sha256(val)}
    # out and threads never influence artifact content; keep the manifest
    # byte-identical across output directories and worker counts
    settings = {k: v for k, v in sorted(cfg.raw.items())
                if k not in ("out", "threads")}
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": settings,
        "inputs": inputs,
        "outputs": sorted(outputs),
    }
    path = os.path.join(cfg.out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_out(cfg: Settings) -> str:
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = Settings(read_config(args.config), args)
    out = _ensure_out(cfg)
    spec = SyntheticSpec(
        n_obs=cfg.get_int("n_obs", 160),
        n_securities=cfg.get_int("n_securities", 20),
        n_basis=cfg.get_int("n_basis", 20),
        sparsity=cfg.get_int("sparsity", 3),
        beta_scale=cfg.get_float("beta_scale", 1.0),
        noise_sd=cfg.get_float("noise_sd", 0.01),
        correlation=cfg.get_float("correlation", 0.5),
        seed=cfg.seed,
        regime=cfg.get("regime", "constant-beta"),
        n_blocks=cfg.get_int("n_blocks", 0),
        start_year=cfg.get_int("start_year", 2014),
        rf_rate=cfg.get_float("rf_rate", 0.0005),
        market_loading=cfg.get_float("market_loading", 1.0),
        basis_vol=cfg.get_float("basis_vol", 0.02),
        market_vol=cfg.get_float("market_vol", 0.02),
        market_mean=cfg.get_float("market_mean", 0.002),
    )
    world = cfg.get("world", "returns")
    if world == "returns":
        securities, universe, rf, truth = synthesize(spec)
    elif world == "prices":
        from .synth import synthesize_price_world

        securities, universe, rf, truth = synthesize_price_world(spec)
    else:
        raise ConfigError(f"world must be 'returns' or 'prices', got {world!r}")
    write_panel(securities, os.path.join(out, "securities.csv"))
    write_panel(universe.panel, os.path.join(out, "basis.csv"))
    write_riskfree(rf, os.path.join(out, "rf.csv"))
    write_label_map(universe.categories, os.path.join(out, "categories.csv"))
    n_classes = cfg.get_int("n_classes", 2)
    classes = {name: f"class{i % n_classes:02d}"
               for i, name in enumerate(securities.assets)}
    write_label_map(classes, os.path.join(out, "classes.csv"), "class")
    with open(os.path.join(out, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump({
            "supports": [list(s) for s in truth.supports],
            "betas": truth.betas.tolist(),
            "regime": spec.regime,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg, "synth",
                    ["securities.csv", "basis.csv", "rf.csv", "categories.csv",
                     "classes.csv", "truth.json"], [])
    return 0


def cmd_fit(args) -> int:
    cfg = Settings(read_config(args.config), args)
    out = _ensure_out(cfg)
    securities, universe, rf = _load_inputs(cfg)
    classes = load_label_map(cfg.path("classes"), "class")
    gc = cfg.gibs_config()
    holdout = cfg.get_int("holdout_len", 0)
    results, protos = fit_panel(securities, universe, rf, gc, cfg.seed,
                                holdout_len=holdout, threads=cfg.threads)
    rows = [(r.security, ";".join(r.selected), ";".join(r.significant),
             r.fit.adj_r2, r.oos_r2) for r in results]
    _write_csv(os.path.join(out, "selection.csv"),
               ["security", "selected", "significant", "adj_r2", "oos_r2"], rows)

    summary = summarize_selection(results, classes, universe.categories)
    head = ["category"] + list(summary.security_classes)
    _write_csv(os.path.join(out, "summary_counts.csv"), head,
               [(c,) + tuple(int(x) for x in summary.count_matrix[i])
                for i, c in enumerate(summary.basis_categories)])
    _write_csv(os.path.join(out, "summary_proportions.csv"), head,
               [(c,) + tuple(summary.proportion_matrix[i])
                for i, c in enumerate(summary.basis_categories)])
    _write_csv(os.path.join(out, "prototypes.csv"), ["asset"],
               [(p,) for p in protos])
    _write_manifest(cfg, "fit",
                    ["selection.csv", "summary_counts.csv",
                     "summary_proportions.csv", "prototypes.csv"],
                    ["securities", "basis", "rf", "categories", "classes"])
    return 0


def _grid_csv(path, grid):
    header = ["start_year"] + [str(y) for y in grid.years]
    rows = []
    for i, sy in enumerate(grid.years):
        row = [str(sy)]
        for j in range(len(grid.years)):
            v = grid.values[i, j]
            row.append("" if np.isnan(v) else f"{100 * v:.2f}")
        rows.append(row)
    _write_csv(path, header, rows)


def cmd_test(args) -> int:
    cfg = Settings(read_config(args.config), args)
    if args.name not in TEST_NAMES:
        raise ConfigError(
            f"unknown test {args.name!r}; valid names: {', '.join(TEST_NAMES)}")
    out = _ensure_out(cfg)
    securities, universe, rf = _load_inputs(cfg)
    gc = cfg.gibs_config()
    outputs = []

    if args.name in GRID_TESTS and cfg.get("years"):
        first, last = _parse_years(cfg.need("years"))
        grid = period_grid_run(
            securities, universe, rf, args.name, (first, last),
            cfg.get_int("min_len", 3), config=gc, seed=cfg.seed,
            sig_level=gc.sig_level, spline_basis=cfg.get_int("spline_basis", 6),
            spline_penalty=cfg.get_float("spline_penalty", 5.0),
            threads=cfg.threads)
        _grid_csv(os.path.join(out, "grid.csv"), grid)
        outputs.append("grid.csv")
    elif args.name == "intercept":
        results, _ = fit_panel(securities, universe, rf, gc, cfg.seed,
                               threads=cfg.threads)
        report = batch_report([r.security for r in results],
                              [r.alpha_p_value for r in results], "intercept")
        _report_csv(os.path.join(out, "report.csv"), report)
        outputs.append("report.csv")
    elif args.name in ("invariance", "varying-coef", "residual-expansion"):
        ps = window_test_pvalues(args.name, securities, universe, rf, gc,
                                 cfg.seed, cfg.get_int("spline_basis", 6),
                                 cfg.get_float("spline_penalty", 5.0))
        report = batch_report(securities.assets, ps, args.name)
        _report_csv(os.path.join(out, "report.csv"), report)
        outputs.append("report.csv")
    elif args.name == "anomaly":
        outputs.extend(_run_anomaly(cfg, securities, universe, rf, gc, out))
    else:  # loading-diff
        outputs.extend(_run_loading_diff(cfg, securities, universe, rf, gc, out))

    _write_manifest(cfg, f"test:{args.name}", outputs,
                    ["securities", "basis", "rf", "categories", "classes"])
    return 0


def _parse_years(text):
    try:
        first, last = text.split("-")
        return int(first), int(last)
    except ValueError as exc:
        raise ConfigError(f"years must look like 2007-2018, got {text!r}") from exc


def _report_csv(path, report):
    rows = [(e, report.p_values[i], report.q_bh[i], report.q_bhy[i])
            for i, e in enumerate(report.entities)]
    _write_csv(path, ["entity", "p", "q_bh", "q_bhy"], rows)


def _run_anomaly(cfg, securities, universe, rf, gc, out):
    ports = form_vol_portfolios(
        securities, rf, cfg.get_int("lookback", 52),
        cfg.get_float("vol_quantile", 0.25),
        eligibility=_load_eligibility(cfg), max_cap_rank=_max_cap_rank(cfg))
    offset = len(securities.timestamps) - ports.n_weeks
    rf_tail = rf.slice_rows(offset, len(rf.timestamps))
    uni_tail = BasisUniverse(universe.panel.slice_rows(offset,
                                                       len(rf.timestamps)),
                             universe.categories, universe.market_index)
    window = cfg.get_int("window", 156)
    rows = []
    modes = ["excess", "residual_amf"]
    if gc.fixed_factors:
        modes.insert(1, "residual_ff5")
    for mode in modes:
        res = anomaly_test(ports.low_returns, ports.high_returns, mode,
                           rf=rf_tail, universe=uni_tail, config=gc,
                           window=window, seed=cfg.seed,
                           fixed_factors=gc.fixed_factors)
        rows.append((mode, res.t_stat, res.df, res.p_value))
    _write_csv(os.path.join(out, "anomaly.csv"),
               ["mode", "t_stat", "df", "p_value"], rows)
    _write_csv(os.path.join(out, "portfolio_returns.csv"),
               ["week", "low", "high"],
               [(w, ports.low_returns[i], ports.high_returns[i])
                for i, w in enumerate(ports.weeks)])
    member_rows = []
    for i, w in enumerate(ports.weeks):
        for a in ports.low_members[i]:
            member_rows.append((w, "low", a))
        for a in ports.high_members[i]:
            member_rows.append((w, "high", a))
    _write_csv(os.path.join(out, "membership.csv"),
               ["week", "leg", "asset"], member_rows)
    return ["anomaly.csv", "portfolio_returns.csv", "membership.csv"]


def _load_eligibility(cfg):
    path = cfg.path("eligibility", required=False)
    if path is None:
        return None
    table = load_label_map(path, "cap_rank")
    try:
        return {k: int(v) for k, v in table.items()}
    except ValueError as exc:
        raise DataError(f"cap ranks must be integers: {exc}") from exc


def _max_cap_rank(cfg):
    val = cfg.get_int("max_cap_rank", 0)
    return val if val > 0 else None


def _run_loading_diff(cfg, securities, universe, rf, gc, out):
    from .selection import orthogonalize_universe, select_prototypes

    ports = form_vol_portfolios(
        securities, rf, cfg.get_int("lookback", 52),
        cfg.get_float("vol_quantile", 0.25),
        eligibility=_load_eligibility(cfg), max_cap_rank=_max_cap_rank(cfg))
    window = min(cfg.get_int("window", 156), ports.n_weeks)
    offset = len(securities.timestamps) - ports.n_weeks
    lo = offset + ports.n_weeks - window
    hi = offset + ports.n_weeks
    uni_w = BasisUniverse(universe.panel.slice_rows(lo, hi),
                          universe.categories, universe.market_index)
    rf_w = rf.slice_rows(lo, hi)
    orth = orthogonalize_universe(uni_w, rf_w, gc.protected_assets)
    protos = select_prototypes(orth, universe.categories, gc)
    y_low = (ports.low_returns[-window:] - rf_w.rate)[orth.row_index]
    y_high = (ports.high_returns[-window:] - rf_w.rate)[orth.row_index]
    res_low = gibs_select(y_low, orth, protos, gc,
                          (cfg.seed, "low"), security="low")
    res_high = gibs_select(y_high, orth, protos, gc,
                           (cfg.seed, "high"), security="high")
    x = (universe.panel.values[lo:hi] - rf_w.rate[:, None])[orth.row_index]
    ft = loading_difference_test(y_low, y_high, x, universe.panel.assets,
                                 res_low.selected, res_high.selected)
    _write_csv(os.path.join(out, "loading_diff.csv"),
               ["f_stat", "df1", "df2", "p_value", "s_low", "s_high"],
               [(ft.f_stat, ft.df1, ft.df2, ft.p_value,
                 ";".join(res_low.selected), ";".join(res_high.selected))])
    return ["loading_diff.csv"]


def cmd_compare(args) -> int:
    cfg = Settings(read_config(args.config), args)
    out = _ensure_out(cfg)
    securities, universe, rf = _load_inputs(cfg)
    gc = cfg.gibs_config()
    methods = cfg.get_list("methods") or DEFAULT_METHODS
    holdout = cfg.get_int("holdout_len", 26)
    table = compare_methods(securities, universe, rf, gc, methods,
                            holdout_len=holdout, seed=cfg.seed,
                            threads=cfg.threads)
    _write_csv(os.path.join(out, "comparison.csv"),
               ["model", "select", "signif", "in_sample_adj_r2",
                "out_of_sample_r2"],
               [(r.method, r.avg_selected, r.avg_significant, r.avg_adj_r2,
                 r.avg_oos_r2) for r in table.rows])
    _write_manifest(cfg, "compare", ["comparison.csv"],
                    ["securities", "basis", "rf", "categories"])
    return 0


def cmd_report(args) -> int:
    cfg = Settings(read_config(args.config), args)
    out = _ensure_out(cfg)
    import csv as _csv

    props_path = os.path.join(out, "summary_proportions.csv")
    sel_path = os.path.join(out, "selection.csv")
    if not os.path.exists(props_path) or not os.path.exists(sel_path):
        raise DataError(f"fit artifacts not found in {out}; run `gibs fit` first")

    with open(props_path, newline="", encoding="utf-8") as fh:
        rows = list(_csv.reader(fh))
    classes = rows[0][1:]
    heat = []
    for row in rows[1:]:
        for cls, val in zip(classes, row[1:]):
            heat.append((row[0], cls, f"{100 * float(val):.2f}"))
    _write_csv(os.path.join(out, "heatmap.csv"),
               ["category", "class", "percent"], heat)

    with open(sel_path, newline="", encoding="utf-8") as fh:
        sel_rows = list(_csv.reader(fh))[1:]
    adj = [float(r[3]) for r in sel_rows]
    nsel = [len([x for x in r[1].split(";") if x]) for r in sel_rows]
    _write_csv(os.path.join(out, "hist_adj_r2.csv"),
               ["bin_low", "bin_high", "count"], _hist_rows(adj, 0.0, 1.0, 20))
    top = max(nsel, default=0) + 1
    _write_csv(os.path.join(out, "hist_n_selected.csv"),
               ["bin_low", "bin_high", "count"],
               [(k, k + 1, sum(1 for x in nsel if x == k)) for k in range(top)])
    _write_manifest(cfg, "report",
                    ["heatmap.csv", "hist_adj_r2.csv", "hist_n_selected.csv"], [])
    return 0


def _hist_rows(values, lo, hi, bins):
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(np.clip(values, lo, hi), bins=edges)
    return [(edges[i], edges[i + 1], int(counts[i])) for i in range(bins)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gibs",
        description="Groupwise interpretable basis selection workflows")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="key=value config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common],
                   help="generate a synthetic fixture").set_defaults(func=cmd_synth)
    sub.add_parser("fit", parents=[common],
                   help="per-security selection").set_defaults(func=cmd_fit)
    p_test = sub.add_parser("test", parents=[common], help="hypothesis tests")
    p_test.add_argument("name", help=f"one of: {', '.join(TEST_NAMES)}")
    p_test.set_defaults(func=cmd_test)
    sub.add_parser("compare", parents=[common],
                   help="method comparison").set_defaults(func=cmd_compare)
    sub.add_parser("report", parents=[common],
                   help="plot-ready CSVs").set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
