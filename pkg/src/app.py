"""
Experiment orchestration.

run_experiment expands a RunConfig into the cells of one experiment, prices
the cells on a thread pool and collects them into a pandas DataFrame laid out
like the published tables. write_results stores the frame as CSV or as the
text report, through a temporary file that is renamed into place.
"""

import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import attrs
import pandas as pd

from src.adjustments import compute_nva, decompose, fva_methods, full_fva
from src.config import RunConfig
from src.credit_model import DISTRIBUTIONS, no_default
from src.deal_cashflows import NO_COLLATERAL, RISK_FREE_COLLATERAL, FundingSpec, RecoverySpec
from src.diagnostics import debug
from src.errors import ConfigurationError
from src.lsmc_engine import PricingConfig, price_deal
from src.market_model import LONG, SHORT, bs_price, deal_value
from src.pde_solver import PdeCoefficients, solve_predefault_pde
from src.report import emit_report

log = logging.getLogger(__name__)

TABLE_RATES = (0.0, 0.01, 0.02, 0.03, 0.04)
TABLE_FIXED_RATE = 0.01
TABLE_DISTRIBUTIONS = ("low", "high")
NVA_CASES = ((0.03, 0.01), (0.01, 0.03))
FIG1_SPREADS = (0.0, 0.005, 0.01, 0.015, 0.02, 0.025, 0.03)
FIG3_BORROW_RATES = (0.01, 0.02, 0.03, 0.04)
FLOAT_FORMAT = "%.6f"

TITLES = {
    "table1": "Price impact of funding with default risk and collateralization",
    "table2": "Price impact of funding with default risk, collateralization and rehypothecation",
    "table3": "NVA with default risk and collateralization",
    "table4": "NVA with default risk, collateralization and rehypothecation",
    "fig1": "FVA of a long call vs symmetric funding spread, no default risk nor collateral",
    "fig3": "Value of a collateralized short call vs borrowing rate",
    "fig4": "FVA of a collateralized short call vs borrowing rate",
    "single": "Single valuation",
    "pde": "Pre-default PDE oracle",
}

POSITIONS = {"long": LONG, "short": SHORT}


@attrs.define
class ExperimentResult:
    """
    Output of one experiment.

    :param experiment: experiment id
    :param frame: table rows, every Monte Carlo column followed by its _se column
    :param valuations: ValuationResult of every priced cell, in row order
    :param nva: NvaResult of every NVA cell
    :param notes: free-form lines appended to the text report
    """

    experiment: str
    frame: pd.DataFrame
    run: RunConfig = attrs.field(eq=False, repr=False, default=None)
    valuations: list = attrs.Factory(list)
    nva: list = attrs.Factory(list)
    notes: list = attrs.Factory(list)

    @property
    def title(self) -> str:
        return TITLES.get(self.experiment, self.experiment)

    @property
    def empty(self) -> bool:
        return self.frame.empty


def bps(rate: float) -> int:
    return int(round(rate * 10000))


def run_cells(tasks, workers: int = 1) -> list:
    """
    Evaluate independent cells, keeping their order

    :param tasks: list of (function, args)
    :param workers: thread pool size; 1 runs the cells inline
    :return: results in task order
    """
    if workers <= 1:
        return [fn(*args) for fn, args in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args) for fn, args in tasks]
        return [future.result() for future in futures]


def collateralized(config: PricingConfig, rehypothecation: bool) -> PricingConfig:
    """
    Same deal under risk-free collateral, with or without rehypothecation

    Rehypothecated collateral is recovered like the deal itself; segregated
    collateral is returned in full.
    """
    recoveries = config.recoveries
    if rehypothecation:
        recovery_i, recovery_c = 1.0 - recoveries.lgd_i, 1.0 - recoveries.lgd_c
    else:
        recovery_i = recovery_c = 1.0
    collateral = attrs.evolve(
        config.collateral,
        policy=RISK_FREE_COLLATERAL,
        rehypothecation=rehypothecation,
        recovery_coll_i=recovery_i,
        recovery_coll_c=recovery_c,
    )
    return config.evolve(
        collateral=collateral, recoveries=RecoverySpec.build(recoveries.lgd_i, recoveries.lgd_c, collateral)
    )


def uncollateralized(config: PricingConfig) -> PricingConfig:
    collateral = attrs.evolve(
        config.collateral, policy=NO_COLLATERAL, rehypothecation=False, recovery_coll_i=1.0, recovery_coll_c=1.0
    )
    return config.evolve(
        collateral=collateral,
        recoveries=RecoverySpec.build(config.recoveries.lgd_i, config.recoveries.lgd_c, collateral),
        distribution=no_default(),
    )


def cell_config(config: PricingConfig, position: int, f_pos: float, f_neg: float, distribution=None):
    """Deal position, funding rates and optionally the default law of one table cell."""
    changes = dict(
        deal=attrs.evolve(config.deal, position=position),
        funding=attrs.evolve(config.funding, rate_borrow=f_pos, rate_lend=f_neg),
    )
    if distribution is not None:
        changes["distribution"] = DISTRIBUTIONS[distribution]
    return config.evolve(**changes)


def _default_law(run: RunConfig) -> str:
    return run.distribution_name if run.distribution_name in DISTRIBUTIONS else "low"


def _price(config: PricingConfig, n_paths: int, seed: int):
    result = price_deal(config, n_paths, seed)
    decompose(result)
    return result


def _funding_table(run: RunConfig, rehypothecation: bool) -> ExperimentResult:
    base = collateralized(run.pricing, rehypothecation)
    keys, tasks = [], []
    for sweep in ("borrowing", "lending"):
        for rate in TABLE_RATES:
            f_pos, f_neg = (rate, TABLE_FIXED_RATE) if sweep == "borrowing" else (TABLE_FIXED_RATE, rate)
            for law in TABLE_DISTRIBUTIONS:
                for name, position in POSITIONS.items():
                    keys.append((sweep, rate, law, name))
                    tasks.append((_price, (cell_config(base, position, f_pos, f_neg, law), run.n_paths, run.seed)))
    results = run_cells(tasks, run.workers)

    rows = {}
    for (sweep, rate, law, name), result in zip(keys, results):
        row = rows.setdefault((sweep, rate), {"sweep": sweep, "rate_bps": bps(rate)})
        row["{}_{}".format(law, name)] = result.price
        row["{}_{}_se".format(law, name)] = result.std_error
    return ExperimentResult(experiment="", frame=pd.DataFrame(list(rows.values())), run=run, valuations=results)


def _nva_table(run: RunConfig, rehypothecation: bool) -> ExperimentResult:
    base = collateralized(run.pricing, rehypothecation)
    keys, tasks = [], []
    for f_pos, f_neg in NVA_CASES:
        f_hat = run.nva_rate if run.nva_rate is not None else 0.5 * (f_pos + f_neg)
        for law in TABLE_DISTRIBUTIONS:
            for name, position in POSITIONS.items():
                keys.append((f_pos, f_neg, f_hat, law, name))
                config = cell_config(base, position, f_pos, f_neg, law)
                tasks.append((compute_nva, (config, run.n_paths, run.seed, f_hat, run.neglect_first_to_default)))
    results = run_cells(tasks, run.workers)

    rows = {}
    for (f_pos, f_neg, f_hat, law, name), nva in zip(keys, results):
        row = rows.setdefault(
            (f_pos, f_neg), {"f_pos_bps": bps(f_pos), "f_neg_bps": bps(f_neg), "f_hat_bps": bps(f_hat)}
        )
        prefix = "{}_{}".format(law, name)
        row[prefix + "_nva"] = nva.nva
        row[prefix + "_nva_se"] = nva.std_error
        row[prefix + "_pct"] = nva.percentage
        row[prefix + "_price"] = nva.full.price
        row[prefix + "_price_se"] = nva.full.std_error
    return ExperimentResult(
        experiment="",
        frame=pd.DataFrame(list(rows.values())),
        run=run,
        valuations=[nva.full for nva in results],
        nva=results,
    )


def _pde_fva(run: RunConfig, f_hat: float) -> float:
    pricing = run.pricing
    params, deal = pricing.params, pricing.deal
    coeffs = PdeCoefficients.call(
        deal.strike,
        deal.position,
        spot=params.spot,
        vol=params.vol,
        maturity=deal.maturity,
        f_pos=f_hat,
        f_neg=f_hat,
        rate=params.rate,
    )
    return solve_predefault_pde(coeffs, run.pde_grid).value_at(params.spot) - deal_value(
        deal, params, params.spot, 0.0
    )


def _fig1(run: RunConfig) -> ExperimentResult:
    base = uncollateralized(run.pricing).evolve(deal=attrs.evolve(run.pricing.deal, position=LONG))
    params = base.params
    long_run = attrs.evolve(run, pricing=base)
    tasks = []
    for spread in FIG1_SPREADS:
        f_hat = params.rate + spread
        config = base.evolve(funding=FundingSpec.symmetric(f_hat, base.funding.policy))
        tasks.append((full_fva, (config, run.n_paths, run.seed)))
    full = run_cells(tasks, run.workers)

    rows = []
    for spread, (fva, se, funded) in zip(FIG1_SPREADS, full):
        f_hat = params.rate + spread
        closed = fva_methods(params, base.deal, f_hat)
        rows.append(
            {
                "spread_bps": bps(spread),
                "fva_i": closed["i"],
                "fva_i_se": 0.0,
                "fva_ii": closed["ii"],
                "fva_ii_se": 0.0,
                "fva_iii": closed["iii"],
                "fva_iii_se": 0.0,
                "fva_pde": _pde_fva(long_run, f_hat),
                "fva_pde_se": 0.0,
                "fva_full": fva,
                "fva_full_se": se,
            }
        )
    notes = [
        "FVA(k) = V(k) - V; method (iii) integrates the funding account of the Black-Scholes hedge",
        "the full method funds the whole deal account Vbar - H",
    ]
    return ExperimentResult(
        experiment="", frame=pd.DataFrame(rows), run=run, valuations=[f[2] for f in full], notes=notes
    )


def _short_sweep(run: RunConfig):
    base = collateralized(run.pricing, rehypothecation=True)
    law = _default_law(run)
    rate = base.params.rate
    return [cell_config(base, SHORT, f_pos, rate, law) for f_pos in FIG3_BORROW_RATES]


def _fig3(run: RunConfig) -> ExperimentResult:
    configs = _short_sweep(run)
    results = run_cells([(_price, (config, run.n_paths, run.seed)) for config in configs], run.workers)
    rows = [
        {"f_pos_bps": bps(f_pos), "value": result.price, "value_se": result.std_error}
        for f_pos, result in zip(FIG3_BORROW_RATES, results)
    ]
    return ExperimentResult(experiment="", frame=pd.DataFrame(rows), run=run, valuations=results)


def _fig4(run: RunConfig) -> ExperimentResult:
    configs = _short_sweep(run)
    results = run_cells([(full_fva, (config, run.n_paths, run.seed)) for config in configs], run.workers)
    rows = [
        {"f_pos_bps": bps(f_pos), "fva": fva, "fva_se": se}
        for f_pos, (fva, se, _) in zip(FIG3_BORROW_RATES, results)
    ]
    notes = ["FVA = full price minus the full price with f+ = f- = r"]
    return ExperimentResult(
        experiment="", frame=pd.DataFrame(rows), run=run, valuations=[r[2] for r in results], notes=notes
    )


def _single(run: RunConfig) -> ExperimentResult:
    result = _price(run.pricing, run.n_paths, run.seed)
    report = result.adjustments
    rows = [
        ("price", result.price, result.std_error),
        ("v_clean", report.v_clean, 0.0),
        ("v_clean_mc", report.v_clean_mc, report.clean_std_error),
        ("cva", report.cva, report.errors["cva"]),
        ("dva", report.dva, report.errors["dva"]),
        ("lva", report.lva, report.errors["lva"]),
        ("fva", report.fva, report.errors["fva"]),
        ("closeout_adjustment", report.closeout_adjustment, report.errors["closeout"]),
        ("identity_residual", report.identity_residual, report.identity_tolerance / 3.0),
    ]
    frame = pd.DataFrame(rows, columns=["quantity", "value", "value_se"])
    return ExperimentResult(experiment="", frame=frame, run=run, valuations=[result])


def _no_collateral(t, spot):
    return 0.0 * spot


def _pde(run: RunConfig) -> ExperimentResult:
    pricing = run.pricing
    params, deal, funding = pricing.params, pricing.deal, pricing.funding
    collateral = pricing.collateral

    def on_default(t, spot):
        return deal_value(deal, params, spot, min(t, deal.maturity))

    coeffs = PdeCoefficients.call(
        deal.strike,
        deal.position,
        spot=params.spot,
        vol=params.vol,
        maturity=deal.maturity,
        f_pos=funding.rate_borrow,
        f_neg=funding.rate_lend,
        c_tilde=collateral.rate_pos if collateral.enabled else 0.0,
        intensity=run.pde_intensity,
        theta_fn=on_default,
        collateral_fn=on_default if collateral.enabled else _no_collateral,
        rehypothecation=pricing.rehypothecation,
        rate=params.rate,
    )
    coarse = solve_predefault_pde(coeffs, run.pde_grid)
    fine = solve_predefault_pde(coeffs, run.pde_grid.refined())
    rows = [
        ("pde_value", coarse.value_at(params.spot), 0.0),
        ("pde_value_refined", fine.value_at(params.spot), 0.0),
        ("max_policy_sweeps", float(max(coarse.max_sweeps, fine.max_sweeps)), 0.0),
        (
            "black_scholes",
            deal.position * bs_price(params.spot, deal.strike, params.rate, params.vol, 0.0, deal.maturity),
            0.0,
        ),
    ]
    notes = []
    if funding.is_symmetric and run.pde_intensity == 0.0 and not collateral.enabled:
        closed = fva_methods(params, deal, funding.rate_borrow)["ii"] + deal_value(deal, params, params.spot, 0.0)
        rows.append(("closed_form_at_funding_rate", closed, 0.0))
        notes.append("symmetric rates without credit or collateral: the PDE value equals the closed form")
    frame = pd.DataFrame(rows, columns=["quantity", "value", "value_se"])
    return ExperimentResult(experiment="", frame=frame, run=run, notes=notes)


EXPERIMENTS = {
    "table1": lambda run: _funding_table(run, rehypothecation=False),
    "table2": lambda run: _funding_table(run, rehypothecation=True),
    "table3": lambda run: _nva_table(run, rehypothecation=False),
    "table4": lambda run: _nva_table(run, rehypothecation=True),
    "fig1": _fig1,
    "fig3": _fig3,
    "fig4": _fig4,
    "single": _single,
    "pde": _pde,
}


def run_experiment(run: RunConfig) -> ExperimentResult:
    """
    Run the experiment named in the configuration

    :param run: validated run configuration
    :return: ExperimentResult; deterministic for a given configuration and seed
    """
    if run.experiment not in EXPERIMENTS:
        raise ConfigurationError("unknown experiment {!r}".format(run.experiment))
    debug("running {} with {} paths, seed {}".format(run.experiment, run.n_paths, run.seed), 1)
    result = EXPERIMENTS[run.experiment](run)
    result.experiment = run.experiment
    debug("{}: {} rows".format(run.experiment, len(result.frame)), 1)
    return result


def to_csv(result: ExperimentResult) -> str:
    return result.frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def atomic_write(path: Path, text: str):
    """
    Write text to path through a temporary file in the same directory

    :param path: destination
    :param text: file content
    :return: None
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(handle, "w", newline="") as f:
            f.write(text)
        os.replace(temporary, path)
    except OSError:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise


def write_results(result: ExperimentResult, out_dir, output_format: str = "csv") -> Path:
    """
    Store an experiment's output

    :param result: completed experiment
    :param out_dir: output directory, created when missing
    :param output_format: "csv" or "text"
    :return: path of the written file
    """
    out_dir = Path(out_dir)
    if output_format == "csv":
        path, text = out_dir / "{}.csv".format(result.experiment), to_csv(result)
    else:
        path, text = out_dir / "{}.txt".format(result.experiment), emit_report(result)
    atomic_write(path, text)
    log.info("wrote %s", path)
    return path
