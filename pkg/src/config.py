"""
Run configuration files.

A config file is a list of sections with key = value lines; '#' starts a
comment. The default distribution may be given as a matrix block:

    [credit.matrix]
    cols: 1y 2y nd
    1y: 0.01 0.01 0.03
    2y: 0.03 0.01 0.05
    nd: 0.07 0.09 0.70

Rates accept plain decimals, percentages ("2%") and basis points
("200bps"); times accept fractions ("1/12").

Required keys are market.spot, market.rate, market.vol, deal.strike and
deal.maturity; everything else defaults to the values below.
"""

import os
from pathlib import Path

import attrs

from src.credit_model import DISTRIBUTIONS, from_labeled_matrix, no_default, validate_distribution
from src.deal_cashflows import (
    DEAL_ACCOUNT,
    NO_COLLATERAL,
    TREASURY,
    CloseOutSpec,
    CollateralSpec,
    FundingSpec,
    RecoverySpec,
)
from src.errors import ConfigParseError, ConfigurationError, DistributionError
from src.lsmc_engine import DEFAULT_STEP, EngineSpec, PricingConfig
from src.market_model import LONG, SHORT, DealSpec, MarketParams
from src.pde_solver import PdeGrid
from src.regression import RegressionBasis

EXPERIMENTS = ("table1", "table2", "table3", "table4", "fig1", "fig3", "fig4", "single", "pde")
OUTPUT_FORMATS = ("csv", "text")

REQUIRED = ("market.spot", "market.rate", "market.vol", "deal.strike", "deal.maturity")

# section -> key -> default (None = derived or required)
KNOWN_KEYS = {
    "market": {"spot": None, "rate": None, "vol": None},
    "deal": {"strike": None, "maturity": None, "position": "long"},
    "grid": {"step": DEFAULT_STEP},
    "funding": {"borrow": None, "lend": None, "policy": TREASURY, "recovery": None, "account": DEAL_ACCOUNT},
    "collateral": {
        "policy": "risk_free",
        "rate_pos": None,
        "rate_neg": None,
        "rehypothecation": False,
        "recovery_investor": None,
        "recovery_counterparty": None,
    },
    "credit": {"distribution": "none", "lgd_investor": 0.5, "lgd_counterparty": 0.5},
    "closeout": {"convention": "risk_free"},
    "engine": {
        "hedge": "full",
        "legs": "first_order",
        "order": 2,
        "tol": 1e-8,
        "max_iter": 50,
        "max_failure_fraction": 0.001,
        "antithetic": False,
    },
    "nva": {"rate": None, "neglect_first_to_default": False},
    "pde": {"s_min": 0.0, "s_max": 400.0, "n_s": 401, "n_t": 400, "theta": 1.0, "intensity": 0.0},
    "run": {"experiment": "single", "paths": 1000, "seed": 42, "out": "results", "format": "csv", "workers": 1},
}
MATRIX_SECTION = "credit.matrix"

# collateralized call on a lognormal stock, priced with 1000 paths on a monthly grid
DEFAULT_CONFIG_TEXT = """
[market]
spot = 100
rate = 0.01
vol = 0.25

[deal]
strike = 80
maturity = 3
position = long

[funding]
# the treasury funds the hedge; the premium is carried at r
account = hedge

[credit]
distribution = low
lgd_investor = 0.5
lgd_counterparty = 0.5
"""


@attrs.frozen
class RunConfig:
    """
    Validated run configuration.

    :param pricing: deal, market, credit, funding and engine settings
    :param experiment: one of EXPERIMENTS
    :param distribution_name: low, high, custom or none
    """

    pricing: PricingConfig
    experiment: str = "single"
    n_paths: int = 1000
    seed: int = 42
    out_dir: str = "results"
    output_format: str = "csv"
    workers: int = 1
    distribution_name: str = "none"
    nva_rate: float = None
    neglect_first_to_default: bool = False
    pde_grid: PdeGrid = PdeGrid()
    pde_intensity: float = 0.0

    def __attrs_post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError("unknown experiment {!r}, expected one of {}".format(self.experiment, EXPERIMENTS))
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigurationError("unknown format {!r}".format(self.output_format))
        if self.n_paths < 2:
            raise ConfigurationError("paths must be at least 2, got {}".format(self.n_paths))
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")

    def with_overrides(self, **changes) -> "RunConfig":
        """Apply command-line overrides, ignoring None values."""
        return attrs.evolve(self, **{k: v for k, v in changes.items() if v is not None})


def parse_number(text: str) -> float:
    """
    Parse a number in any of the accepted spellings

    :param text: "0.02", "2%", "200bps", "1/12"
    :return: float
    """
    text = text.strip().lower()
    if text.endswith("bps"):
        return float(text[:-3]) / 10000.0
    if text.endswith("bp"):
        return float(text[:-2]) / 10000.0
    if text.endswith("%"):
        return float(text[:-1]) / 100.0
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: {!r}".format(text))


def _read_source(source) -> str:
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, str) and "\n" not in source and "=" not in source and os.path.isfile(source):
        return Path(source).read_text()
    return str(source)


def parse_sections(text: str):
    """
    Split config text into sections

    :param text: config text
    :return: (values, matrix) where values maps "section.key" to (raw value, line number)
             and matrix is (labels, rows, line number) or None
    """
    values = {}
    matrix_labels, matrix_rows, matrix_line = None, [], None
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigParseError("unterminated section header {!r}".format(line), number)
            section = line[1:-1].strip().lower()
            if section not in KNOWN_KEYS and section != MATRIX_SECTION:
                raise ConfigParseError("unknown section [{}]".format(section), number)
            if section == MATRIX_SECTION:
                matrix_line = number
            continue
        if section is None:
            raise ConfigParseError("key outside of any section", number)

        if section == MATRIX_SECTION:
            if ":" not in line:
                raise ConfigParseError("matrix lines look like 'label: p p p'", number)
            label, cells = (part.strip() for part in line.split(":", 1))
            if label.lower() == "cols":
                matrix_labels = cells.split()
                continue
            if matrix_labels is None:
                raise ConfigParseError("matrix rows need a preceding 'cols:' line", number)
            try:
                row = [parse_number(cell) for cell in cells.split()]
            except ValueError:
                raise ConfigParseError("matrix row {!r} is not numeric".format(label), number)
            if len(row) != len(matrix_labels):
                raise ConfigParseError(
                    "matrix row {!r} has {} entries, expected {}".format(label, len(row), len(matrix_labels)), number
                )
            matrix_rows.append((label, row, number))
            continue

        if "=" not in line:
            raise ConfigParseError("expected 'key = value', got {!r}".format(line), number)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in KNOWN_KEYS[section]:
            raise ConfigParseError("unknown key {!r} in [{}]".format(key, section), number)
        values["{}.{}".format(section, key)] = (value, number)

    matrix = None
    if matrix_labels is not None or matrix_rows:
        labels = [label.lower() for label in matrix_labels or []]
        order = {label: i for i, label in enumerate(labels)}
        if sorted(row[0].lower() for row in matrix_rows) != sorted(labels):
            raise ConfigParseError("matrix row labels must match the 'cols:' labels", matrix_line)
        rows = [None] * len(labels)
        for label, row, _ in matrix_rows:
            rows[order[label.lower()]] = row
        matrix = (labels, rows, matrix_line)
    return values, matrix


class _Values:
    """Typed access to parsed values with line numbers in errors."""

    def __init__(self, values: dict):
        self.values = values

    def raw(self, name: str):
        if name in self.values:
            return self.values[name]
        section, key = name.split(".", 1)
        return KNOWN_KEYS[section][key], None

    def get(self, name: str, kind=parse_number, default=None):
        value, line = self.raw(name)
        if value is None:
            return default
        if not isinstance(value, str):
            return value
        try:
            return kind(value)
        except ValueError:
            raise ConfigParseError("invalid value {!r} for {}".format(value, name), line)

    def line(self, name: str):
        return self.values.get(name, (None, None))[1]


def _text(value: str) -> str:
    return value.strip().lower()


def _position(value: str) -> int:
    value = _text(value)
    if value in ("long", "+1", "1"):
        return LONG
    if value in ("short", "-1"):
        return SHORT
    raise ValueError(value)


def _distribution(values: _Values, matrix):
    name = values.get("credit.distribution", _text)
    if matrix is not None and "credit.distribution" not in values.values:
        name = "custom"
    if name == "custom":
        if matrix is None:
            raise ConfigParseError(
                "distribution = custom needs a [credit.matrix] block", values.line("credit.distribution")
            )
        labels, rows, line = matrix
        try:
            distribution = from_labeled_matrix(labels, rows)
        except DistributionError:
            raise
        except ValueError as exc:
            raise ConfigParseError("bad matrix label: {}".format(exc), line)
        validate_distribution(distribution)
        return name, distribution
    if name == "none":
        return name, no_default()
    if name not in DISTRIBUTIONS:
        raise ConfigParseError(
            "unknown distribution {!r}, expected low, high, custom or none".format(name),
            values.line("credit.distribution"),
        )
    return name, DISTRIBUTIONS[name]


def _build(values: _Values, matrix) -> RunConfig:
    market = MarketParams(
        spot=values.get("market.spot"), rate=values.get("market.rate"), vol=values.get("market.vol")
    )
    deal = DealSpec(
        strike=values.get("deal.strike"),
        maturity=values.get("deal.maturity"),
        position=values.get("deal.position", _position),
    )
    lgd_i = values.get("credit.lgd_investor")
    lgd_c = values.get("credit.lgd_counterparty")

    funding = FundingSpec(
        rate_borrow=values.get("funding.borrow", default=market.rate),
        rate_lend=values.get("funding.lend", default=market.rate),
        policy=values.get("funding.policy", _text),
        recovery_i=values.get("funding.recovery", default=1.0 - lgd_i),
        account=values.get("funding.account", _text),
    )

    collateral_policy = values.get("collateral.policy", _text)
    rehypothecation = values.get("collateral.rehypothecation", parse_bool) and collateral_policy != NO_COLLATERAL
    segregated = 1.0
    collateral = CollateralSpec(
        policy=collateral_policy,
        rate_pos=values.get("collateral.rate_pos", default=market.rate),
        rate_neg=values.get("collateral.rate_neg", default=market.rate),
        rehypothecation=rehypothecation,
        recovery_coll_i=values.get(
            "collateral.recovery_investor", default=1.0 - lgd_i if rehypothecation else segregated
        ),
        recovery_coll_c=values.get(
            "collateral.recovery_counterparty", default=1.0 - lgd_c if rehypothecation else segregated
        ),
    )

    distribution_name, distribution = _distribution(values, matrix)
    engine = EngineSpec(
        hedge=values.get("engine.hedge", _text),
        legs=values.get("engine.legs", _text),
        basis=RegressionBasis(order=values.get("engine.order", int)),
        tol=values.get("engine.tol"),
        max_iter=values.get("engine.max_iter", int),
        max_failure_fraction=values.get("engine.max_failure_fraction"),
        antithetic=values.get("engine.antithetic", parse_bool),
        neglect_first_to_default=False,
    )
    pricing = PricingConfig(
        params=market,
        deal=deal,
        funding=funding,
        collateral=collateral,
        recoveries=RecoverySpec.build(lgd_i, lgd_c, collateral),
        closeout=CloseOutSpec(values.get("closeout.convention", _text)),
        distribution=distribution,
        engine=engine,
        grid_step=values.get("grid.step"),
    )
    pde_grid = PdeGrid(
        s_min=values.get("pde.s_min"),
        s_max=values.get("pde.s_max"),
        n_s=values.get("pde.n_s", int),
        n_t=values.get("pde.n_t", int),
        theta=values.get("pde.theta"),
    )
    return RunConfig(
        pricing=pricing,
        experiment=values.get("run.experiment", _text),
        n_paths=values.get("run.paths", int),
        seed=values.get("run.seed", int),
        out_dir=values.get("run.out", str),
        output_format=values.get("run.format", _text),
        workers=values.get("run.workers", int),
        distribution_name=distribution_name,
        nva_rate=values.get("nva.rate"),
        neglect_first_to_default=values.get("nva.neglect_first_to_default", parse_bool),
        pde_grid=pde_grid,
        pde_intensity=values.get("pde.intensity"),
    )


def load_config(source) -> RunConfig:
    """
    Load and validate a run configuration

    :param source: path to a config file, or the config text itself
    :return: RunConfig
    :raises ConfigParseError: on syntax errors, unknown or missing keys, with the line number
    :raises DistributionError: when a custom matrix is not a probability law
    """
    values, matrix = parse_sections(_read_source(source))
    missing = [name for name in REQUIRED if name not in values]
    if missing:
        raise ConfigParseError("missing required keys: {}".format(", ".join(missing)))
    parsed = _Values(values)
    try:
        return _build(parsed, matrix)
    except ConfigParseError:
        raise
    except ConfigurationError as exc:
        raise ConfigParseError(str(exc)) from exc


def default_config() -> RunConfig:
    """Configuration used when no file is given."""
    return load_config(DEFAULT_CONFIG_TEXT)
