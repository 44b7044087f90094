"""
Command line entry point.

    python -m src.main --config configs/default.cfg --experiment table1 --paths 1000 --seed 42

Flags override the config file; NVA_CONFIG, NVA_SEED, NVA_PATHS and NVA_OUT
are read from the environment or a .env file.
"""

import logging
import sys
from pathlib import Path

import click
from dotenv import load_dotenv

from src import diagnostics
from src.app import run_experiment, write_results
from src.config import EXPERIMENTS, OUTPUT_FORMATS, default_config, load_config
from src.errors import PricingError
from src.report import NO_RESULTS, emit_report

log = logging.getLogger(__name__)

EXIT_ERROR = 1
EXIT_NO_RESULTS = 2


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), envvar="NVA_CONFIG")
@click.option("--experiment", type=click.Choice(EXPERIMENTS), help="experiment id, overrides run.experiment")
@click.option("--seed", type=int, envvar="NVA_SEED")
@click.option("--paths", "n_paths", type=int, envvar="NVA_PATHS", help="paths per default scenario")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), envvar="NVA_OUT")
@click.option("--format", "output_format", type=click.Choice(OUTPUT_FORMATS))
@click.option("--workers", type=int, help="threads used for table cells")
@click.option("-v", "--verbose", count=True, help="-v per-run debug output, -vv per-step")
def cli(config_path, experiment, seed, n_paths, out_dir, output_format, workers, verbose):
    """Price funding-, collateral- and default-aware deals and reproduce the result tables."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    diagnostics.set_debug_level(verbose)

    try:
        run = load_config(Path(config_path)) if config_path else default_config()
        run = run.with_overrides(
            experiment=experiment,
            seed=seed,
            n_paths=n_paths,
            out_dir=out_dir,
            output_format=output_format,
            workers=workers,
        )
        result = run_experiment(run)
    except PricingError as exc:
        click.echo("error: {}".format(exc), err=True)
        sys.exit(EXIT_ERROR)

    if result.empty:
        click.echo(NO_RESULTS, err=True)
        sys.exit(EXIT_NO_RESULTS)

    try:
        path = write_results(result, run.out_dir, run.output_format)
    except OSError as exc:
        click.echo("error: cannot write results: {}".format(exc), err=True)
        sys.exit(EXIT_ERROR)
    click.echo(emit_report(result))
    click.echo("results written to {}".format(path))


def main():
    load_dotenv()
    cli()


if __name__ == "__main__":
    main()
