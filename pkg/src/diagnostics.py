"""
Leveled debug output and per-run diagnostics.

DEBUG controls how chatty the engine is:

    0 - no debug output
    1 - one line per run and per default scenario
    2 - one line per backward step (regression fit, Newton statistics)

Messages go through the standard logging module so the command line decides
where they end up.
"""

import logging

import attrs
import numpy as np

DEBUG = 0  # 0 = no debug, 1 = debug, 2 = verbose debug

logger = logging.getLogger("nva")


def set_debug_level(level: int):
    """
    Set the global debug level

    :param level: 0, 1 or 2
    :return: None
    """
    global DEBUG
    DEBUG = max(0, min(2, int(level)))


def debug(message: str, level: int = 1):
    """
    Emit a debug message if the debug level is high enough

    :param message: message to log
    :param level: level of debug message
    :return: None
    """
    if DEBUG >= level:
        logger.debug(message)


@attrs.define
class StepStats:
    """Statistics of one backward step of one scenario."""

    step: int
    r_squared: float
    iterations_median: float = 0.0
    iterations_max: int = 0
    fallback_paths: int = 0
    no_root_paths: int = 0


@attrs.define
class RunDiagnostics:
    """
    Diagnostics collected while pricing a deal.

    Scenario labels are strings like "tI=1y tC=nd".
    """

    hedge_mode: str = "full"
    steps: dict = attrs.Factory(dict)
    scenario_prices: dict = attrs.Factory(dict)
    scenario_errors: dict = attrs.Factory(dict)
    tie_breaks: dict = attrs.Factory(dict)
    elapsed: float = 0.0

    def record_step(self, scenario: str, stats: StepStats):
        self.steps.setdefault(scenario, []).append(stats)
        debug(
            "{} step {}: R2={:.4f} newton median={} max={} fallback={} no_root={}".format(
                scenario,
                stats.step,
                stats.r_squared,
                stats.iterations_median,
                stats.iterations_max,
                stats.fallback_paths,
                stats.no_root_paths,
            ),
            2,
        )

    def iteration_counts(self) -> np.ndarray:
        """
        Return the per-step maximum Newton iteration counts over all scenarios

        :return: array of iteration counts, empty when Newton was never used
        """
        counts = [s.iterations_max for steps in self.steps.values() for s in steps if s.iterations_max > 0]
        return np.asarray(counts, dtype=int)

    def median_iterations(self) -> float:
        medians = [s.iterations_median for steps in self.steps.values() for s in steps if s.iterations_max > 0]
        return float(np.median(medians)) if medians else 0.0

    def total_fallbacks(self) -> int:
        return sum(s.fallback_paths for steps in self.steps.values() for s in steps)

    def total_no_root(self) -> int:
        return sum(s.no_root_paths for steps in self.steps.values() for s in steps)

    def render(self) -> str:
        """
        Render the diagnostics as a structured text block

        :return: multi-line string
        """
        lines = ["[diagnostics]", "hedge_mode = {}".format(self.hedge_mode)]
        lines.append("elapsed_seconds = {:.3f}".format(self.elapsed))
        if self.hedge_mode == "full":
            counts = self.iteration_counts()
            lines.append("newton_iterations_max = {}".format(int(counts.max()) if counts.size else 0))
            lines.append("newton_iterations_median = {:.1f}".format(self.median_iterations()))
            lines.append("newton_fallback_paths = {}".format(self.total_fallbacks()))
            lines.append("newton_no_root_paths = {}".format(self.total_no_root()))
        for label in sorted(self.scenario_prices):
            steps = self.steps.get(label, [])
            r2 = [s.r_squared for s in steps if np.isfinite(s.r_squared)]
            lines.append(
                "scenario {:<16} price = {:>10.4f}  se = {:.4f}  min_r2 = {}".format(
                    label,
                    self.scenario_prices[label],
                    self.scenario_errors.get(label, 0.0),
                    "{:.4f}".format(min(r2)) if r2 else "n/a",
                )
            )
        for label in sorted(self.tie_breaks):
            lines.append("tie_break {} -> {}".format(label, self.tie_breaks[label]))
        return "\n".join(lines)
