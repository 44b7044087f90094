"""
Human-readable experiment reports.

Monte Carlo numbers are shown as "price (se)", NVA cells as
"nva (pct%)", mirroring the layout of the published tables.
"""

import numpy as np

from src.credit_model import dependence_summary

NO_RESULTS = "no results"
LABEL_COLUMNS = ("sweep", "rate_bps", "f_pos_bps", "f_neg_bps", "f_hat_bps", "spread_bps", "quantity")
SWEEP_TITLES = {"borrowing": "Borrowing rate f+", "lending": "Lending rate f-"}


def bps_label(value) -> str:
    return "{} bps".format(int(round(float(value))))


def price_cell(value: float, std_error: float) -> str:
    return "{:.2f} ({:.2f})".format(value, std_error)


def nva_cell(value: float, percentage: float) -> str:
    return "{:.2f} ({:.1f}%)".format(value, percentage)


def align(header: list, rows: list) -> list:
    """
    Align a table, first column left, the rest right

    :param header: column titles
    :param rows: rows of strings; a row with a single entry is a section title
    :return: list of lines
    """
    table = [r for r in rows if len(r) == len(header)] + [header]
    widths = [max(len(r[k]) for r in table) for k in range(len(header))]

    def line(row):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        return "  ".join(cells).rstrip()

    out = [line(header), "-" * len(line(header))]
    for row in rows:
        out.append(row[0] if len(row) == 1 else line(row))
    return out


def _cells(frame) -> list:
    """Names of the value columns that have a matching _se column."""
    return [c for c in frame.columns if c + "_se" in frame.columns]


def _funding_table(frame) -> list:
    cells = _cells(frame)
    header = ["Funding"] + [c.replace("_", " ") for c in cells]
    rows = []
    for sweep, group in frame.groupby("sweep", sort=False):
        rows.append([SWEEP_TITLES.get(sweep, sweep)])
        for _, row in group.iterrows():
            rows.append(["    " + bps_label(row["rate_bps"])] + [price_cell(row[c], row[c + "_se"]) for c in cells])
    return align(header, rows) + ["", "Standard errors of the price estimates are given in parentheses."]


def _nva_table(frame) -> list:
    prefixes = [c[: -len("_nva")] for c in frame.columns if c.endswith("_nva")]
    header = ["f+", "f-", "f^"] + [p.replace("_", " ") for p in prefixes]
    rows = []
    for _, row in frame.iterrows():
        rows.append(
            [bps_label(row[k]) for k in ("f_pos_bps", "f_neg_bps", "f_hat_bps")]
            + [nva_cell(row[p + "_nva"], row[p + "_pct"]) for p in prefixes]
        )
    note = "The percentage of the full price corresponding to the NVA is given in parentheses."
    return align(header, rows) + ["", note]


def _generic_table(frame) -> list:
    cells = _cells(frame)
    labels = [c for c in frame.columns if c in LABEL_COLUMNS]
    header = labels + cells
    rows = []
    for _, row in frame.iterrows():
        key = [str(int(round(row[c]))) if c.endswith("_bps") else str(row[c]) for c in labels]
        rows.append(key + ["{:.4f} ({:.4f})".format(row[c], row[c + "_se"]) for c in cells])
    return align(header, rows)


def decomposition_block(report) -> list:
    """
    Render an AdjustmentReport

    :param report: decomposition of one run
    :return: lines of the [decomposition] block
    """
    errors = report.errors
    lines = [
        "[decomposition]",
        "V (Black-Scholes)     = {:>10.4f}".format(report.v_clean),
        "V (paths)             = {:>10.4f}  ({:.4f})".format(report.v_clean_mc, report.clean_std_error),
        "- CVA                 = {:>10.4f}  ({:.4f})".format(report.cva, errors.get("cva", 0.0)),
        "+ DVA                 = {:>10.4f}  ({:.4f})".format(report.dva, errors.get("dva", 0.0)),
        "+ LVA                 = {:>10.4f}  ({:.4f})".format(report.lva, errors.get("lva", 0.0)),
        "+ FVA                 = {:>10.4f}  ({:.4f})".format(report.fva, errors.get("fva", 0.0)),
        "+ close-out adjustment= {:>10.4f}  ({:.4f})".format(report.closeout_adjustment, errors.get("closeout", 0.0)),
        "= Vbar                = {:>10.4f}  ({:.4f})".format(report.v_bar, report.std_error),
        "residual              = {:>10.4f}  (tolerance {:.4f}, {})".format(
            report.identity_residual, report.identity_tolerance, "ok" if report.identity_holds() else "EXCEEDED"
        ),
    ]
    if report.nva is not None:
        lines.append("NVA                   = {:>10.4f}".format(report.nva))
    return lines


def dependence_lines(valuations) -> list:
    """Kendall's tau of every distinct default law used by the runs, in first-use order."""
    seen = []
    for valuation in valuations:
        law = valuation.config.distribution
        if law.times and not any(law.times == s.times and np.array_equal(law.probs, s.probs) for s in seen):
            seen.append(law)
    return [dependence_summary(law) for law in seen]


def diagnostics_summary(valuations) -> list:
    fallbacks = sum(v.diagnostics.total_fallbacks() for v in valuations)
    no_root = sum(v.diagnostics.total_no_root() for v in valuations)
    counts = [v.diagnostics.iteration_counts() for v in valuations]
    counts = np.concatenate(counts) if counts else np.zeros(0, dtype=int)
    elapsed = sum(v.diagnostics.elapsed for v in valuations)
    return [
        "[diagnostics]",
        "runs = {}".format(len(valuations)),
        "elapsed_seconds = {:.3f}".format(elapsed),
        "newton_iterations_max = {}".format(int(counts.max()) if counts.size else 0),
        "newton_fallback_paths = {}".format(fallbacks),
        "newton_no_root_paths = {}".format(no_root),
    ]


def emit_report(result) -> str:
    """
    Render an experiment as text

    :param result: ExperimentResult
    :return: report text; the NO_RESULTS marker when the experiment produced no rows
    """
    if result.frame is None or result.frame.empty:
        return NO_RESULTS + "\n"
    frame = result.frame
    lines = [result.title, ""]
    if result.experiment in ("table1", "table2"):
        lines += _funding_table(frame)
    elif result.experiment in ("table3", "table4"):
        lines += _nva_table(frame)
    else:
        lines += _generic_table(frame)

    if result.run is not None:
        lines += [
            "",
            "paths = {}  seed = {}  step = {:.6g}".format(
                result.run.n_paths, result.run.seed, result.run.pricing.grid_step
            ),
            "funding_account = {}".format(result.run.pricing.funding.account),
        ]
    dependence = dependence_lines(result.valuations)
    if dependence:
        lines += [""] + dependence
    if result.notes:
        lines += [""] + list(result.notes)

    if len(result.valuations) == 1:
        valuation = result.valuations[0]
        if valuation.adjustments is not None:
            lines += [""] + decomposition_block(valuation.adjustments)
        lines += ["", valuation.diagnostics.render()]
    elif result.valuations:
        lines += [""] + diagnostics_summary(result.valuations)
    return "\n".join(lines).rstrip() + "\n"
