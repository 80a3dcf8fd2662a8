"""Report formatting: tables, JSON records and sweep CSVs.

Every key or column name carries its unit suffix. Output depends only on the inputs, so
identical runs produce byte-identical files.
"""

import csv
import io
import json
import math
import sys
from pathlib import Path

from recoil.budget import KappaConvention
from recoil.temporal import window_variance_factor

TABLE_COLUMNS = (
    "species",
    "recoil_kHz",
    "timebin_error_pct",
    "random_error_pct",
    "ell_tau",
    "kappa_convention",
)

CONVENTION_NOTE = (
    "random column: 2E = kappa*W*omega_R*tau; kappa = 0.5 reproduces the tabulated values, "
    "kappa = 2 the printed closed form, kappa = 1 the quadrature/Monte-Carlo oracle"
)


def number(value):
    """JSON-safe float: non-finite values become null."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def bell_record(result):
    coherence = complex(result.coherence)
    record = {
        "fidelity_prob": number(result.fidelity),
        "infidelity_prob": number(1 - result.fidelity),
        "coherence_abs_dimless": number(abs(coherence)),
        "coherence_arg_rad": number(math.atan2(coherence.imag, coherence.real)),
        "population_down_up_prob": number(result.population_down_up),
        "population_up_down_prob": number(result.population_up_down),
        "herald_probability_prob": number(result.herald_probability),
    }
    if result.fidelity_stderr is not None:
        record["fidelity_stderr_prob"] = number(result.fidelity_stderr)
        record["coherence_abs_stderr_dimless"] = number(result.coherence_stderr)
        record["herald_probability_stderr_prob"] = number(result.herald_probability_stderr)
    return record


def channel_records(results):
    return {channel.value: bell_record(result) for channel, result in results.items()}


def to_json(record):
    return json.dumps(record, indent=2, allow_nan=False) + "\n"


def _table_values(row):
    return {
        "species": row.species_label,
        "recoil_kHz": row.recoil_frequency_khz,
        "timebin_error_pct": 100 * row.timebin_error,
        "random_error_pct": 100 * row.random_error,
        "ell_tau": row.timebin_length_ell,
        "kappa_convention": row.convention.value,
    }


def _json_row(row):
    record = {
        key: value if isinstance(value, str) else number(value)
        for key, value in _table_values(row).items()
    }
    record["recoil_kHz_display"] = row.recoil_khz_display
    record["timebin_error_pct_display"] = row.timebin_pct_display
    record["random_error_pct_display"] = row.random_pct_display
    return record


def format_table(rows, fmt, w, convention: KappaConvention):
    if fmt == "json":
        return to_json(
            {
                "w_tau": number(w),
                "W_dimless": number(window_variance_factor(w)),
                "kappa_convention": convention.value,
                "kappa_dimless": convention.kappa,
                "note": CONVENTION_NOTE,
                "rows": [_json_row(row) for row in rows],
            }
        )

    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for row in rows:
            writer.writerow(
                [v if isinstance(v, str) else repr(float(v)) for v in _table_values(row).values()]
            )
        return buffer.getvalue()

    lines = [
        f"# Recoil fidelity errors (w = {w:g}, W = {window_variance_factor(w):.4f}, "
        f"kappa convention: {convention.value}, kappa = {convention.kappa:g})",
        f"# {CONVENTION_NOTE}",
        "",
        "| species | recoil_kHz | timebin_error_pct | random_error_pct | ell_tau |",
        "|---|---:|---:|---:|---:|",
    ]
    for row in rows:
        lines.append(
            f"| {row.species_label} | {row.recoil_khz_display} | {row.timebin_pct_display} "
            f"| {row.random_pct_display} | {row.timebin_length_ell:.3f} |"
        )
    return "\n".join(lines) + "\n"


# Sweepable leaves whose key does not already carry a unit
_PROBABILITY_KEYS = {"detector_efficiency", "excite_prob", "collect_prob"}
_COUNT_KEYS = {"nodes", "max_nodes", "samples", "seed", "workers", "pairs", "trials", "chain_index"}
_UNIT_SUFFIXES = ("_ns", "_khz", "_nm", "_amu")


def sweep_label(name):
    """Column header for a swept config path, with the unit appended when the key lacks one."""
    leaf = name.rsplit(".", 1)[-1]
    if leaf.endswith(_UNIT_SUFFIXES):
        return name
    if leaf in _PROBABILITY_KEYS:
        return f"{name}_prob"
    if leaf in _COUNT_KEYS:
        return f"{name}_count"
    return f"{name}_dimless"


def sweep_columns(name, channels):
    columns = [sweep_label(name)]
    for channel in channels:
        columns += [
            f"{channel.value}_fidelity_prob",
            f"{channel.value}_coherence_abs_dimless",
            f"{channel.value}_herald_probability_prob",
        ]
    return columns + ["yield_prob", "W_dimless", "warnings"]


def format_sweep(name, channels, points):
    """``points`` is a list of (value, {channel: BellResult}, yield, W, warnings)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(sweep_columns(name, channels))
    for value, results, yield_, w_factor, warnings in points:
        row = [value]
        for channel in channels:
            result = results[channel]
            row += [
                repr(float(result.fidelity)),
                repr(float(abs(result.coherence))),
                repr(float(result.herald_probability)),
            ]
        row += [
            "" if yield_ is None else repr(float(yield_)),
            repr(float(w_factor)),
            "; ".join(warnings),
        ]
        writer.writerow(row)
    return buffer.getvalue()


class OutputFormatter:
    """Collects warnings and writes the finished report to stdout or a file."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.warnings = []

    def warn(self, message):
        self.warnings.append(message)

    def write(self, text):
        """Write ``text``; OSError propagates so the CLI can map it to its exit code."""
        if self.path is None:
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="") as f:
            f.write(text)
