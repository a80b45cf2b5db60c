"""CSV/JSON emission for traces, spectra, trajectories, and fit reports.

CSV files use '.' decimal separators, '\n' line endings, and a header row.
JSON documents are single objects {"provenance", "config", "data"}; with
timestamps disabled, identical runs produce byte-identical files.
"""

from __future__ import annotations

import datetime
import json
from pathlib import Path

import numpy as np

from .analysis import wilson_interval


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def trace_rows(x_values, p_d, shots: int):
    """Rows of (x, p_d, shots, ci_low, ci_high); exact points get ci = p."""
    rows = []
    for x, p in zip(x_values, p_d):
        if shots > 0:
            lo, hi = wilson_interval(int(round(p * shots)), shots)
        else:
            lo = hi = float(p)
        rows.append((float(x), float(p), shots, lo, hi))
    return rows


def write_trace_csv(path, x_name, x_values, p_d, shots: int) -> None:
    """Trace/spectrum CSV with the fixed column contract.

    The first column is always named x_value; its meaning (pulse duration,
    detuning) travels in the filename and the JSON report. x_name is kept
    for call-site readability only.
    """
    del x_name
    write_csv(path, ("x_value", "p_d", "shots", "ci_low", "ci_high"),
              trace_rows(x_values, p_d, shots))


def write_trajectory_csv(path, trajectory) -> None:
    rows = [(t * 1e3, n) for t, n in trajectory]
    write_csv(path, ("t_ms", "mean_n"), rows)


def write_populations_csv(path, populations, sigmas=None) -> None:
    if sigmas is None:
        sigmas = [0.0] * len(populations)
    rows = [(n, float(p), float(s))
            for n, (p, s) in enumerate(zip(populations, sigmas))]
    write_csv(path, ("n", "p_n", "sigma"), rows)


def provenance(command: str, seed: int, version: str,
               timestamp: bool = True) -> dict:
    doc = {"tool": "ionsim", "version": version, "command": command,
           "seed": seed}
    if timestamp:
        doc["timestamp"] = datetime.datetime.now(
            datetime.timezone.utc).isoformat()
    return doc


def write_json(path, provenance_doc: dict, config_doc: dict,
               data: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"provenance": provenance_doc, "config": config_doc, "data": data}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_gnuplot(path, csv_name: str, xlabel: str, ylabel: str,
                  title: str) -> None:
    script = (
        "set datafile separator ','\n"
        f"set xlabel '{xlabel}'\n"
        f"set ylabel '{ylabel}'\n"
        f"set title '{title}'\n"
        "set key off\n"
        f"plot '{csv_name}' skip 1 using 1:2 with linespoints pt 7 ps 0.5\n")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(script)
