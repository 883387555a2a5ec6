"""CSV and JSON output formats.

Floats are written with 17 significant digits, enough for an exact
round trip of IEEE doubles, and every file uses LF line endings.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .config import SimConfig
from .grid import GridSpec
from .stepper import EnergyTrace

__all__ = [
    "TRACE_CSV_COLUMNS",
    "fmt",
    "write_trace_csv",
    "read_trace_csv",
    "write_stats_csv",
    "write_table_csv",
    "write_field_csv",
    "sha256_file",
    "write_report",
]

TRACE_CSV_COLUMNS = ("t", "W", "dirichlet", "area", "maxexcess", "hess_l2sq_cum", "grad_linf", "h1_dev_from_W")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_rows(destination, header, rows) -> None:
    with open(destination, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_trace_csv(trace: EnergyTrace, destination) -> None:
    cols = [trace[name] for name in TRACE_CSV_COLUMNS]
    _write_rows(destination, TRACE_CSV_COLUMNS, ([fmt(c[i]) for c in cols] for i in range(len(cols[0]))))


def read_trace_csv(source) -> dict[str, np.ndarray]:
    with open(source, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[j]) for r in body]) for j, name in enumerate(header)}


def write_stats_csv(times, stats: dict[str, dict[str, np.ndarray]], destination) -> None:
    """Columns ``t`` then ``<f>_mean, <f>_var, <f>_se, <f>_n_valid`` per functional."""
    names = list(stats)
    header = ["t"] + [f"{n}_{s}" for n in names for s in ("mean", "var", "se", "n_valid")]
    rows = []
    for i, t in enumerate(times):
        row = [fmt(t)]
        for n in names:
            st = stats[n]
            row += [fmt(st["mean"][i]), fmt(st["var"][i]), fmt(st["se"][i]), str(int(st["n_valid"][i]))]
        rows.append(row)
    _write_rows(destination, header, rows)


def write_table_csv(rows: list[dict], destination) -> None:
    if not rows:
        _write_rows(destination, [], [])
        return
    header = list(rows[0])
    _write_rows(destination, header, ([fmt(r[h]) if not isinstance(r[h], str) else r[h] for h in header]
                                      for r in rows))


def write_field_csv(u: np.ndarray, grid: GridSpec, destination) -> None:
    """Header ``i0[,i1,...],value`` then one row per node in row-major order."""
    header = [f"i{a}" for a in range(grid.dim)] + ["value"]
    rows = ([*map(str, idx), fmt(u[idx])] for idx in np.ndindex(*grid.shape))
    _write_rows(destination, header, rows)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_report(destination, config: SimConfig, verdicts, files=(), extra: dict | None = None) -> dict:
    """Verdict report: config echo, verdicts, and a sha256 for every listed output file.

    Nothing run-dependent (wall time, worker count) goes in here, so reruns of
    the same config produce byte-identical reports.
    """
    destination = Path(destination)
    report = {
        "config": config.to_dict(),
        "configHash": config.config_hash(),
        "verdicts": [v.to_dict() for v in verdicts],
        "allPass": all(v.passed for v in verdicts),
        "files": {Path(f).name: sha256_file(f) for f in sorted(files, key=lambda p: Path(p).name)},
    }
    if extra:
        report["extra"] = _jsonable(extra)
    destination.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return report
