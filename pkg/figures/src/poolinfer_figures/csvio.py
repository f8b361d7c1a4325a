"""Readers for the documented result-CSV schemas.

The plotting layer consumes only these files; it never recomputes metrics,
so the simulation toolkit remains the single source of numerical truth.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path


class SchemaError(Exception):
    """A CSV file does not match its documented header or row shape."""


def _read(path: str | Path, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise SchemaError(f"{path}: expected header {','.join(expected_header)}, got {header}")
        return [row for row in reader if row]


def read_pn_curves(path: str | Path) -> dict[int, dict[str, list[float]]]:
    """pn_curve.csv -> {n: {"threshold": [...], "null_rate": [...], "precision": [...]}}."""
    rows = _read(path, ["n", "threshold", "null_rate", "precision"])
    out: dict[int, dict[str, list[float]]] = defaultdict(lambda: {"threshold": [], "null_rate": [], "precision": []})
    try:
        for n, tau, null_rate, precision in rows:
            series = out[int(n)]
            series["threshold"].append(float(tau))
            series["null_rate"].append(float(null_rate))
            series["precision"].append(float(precision))
    except ValueError as exc:
        raise SchemaError(f"{path}: malformed row ({exc})") from None
    return dict(out)


def read_calibration(path: str | Path) -> dict[int, dict[str, list[float]]]:
    """calibration.csv -> {n: {"lo": [...], "hi": [...], "count": [...], "success_rate": [...]}}."""
    rows = _read(path, ["n", "bin_lo", "bin_hi", "count", "success_rate"])
    out: dict[int, dict[str, list[float]]] = defaultdict(lambda: {"lo": [], "hi": [], "count": [], "success_rate": []})
    try:
        for n, lo, hi, count, rate in rows:
            series = out[int(n)]
            series["lo"].append(float(lo))
            series["hi"].append(float(hi))
            series["count"].append(int(count))
            series["success_rate"].append(float(rate))
    except ValueError as exc:
        raise SchemaError(f"{path}: malformed row ({exc})") from None
    return dict(out)


def read_heatmap(path: str | Path) -> dict[int, list[dict[str, float]]]:
    """heatmap.csv -> {n: [cell dicts]} with gamma/delta bounds, count, precision."""
    rows = _read(path, ["n", "gamma_lo", "gamma_hi", "delta_lo", "delta_hi", "count", "precision"])
    out: dict[int, list[dict[str, float]]] = defaultdict(list)
    try:
        for n, g_lo, g_hi, d_lo, d_hi, count, precision in rows:
            out[int(n)].append(
                {
                    "gamma_lo": float(g_lo),
                    "gamma_hi": float(g_hi),
                    "delta_lo": float(d_lo),
                    "delta_hi": float(d_hi),
                    "count": int(count),
                    "precision": float(precision),
                }
            )
    except ValueError as exc:
        raise SchemaError(f"{path}: malformed row ({exc})") from None
    return dict(out)


def read_popularity(path: str | Path) -> tuple[list[int], list[float]]:
    """object_id,prob CSV -> (ids, probabilities)."""
    rows = _read(path, ["object_id", "prob"])
    try:
        ids = [int(r[0]) for r in rows]
        probs = [float(r[1]) for r in rows]
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row ({exc})") from None
    return ids, probs
