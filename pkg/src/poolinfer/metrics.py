"""Attack-effectiveness metrics over completed game records.

For a confidence threshold tau, a user is *null* when the attack's
confidence falls below tau (it abstains).  The null rate is the fraction of
null users; the precision is the success rate among the rest.  Sweeping tau
over every observed confidence traces the precision/null-rate curve; its
area (trapezoidal, with the last defined precision carried to null rate 1)
summarizes the attack in one number.  Calibration tables and
(gamma, delta)-binned precision grids describe where the attack works.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CurvePoint = tuple[float, float, float]  # (threshold, null_rate, precision)


@dataclass(frozen=True)
class CalibrationBin:
    lo: float
    hi: float
    count: int
    success_rate: float


@dataclass(frozen=True)
class HeatmapCell:
    gamma_lo: float
    gamma_hi: float
    delta_lo: float
    delta_hi: float
    count: int
    precision: float


@dataclass(frozen=True)
class MetricsReport:
    """All evaluation metrics for one observation count."""

    n: int
    pn_curve: list[CurvePoint]
    auc_pn: float
    calibration: list[CalibrationBin]
    heatmap: list[HeatmapCell]


def _scores_arrays(records, n: int) -> tuple[np.ndarray, np.ndarray]:
    conf = np.array([r.outcomes[n].confidence for r in records])
    correct = np.array([r.outcomes[n].estimate == r.true_pool for r in records], dtype=bool)
    return conf, correct


def pn_curve_from_arrays(confidences: np.ndarray, correct: np.ndarray) -> list[CurvePoint]:
    """Sweep thresholds over {0, 1} plus every observed confidence.

    A point is emitted only while at least one user still guesses, so the
    curve ends at the largest achievable null rate below 1.
    """
    if confidences.size == 0:
        return []
    total = confidences.size
    order = np.argsort(confidences, kind="stable")
    sorted_conf = confidences[order]
    sorted_correct = correct[order].astype(np.int64)
    suffix_correct = np.cumsum(sorted_correct[::-1])[::-1]
    thresholds = np.unique(np.concatenate([[0.0, 1.0], sorted_conf]))
    points: list[CurvePoint] = []
    for tau in thresholds:
        first_guessing = int(np.searchsorted(sorted_conf, tau, side="left"))
        guessing = total - first_guessing
        if guessing == 0:
            continue
        precision = suffix_correct[first_guessing] / guessing
        points.append((float(tau), first_guessing / total, float(precision)))
    return points


def pn_curve(records, n: int) -> list[CurvePoint]:
    """Precision/null-rate curve for the records' outcomes at observation count n."""
    conf, correct = _scores_arrays(records, n)
    return pn_curve_from_arrays(conf, correct)


def auc_pn(curve: list[CurvePoint]) -> float:
    """Trapezoidal area of precision over null rate, tail carried to null rate 1."""
    if not curve:
        raise ValueError("cannot integrate an empty curve")
    by_null = {}
    for _, null_rate, precision in curve:
        by_null[null_rate] = precision
    nulls = np.array(sorted(by_null))
    precisions = np.array([by_null[nr] for nr in nulls])
    area = float(np.trapezoid(precisions, nulls)) if nulls.size > 1 else 0.0
    area += float(precisions[-1] * (1.0 - nulls[-1]))
    return area


def calibration_from_arrays(
    confidences: np.ndarray, correct: np.ndarray, bin_width: float = 0.1
) -> list[CalibrationBin]:
    """Success rate per confidence bin [lo, lo + width); empty bins are omitted.

    Confidence 1.0 counts into the last bin.
    """
    if not 0.0 < bin_width <= 1.0:
        raise ValueError("bin_width must be in (0, 1]")
    n_bins = int(np.ceil(1.0 / bin_width))
    idx = np.minimum((confidences / bin_width).astype(np.int64), n_bins - 1)
    bins: list[CalibrationBin] = []
    for b in range(n_bins):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        bins.append(
            CalibrationBin(
                lo=b * bin_width,
                hi=min((b + 1) * bin_width, 1.0),
                count=count,
                success_rate=float(correct[mask].mean()),
            )
        )
    return bins


def calibration(records, n: int, bin_width: float = 0.1) -> list[CalibrationBin]:
    conf, correct = _scores_arrays(records, n)
    return calibration_from_arrays(conf, correct, bin_width)


def precision_heatmap(
    records, n: int, k: int, gamma_bins: int = 10, delta_bins: int = 10
) -> list[HeatmapCell]:
    """Per-cell precision over a (gamma, delta) grid; gamma spans (0, 1] and
    delta spans (1/k, 1].  Cells with no users are omitted."""
    conf, correct = _scores_arrays(records, n)
    del conf
    gamma = np.array([r.gamma for r in records])
    delta = np.array([r.delta for r in records])
    delta_lo = 1.0 / k
    g_idx = np.minimum((gamma * gamma_bins).astype(np.int64), gamma_bins - 1)
    d_idx = np.minimum(((delta - delta_lo) / (1.0 - delta_lo) * delta_bins).astype(np.int64), delta_bins - 1)
    cells: list[HeatmapCell] = []
    for gb in range(gamma_bins):
        for db in range(delta_bins):
            mask = (g_idx == gb) & (d_idx == db)
            count = int(mask.sum())
            if count == 0:
                continue
            cells.append(
                HeatmapCell(
                    gamma_lo=gb / gamma_bins,
                    gamma_hi=(gb + 1) / gamma_bins,
                    delta_lo=delta_lo + db * (1.0 - delta_lo) / delta_bins,
                    delta_hi=delta_lo + (db + 1) * (1.0 - delta_lo) / delta_bins,
                    count=count,
                    precision=float(correct[mask].mean()),
                )
            )
    return cells


def compute_reports(
    records, k: int, gamma_bins: int = 10, delta_bins: int = 10, calibration_width: float = 0.1
) -> dict[int, MetricsReport]:
    """One MetricsReport per observation count present in the records."""
    if not records:
        return {}
    reports = {}
    for n in sorted(records[0].outcomes):
        curve = pn_curve(records, n)
        reports[n] = MetricsReport(
            n=n,
            pn_curve=curve,
            auc_pn=auc_pn(curve),
            calibration=calibration(records, n, calibration_width),
            heatmap=precision_heatmap(records, n, k, gamma_bins, delta_bins),
        )
    return reports
