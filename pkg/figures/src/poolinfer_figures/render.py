"""Render result CSVs into figures.

Each renderer takes the CSV path plus a spec dict (titles, labels, baseline
pool count) and returns a matplotlib Figure whose artists carry exactly the
CSV's data series; tests and downstream tooling can read the values back
from the figure.  Input files are never modified.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import csvio

__all__ = ["plot_pn_curves", "plot_heatmap", "plot_calibration", "plot_popularity_density", "render_spec"]


def _panel_grid(n_panels: int) -> tuple[plt.Figure, list[plt.Axes]]:
    cols = max(1, n_panels)
    fig, axes = plt.subplots(1, cols, figsize=(4 * cols, 3.4), squeeze=False)
    return fig, list(axes[0])


def plot_pn_curves(csv_path: str | Path, spec: dict) -> plt.Figure:
    """Precision vs null rate, one panel per observation count.

    Draws the uniform-guess baseline at 1/k when the spec carries
    ``baseline_k``.
    """
    curves = csvio.read_pn_curves(csv_path)
    if not curves:
        warnings.warn(f"{csv_path}: no curve rows; rendering empty axes")
        fig, axes = _panel_grid(1)
        axes[0].set_xlabel("null rate")
        axes[0].set_ylabel("precision")
        fig.suptitle(spec.get("title", "precision / null-rate"))
        return fig
    ns = sorted(curves)
    fig, axes = _panel_grid(len(ns))
    for ax, n in zip(axes, ns):
        series = curves[n]
        ax.plot(series["null_rate"], series["precision"], marker=".", label=spec.get("label", "attack"))
        if "baseline_k" in spec:
            ax.axhline(1.0 / spec["baseline_k"], linestyle="--", color="gray", label="baseline")
        ax.set_title(f"n = {n}")
        ax.set_xlabel("null rate")
        ax.set_ylim(0.0, 1.02)
        ax.set_xlim(-0.02, 1.0)
    axes[0].set_ylabel("precision")
    axes[-1].legend(loc="lower right", fontsize=8)
    fig.suptitle(spec.get("title", "precision / null-rate"))
    fig.tight_layout()
    return fig


def plot_heatmap(csv_path: str | Path, spec: dict) -> plt.Figure:
    """Per-n precision over the (gamma, delta) grid; missing cells stay blank."""
    grids = csvio.read_heatmap(csv_path)
    if not grids:
        warnings.warn(f"{csv_path}: no heatmap rows; rendering empty axes")
        fig, axes = _panel_grid(1)
        axes[0].set_xlabel("relevant interest")
        axes[0].set_ylabel("polarization")
        fig.suptitle(spec.get("title", "precision heatmap"))
        return fig
    ns = sorted(grids)
    fig, axes = _panel_grid(len(ns))
    mesh = None
    for ax, n in zip(axes, ns):
        cells = grids[n]
        gamma_edges = sorted({c["gamma_lo"] for c in cells} | {c["gamma_hi"] for c in cells})
        delta_edges = sorted({c["delta_lo"] for c in cells} | {c["delta_hi"] for c in cells})
        values = np.ma.masked_all((len(delta_edges) - 1, len(gamma_edges) - 1))
        for cell in cells:
            gi = gamma_edges.index(cell["gamma_lo"])
            di = delta_edges.index(cell["delta_lo"])
            values[di, gi] = cell["precision"]
        mesh = ax.pcolormesh(gamma_edges, delta_edges, values, vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_title(f"n = {n}")
        ax.set_xlabel("relevant interest")
        ax.set_ylim(min(delta_edges), max(delta_edges))  # delta axis starts at 1/k
    axes[0].set_ylabel("polarization")
    if mesh is not None:
        fig.colorbar(mesh, ax=axes, fraction=0.03, pad=0.02)
    fig.suptitle(spec.get("title", "precision heatmap"))
    return fig


def plot_calibration(csv_path: str | Path, spec: dict) -> plt.Figure:
    """Success rate vs confidence-bin center, identity diagonal overlaid."""
    tables = csvio.read_calibration(csv_path)
    if not tables:
        warnings.warn(f"{csv_path}: no calibration rows; rendering empty axes")
        fig, axes = _panel_grid(1)
        axes[0].set_xlabel("confidence")
        axes[0].set_ylabel("success rate")
        fig.suptitle(spec.get("title", "calibration"))
        return fig
    ns = sorted(tables)
    fig, axes = _panel_grid(len(ns))
    for ax, n in zip(axes, ns):
        series = tables[n]
        centers = [(lo + hi) / 2.0 for lo, hi in zip(series["lo"], series["hi"])]
        ax.plot([0, 1], [0, 1], linestyle="--", color="gray", label="perfectly calibrated")
        ax.plot(centers, series["success_rate"], marker="o", label="observed")
        ax.set_title(f"n = {n}")
        ax.set_xlabel("confidence")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.0)
    axes[0].set_ylabel("success rate")
    axes[-1].legend(loc="upper left", fontsize=8)
    fig.suptitle(spec.get("title", "calibration"))
    fig.tight_layout()
    return fig


def plot_popularity_density(csv_path: str | Path, spec: dict) -> plt.Figure:
    """Probability mass per object id (the popularity mixture shape)."""
    ids, probs = csvio.read_popularity(csv_path)
    fig, axes = _panel_grid(1)
    ax = axes[0]
    if not ids:
        warnings.warn(f"{csv_path}: no popularity rows; rendering empty axes")
    else:
        ax.plot(ids, probs, linewidth=0.8)
    ax.set_xlabel("object")
    ax.set_ylabel("probability")
    fig.suptitle(spec.get("title", "object popularity"))
    fig.tight_layout()
    return fig


_RENDERERS = {
    "pn_curves": plot_pn_curves,
    "heatmap": plot_heatmap,
    "calibration": plot_calibration,
    "popularity_density": plot_popularity_density,
}


def render_spec(spec: dict, spec_dir: Path, out_dir: Path) -> list[Path]:
    """Render every figure in a spec; emits PNG and SVG per figure."""
    figures = spec.get("figures")
    if not isinstance(figures, list) or not figures:
        raise csvio.SchemaError("figure spec needs a non-empty 'figures' list")
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for entry in figures:
        kind = entry.get("kind")
        if kind not in _RENDERERS:
            raise csvio.SchemaError(f"unknown figure kind {kind!r} (choose from {sorted(_RENDERERS)})")
        if "input" not in entry or "output" not in entry:
            raise csvio.SchemaError(f"figure entry for {kind!r} needs 'input' and 'output'")
        csv_path = spec_dir / entry["input"]
        fig = _RENDERERS[kind](csv_path, entry)
        for ext in ("png", "svg"):
            target = out_dir / f"{entry['output']}.{ext}"
            fig.savefig(target)
            written.append(target)
        plt.close(fig)
    return written
