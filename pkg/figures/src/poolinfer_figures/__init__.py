"""Figure rendering for pool-inference run outputs.

Reads the documented result CSVs (precision/null-rate curves, calibration
tables, behavioral heatmaps, popularity vectors) and renders PNG/SVG
figures.  All numbers come from the CSVs; nothing is recomputed here.
"""

from .render import (
    plot_calibration,
    plot_heatmap,
    plot_pn_curves,
    plot_popularity_density,
    render_spec,
)

__version__ = "0.1.0"
__all__ = [
    "plot_calibration",
    "plot_heatmap",
    "plot_pn_curves",
    "plot_popularity_density",
    "render_spec",
]
