"""Render line charts from sweep summary CSVs.

Consumes the summary CSV written by the sweep CLI (one row per
(snr_db, algorithm, streams) cell with mean/std columns) and draws one
line series per group: mean sum rate or mean wall time versus SNR.
"""

from .core import KIND_COLUMNS, PlotError, PlotSpec, render

__version__ = "0.1.0"

__all__ = ["KIND_COLUMNS", "PlotError", "PlotSpec", "render"]
