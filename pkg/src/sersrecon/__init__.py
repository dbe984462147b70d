"""Simulated SERS raster-scan tumor-margin reconstruction with a transfer-learned 1-D CNN."""

__version__ = "0.1.0"
