"""Agreement- and confidence-aware label smoothing with calibration metrics."""

__version__ = "0.1.0"
