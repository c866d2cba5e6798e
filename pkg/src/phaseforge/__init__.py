"""Phase reconstruction from amplitude spectra: iterative baselines and a two-stage neural predictor."""

__version__ = "0.1.0"
