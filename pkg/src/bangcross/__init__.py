"""Field transmission across a bang surface in conformal cosmology."""

__version__ = "0.1.0"
