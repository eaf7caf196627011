"""Echo-state-network prediction of spatiotemporal fields and spectral-radius sweeps."""

__version__ = "0.1.0"
