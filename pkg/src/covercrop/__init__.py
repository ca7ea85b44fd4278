"""Cover-crop biomass estimation pipeline."""

__version__ = "0.1.0"
