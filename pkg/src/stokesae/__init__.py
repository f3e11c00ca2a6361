"""Autoencoder compression of paired Stokes I/V spectral profiles."""
__version__ = "0.1.0"
