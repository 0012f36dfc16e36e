"""Learnable spherical and spatio-directional hash encodings."""

__version__ = "0.1.0"
