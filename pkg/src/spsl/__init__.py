"""Coding, simulation and decoding toolkit for single-photon structured light."""

__version__ = "0.1.0"
