"""Soil-moisture estimation from hyperspectral data fused with simulated GPR or TDR data."""
__version__ = "0.1.0"
