"""Doppler SAR simulation, backprojection imaging and canonical-relation analysis."""

__version__ = "0.1.0"
