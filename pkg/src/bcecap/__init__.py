"""Effective-capacity regions of two-user fading broadcast channels under
arbitrary input constellations."""

__version__ = "0.1.0"
