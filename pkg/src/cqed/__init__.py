"""Driven atom-cavity systems in the Purcell regime: rates, master equation,
quantum-jump clicks, photon statistics and fitting."""

__version__ = "0.1.0"
