"""Bounded symbolic checker for higher-order libraries with open clients."""

__version__ = "0.1.0"
