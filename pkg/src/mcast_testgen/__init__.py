"""Test synthesis for multicast protocol models on a single LAN."""

__version__ = "0.1.0"
