"""Discrete-event simulator for classic network attacks and the security
controls that counter them."""

__version__ = "0.1.0"
