"""Relay selection with wireless-power-transfer payments: auctions, outage analysis, simulation."""

__version__ = "0.1.0"
