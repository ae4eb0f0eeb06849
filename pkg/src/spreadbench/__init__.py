"""Exact no-arbitrage analysis for finite markets with bid-ask spreads."""

__version__ = "0.1.0"
