"""Bidding engine for a co-located solar farm and battery in a real-time spot market."""

__version__ = "0.1.0"
