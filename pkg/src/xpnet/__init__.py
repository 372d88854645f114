"""Adaptive materialized-view placement for XML tree-pattern queries, simulated on a DHT overlay."""

__version__ = "0.1.0"
