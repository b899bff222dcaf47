"""Lightweight secure MapReduce: sealed-region workers behind a content-based router."""

__version__ = "0.1.0"
