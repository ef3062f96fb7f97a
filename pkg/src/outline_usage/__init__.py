"""Outline-utilization metrics and a two-stage outline-to-text generation harness."""

__version__ = "0.1.0"
