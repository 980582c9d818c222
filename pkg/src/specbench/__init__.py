"""Benchmark pipeline for NL-specification-driven code translation."""

__version__ = "0.1.0"
