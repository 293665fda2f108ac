"""Periodic cell homogenization and inclusion shape optimization."""

__version__ = "0.1.0"
