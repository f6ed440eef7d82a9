"""Local quantum probing of graph topology."""

__version__ = "0.1.0"
