"""Meta-learning selection of bibliographic reference parsers."""

__version__ = "0.1.0"
