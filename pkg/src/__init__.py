"""Two-particle Anderson fractional-moment laboratory."""
__version__ = "0.1.0"
