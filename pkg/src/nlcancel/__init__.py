"""Data-driven controller synthesis by nonlinearity cancellation."""
__version__ = "0.1.0"
