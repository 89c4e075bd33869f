"""Next merchant-category prediction benchmark on synthetic bank data."""

__version__ = "0.1.0"
