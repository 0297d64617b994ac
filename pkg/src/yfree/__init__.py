"""y-free model selection for linear smoothers."""

__version__ = "0.1.0"
