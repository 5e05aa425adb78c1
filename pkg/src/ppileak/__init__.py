"""Interface-similarity tools for auditing train/test splits of protein-protein interactions."""

__version__ = "0.1.0"
