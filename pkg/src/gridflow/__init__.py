"""gridflow: declarative job submission with parameter sweeps and datasets."""

__version__ = "0.1.0"
