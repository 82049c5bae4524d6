"""ladderwalk: biased random walks on supercritical ladder percolation clusters."""

__version__ = "0.1.0"
