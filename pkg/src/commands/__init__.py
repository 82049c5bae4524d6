"""Experiments package.

Each module registers one experiment with ``@experiment("name")``;
``framework.discover_experiments`` imports them all.
"""

__all__ = [
    "framework",
]

from . import framework
