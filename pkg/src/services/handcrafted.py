"""Small sealed windows with known trap layouts, used as exact-kernel oracles."""

from __future__ import annotations

from typing import Dict, List, Tuple

from .env import Environment, Provenance

Rows = List[Tuple[int, int, int]]

# (t, b, v) per level, starting at x = 0
ORACLE_WINDOWS: Dict[str, Rows] = {
    # one trap on the bottom rail, entrance 3, length 2
    "single_long_trap": [
        (1, 1, 1), (1, 1, 0), (1, 1, 1), (1, 1, 1), (1, 1, 0),
        (1, 0, 0), (1, 1, 1), (1, 1, 0), (1, 1, 1), (0, 0, 1),
    ],
    # top-rail trap at 1 whose exit is the entrance of a bottom-rail trap at 3
    "chained_traps": [
        (1, 1, 1), (1, 1, 1), (0, 1, 0), (1, 1, 1), (1, 0, 0),
        (1, 1, 1), (1, 1, 0), (1, 1, 1), (0, 1, 1), (0, 0, 1),
    ],
    # three unit traps; the second obstacle is the exit of the first piece
    "three_unit_traps": [
        (1, 1, 1), (1, 1, 0), (1, 1, 1), (1, 0, 0), (1, 1, 1),
        (1, 0, 0), (1, 1, 1), (0, 1, 0), (1, 1, 1), (0, 0, 1),
    ],
}


def oracle_window(name: str) -> Environment:
    """Sealed handcrafted window by name."""
    try:
        rows = ORACLE_WINDOWS[name]
    except KeyError as e:
        raise KeyError(f"unknown oracle window {name!r}; known: {sorted(ORACLE_WINDOWS)}") from e
    return Environment.from_rows(0, rows, provenance=Provenance.HANDCRAFTED, sealed=True)


__all__ = ["ORACLE_WINDOWS", "oracle_window"]
