"""Trap inventory, backbone extraction and the pruned environment.

A trap on rail y with entrance level a and length m occupies the piece
[a, a+m+1): the vertical at a is open, both horizontals at a..a+m-1 are open,
the verticals at a+1..a+m are closed and the rail-y horizontal at a+m is
closed while the other rail continues.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional
import bisect
import logging
import math

import numpy as np
import pandas as pd

from ..core.errors import DomainError, MarginError
from .env import BOTTOM, TOP, VERT, Environment, Vertex, rail_bit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrapPiece:
    rail: int  # -1 for a censored run whose dead-end rail is not yet known
    entrance_x: int
    length: int
    complete: bool = True

    @property
    def entrance(self) -> Vertex:
        return (self.entrance_x, self.rail)

    @property
    def bottom(self) -> Vertex:
        return (self.entrance_x + self.length, self.rail)

    @property
    def piece_range(self) -> range:
        return range(self.entrance_x, self.entrance_x + self.length + 1)

    @property
    def exit_vertex(self) -> Vertex:
        """First backbone vertex right of the piece, on the continuing rail."""
        return (self.entrance_x + self.length + 1, 1 - self.rail)

    def trap_nodes(self) -> List[Vertex]:
        """u_1..u_m, the dead-end vertices."""
        return [(self.entrance_x + k, self.rail) for k in range(1, self.length + 1)]

    def interior_levels(self) -> range:
        return range(self.entrance_x + 1, self.entrance_x + self.length + 1)


def _scan_traps(env: Environment) -> List[TrapPiece]:
    cols = env.columns
    x_lo, x_hi = env.x_lo, env.x_hi
    found: List[TrapPiece] = []
    both = TOP | BOTTOM
    for i in range(len(cols) - 1):
        c = cols[i]
        if not (c & VERT) or (c & both) != both or cols[i + 1] & VERT:
            continue
        a = x_lo + i
        k = 1
        while True:
            x = a + k
            if x > x_hi:
                # run still open at the window edge; rail undecided
                found.append(TrapPiece(rail=-1, entrance_x=a, length=k - 1, complete=False))
                break
            code = cols[x - x_lo]
            if code & VERT:
                break
            horiz = code & both
            if horiz == both:
                k += 1
                continue
            if horiz == 0:
                break
            rail = 0 if horiz == TOP else 1
            complete = x < x_hi or env.sealed
            found.append(TrapPiece(rail=rail, entrance_x=a, length=k, complete=complete))
            break
    return found


def enumerate_traps(env: Environment, include_incomplete: bool = False) -> List[TrapPiece]:
    """Traps whose entrance lies on the window's crossing cluster, left to right.

    Pieces whose exit lies outside an unsealed window are censored; they are
    returned only with ``include_incomplete``.

    Raises:
        MarginError: If the window has fewer than three columns.
    """
    if env.width < 3:
        raise MarginError("trap enumeration needs at least three columns")
    cluster = env.cluster_mask()
    traps = []
    for trap in _scan_traps(env):
        if not trap.complete and not include_incomplete:
            continue
        if trap.complete and not cluster[trap.entrance_x - env.x_lo, trap.rail]:
            continue
        traps.append(trap)
    return traps


def trap_node_mask(env: Environment, traps: List[TrapPiece]) -> np.ndarray:
    """(width, 2) bool mask of the dead-end vertices u_1..u_m."""
    mask = np.zeros((env.width, 2), dtype=bool)
    for trap in traps:
        start = trap.entrance_x + 1 - env.x_lo
        mask[start : start + trap.length, trap.rail] = True
    return mask


def trap_id_map(env: Environment, traps: List[TrapPiece]) -> np.ndarray:
    """Flat int array indexed by 2·(x-x_lo)+y holding the trap index of dead-end vertices, else -1."""
    ids = np.full(2 * env.width, -1, dtype=np.int64)
    for index, trap in enumerate(traps):
        for x, y in trap.trap_nodes():
            if env.contains(x):
                ids[2 * (x - env.x_lo) + y] = index
    return ids


def extract_backbone(env: Environment, traps: Optional[List[TrapPiece]] = None) -> Environment:
    """Cluster minus trap dead ends; trap entrances stay."""
    traps = enumerate_traps(env) if traps is None else traps
    keep = env.cluster_mask() & ~trap_node_mask(env, traps)
    cols = bytearray(env.columns)
    width = env.width
    for i in range(width):
        code = cols[i]
        if not (keep[i, 0] and keep[i, 1]):
            code &= ~VERT
        for y in (0, 1):
            bit = rail_bit(y)
            right_kept = keep[i + 1, y] if i + 1 < width else keep[i, y]
            if not (keep[i, y] and right_kept):
                code &= ~bit
        cols[i] = code
    backbone = env.copy()
    backbone.columns = cols
    return backbone


def backbone_vertices(env: Environment, traps: Optional[List[TrapPiece]] = None) -> List[Vertex]:
    traps = enumerate_traps(env) if traps is None else traps
    keep = env.cluster_mask() & ~trap_node_mask(env, traps)
    return [(env.x_lo + int(i), int(y)) for i, y in zip(*np.nonzero(keep))]


@dataclass(frozen=True)
class Obstacle:
    """Vertex opposite a removed trap entrance, in pruned coordinates."""
    level: int
    rail: int  # rail of the obstacle (the continuing rail of the trap piece)
    original_entrance_x: int
    length: int
    log_series_resistance: float

    @property
    def vertex(self) -> Vertex:
        return (self.level, self.rail)

    @property
    def entrance(self) -> Vertex:
        """Pruned-coordinate vertex of the former trap entrance."""
        return (self.level, 1 - self.rail)

    @property
    def piece_range(self) -> range:
        return range(self.original_entrance_x, self.original_entrance_x + self.length + 1)


def series_log_resistance(entrance_x: int, length: int, lam: float) -> float:
    """log of Σ_{j=a}^{a+m} e^{-λ(2j+1)}."""
    gamma = math.exp(-2.0 * lam)
    return -lam * (2 * entrance_x + 1) + math.log1p(-(gamma ** (length + 1))) - math.log1p(-gamma)


@dataclass
class PrunedEnvironment:
    """Trap-free environment in compressed coordinates.

    ``levels`` lists, for each pruned level (from ``env.x_lo``), the original
    level it came from.
    """
    env: Environment
    lam: float
    obstacles: List[Obstacle]
    levels: np.ndarray
    censored: List[TrapPiece] = field(default_factory=list)
    _obstacle_levels: List[int] = field(default_factory=list, repr=False)
    _by_level: Dict[int, Obstacle] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._obstacle_levels = sorted(o.level for o in self.obstacles)
        self._by_level = {o.level: o for o in self.obstacles}

    @property
    def log_one_minus_gamma(self) -> float:
        return math.log1p(-math.exp(-2.0 * self.lam))

    def obstacle_at(self, level: int) -> Optional[Obstacle]:
        return self._by_level.get(level)

    def is_obstacle(self, v: Vertex) -> bool:
        ob = self._by_level.get(v[0])
        return ob is not None and ob.rail == v[1]

    def obstacle_count(self, x: int) -> int:
        """Signed count p(x): obstacles in [0, x) for x ≥ 0, minus those in [x, 0) otherwise."""
        levels = self._obstacle_levels
        if x >= 0:
            return bisect.bisect_left(levels, x) - bisect.bisect_left(levels, 0)
        return -(bisect.bisect_left(levels, 0) - bisect.bisect_left(levels, x))

    def log_conductance(self, u: Vertex, v: Vertex) -> float:
        """log c^p(⟨u,v⟩) = λ(x(u)+x(v)) + p(v)·log(1-γ) with x(u) ≤ x(v)."""
        far = v if v[0] >= u[0] else u
        return self.lam * (u[0] + v[0]) + self.obstacle_count(far[0]) * self.log_one_minus_gamma

    def original_level(self, level: int) -> int:
        return int(self.levels[level - self.env.x_lo])


def prune_environment(env: Environment, lam: float, traps: Optional[List[TrapPiece]] = None) -> PrunedEnvironment:
    """Replace every complete trap piece by an obstacle with a merged edge.

    Pruned coordinates keep level 0 at original level 0; when level 0 lies in
    a removed trap interior the covering obstacle is placed at 0 instead.
    """
    if lam <= 0:
        raise DomainError(f"bias must be positive, got {lam}")
    traps = enumerate_traps(env) if traps is None else traps
    censored = [t for t in enumerate_traps(env, include_incomplete=True) if not t.complete]

    removed = np.zeros(env.width, dtype=bool)
    cols = bytearray(env.columns)
    for trap in traps:
        i = trap.entrance_x - env.x_lo
        removed[i + 1 : i + 1 + trap.length] = True
        cols[i] &= ~rail_bit(trap.rail)
    kept_index = np.nonzero(~removed)[0]
    original_levels = kept_index + env.x_lo

    if env.contains(0):
        anchor = 0
        if removed[0 - env.x_lo]:
            anchor = next(t for t in traps if 0 in t.interior_levels()).entrance_x
        new_x_lo = -int(np.searchsorted(original_levels, anchor))
    else:
        new_x_lo = env.x_lo

    rank_of = {int(x): r for r, x in enumerate(original_levels)}
    obstacles = [
        Obstacle(
            level=new_x_lo + rank_of[t.entrance_x],
            rail=1 - t.rail,
            original_entrance_x=t.entrance_x,
            length=t.length,
            log_series_resistance=series_log_resistance(t.entrance_x, t.length, lam),
        )
        for t in traps
    ]
    pruned_env = Environment(
        new_x_lo,
        bytes(cols[i] for i in kept_index),
        provenance=env.provenance,
        p=env.p,
        sealed=env.sealed,
    )
    logger.debug("pruned %d traps; width %d -> %d", len(traps), env.width, pruned_env.width)
    return PrunedEnvironment(
        env=pruned_env, lam=lam, obstacles=obstacles, levels=original_levels, censored=censored
    )


def trap_inventory_frame(traps: List[TrapPiece]) -> pd.DataFrame:
    """Inventory table with columns (index, x_entrance, rail, length, x_bottom, complete)."""
    return pd.DataFrame(
        {
            "index": range(len(traps)),
            "x_entrance": [t.entrance_x for t in traps],
            "rail": [t.rail for t in traps],
            "length": [t.length for t in traps],
            "x_bottom": [t.entrance_x + t.length for t in traps],
            "complete": [t.complete for t in traps],
        }
    )


def write_trap_inventory(env: Environment, path: str | Path) -> pd.DataFrame:
    """Write the trap CSV for ``env``; censored pieces are listed with complete=False."""
    frame = trap_inventory_frame(enumerate_traps(env, include_incomplete=True))
    frame.to_csv(path, index=False)
    return frame


def origin_trap_length(env: Environment, x: int = 0, traps: Optional[List[TrapPiece]] = None) -> Optional[int]:
    """Length of the complete trap whose dead-end levels contain ``x``, if any.

    A level is covered when it is one of a+1..a+m, so a uniformly placed level
    lands in a trap of length m with odds proportional to m.
    """
    traps = enumerate_traps(env) if traps is None else traps
    for trap in traps:
        if x in trap.interior_levels():
            return trap.length
    return None


__all__ = [
    "TrapPiece",
    "Obstacle",
    "PrunedEnvironment",
    "enumerate_traps",
    "trap_node_mask",
    "trap_id_map",
    "extract_backbone",
    "backbone_vertices",
    "series_log_resistance",
    "prune_environment",
    "trap_inventory_frame",
    "write_trap_inventory",
    "origin_trap_length",
]
