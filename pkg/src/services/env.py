"""Percolation environments on the ladder Z × {0, 1}.

An environment is a run of column records. The record of level x packs three
bits: bit 0 is the top horizontal edge (x,1)-(x+1,1), bit 1 the bottom
horizontal edge (x,0)-(x+1,0) and bit 2 the vertical edge (x,0)-(x,1).

Two samplers are provided:

* the cycle-stationary law, drawn exactly as a Doob h-transform of the
  three-state column chain that tracks which rails are reachable from -∞;
* finite windows of i.i.d. columns conditioned by rejection on a left-right
  crossing through the origin column.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..core.errors import DomainError, HorizonError, MarginError, RejectionBudgetError

logger = logging.getLogger(__name__)

TOP = 1
BOTTOM = 2
VERT = 4

TOP_ONLY = 1
BOTTOM_ONLY = 2
BOTH = 3
LIVE_STATES: Tuple[int, ...] = (TOP_ONLY, BOTTOM_ONLY, BOTH)

Vertex = Tuple[int, int]


class Provenance(str, Enum):
    CYCLE_STATIONARY = "cycle_stationary"
    WINDOW_REJECTION = "window_rejection"
    HANDCRAFTED = "handcrafted"


def rail_bit(y: int) -> int:
    """Column bit of the horizontal edge on rail y."""
    return TOP if y == 1 else BOTTOM


def pack(t: int, b: int, v: int) -> int:
    return (TOP if t else 0) | (BOTTOM if b else 0) | (VERT if v else 0)


def unpack(code: int) -> Tuple[int, int, int]:
    return int(bool(code & TOP)), int(bool(code & BOTTOM)), int(bool(code & VERT))


class Environment:
    """Edge assignment on the columns x_lo..x_hi.

    Edges leaving the window are unknown unless ``sealed`` is set, in which case
    they are closed (and the stored horizontals of x_hi must be 0).
    """

    def __init__(
        self,
        x_lo: int,
        columns: Iterable[int],
        provenance: Provenance = Provenance.HANDCRAFTED,
        p: Optional[float] = None,
        cycle_boundaries: Sequence[int] = (),
        left_boundaries: Sequence[int] = (),
        sealed: bool = False,
    ):
        self.x_lo = int(x_lo)
        self.columns = bytearray(columns)
        if not self.columns:
            raise DomainError("an environment needs at least one column")
        if any(c > 7 for c in self.columns):
            raise DomainError("column records are 3-bit values")
        self.provenance = Provenance(provenance)
        self.p = p
        self.cycle_boundaries: List[int] = list(cycle_boundaries)
        self.left_boundaries: List[int] = list(left_boundaries)
        self.sealed = sealed
        if sealed and self.columns[-1] & (TOP | BOTTOM):
            raise DomainError("a sealed window must close the horizontals of its last column")

    @classmethod
    def from_rows(
        cls,
        x_lo: int,
        rows: Sequence[Tuple[int, int, int]],
        provenance: Provenance = Provenance.HANDCRAFTED,
        sealed: bool = False,
        p: Optional[float] = None,
    ) -> "Environment":
        """Build from (t, b, v) triples, leftmost column first."""
        return cls(x_lo, (pack(*r) for r in rows), provenance=provenance, p=p, sealed=sealed)

    @property
    def x_hi(self) -> int:
        return self.x_lo + len(self.columns) - 1

    @property
    def width(self) -> int:
        return len(self.columns)

    def __repr__(self) -> str:
        return f"Environment(x_lo={self.x_lo}, x_hi={self.x_hi}, provenance={self.provenance.value})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Environment):
            return NotImplemented
        return self.x_lo == other.x_lo and self.columns == other.columns and self.sealed == other.sealed

    def copy(self) -> "Environment":
        return Environment(
            self.x_lo,
            bytes(self.columns),
            provenance=self.provenance,
            p=self.p,
            cycle_boundaries=self.cycle_boundaries,
            left_boundaries=self.left_boundaries,
            sealed=self.sealed,
        )

    def contains(self, x: int) -> bool:
        return self.x_lo <= x <= self.x_hi

    def column(self, x: int) -> int:
        if not self.contains(x):
            raise MarginError(f"level {x} outside window [{self.x_lo}, {self.x_hi}]")
        return self.columns[x - self.x_lo]

    def rows(self) -> List[Tuple[int, int, int, int]]:
        """(x, t, b, v) per level."""
        return [(self.x_lo + i, *unpack(c)) for i, c in enumerate(self.columns)]

    def to_array(self) -> np.ndarray:
        """(width, 3) uint8 array of (t, b, v)."""
        codes = np.frombuffer(bytes(self.columns), dtype=np.uint8)
        return np.stack([codes & TOP, (codes & BOTTOM) >> 1, (codes & VERT) >> 2], axis=1).astype(np.uint8)

    def horizontal_open(self, x: int, y: int) -> Optional[bool]:
        """State of (x,y)-(x+1,y); None when the edge leaves an unsealed window."""
        if x < self.x_lo - 1 or x > self.x_hi:
            return None
        if x == self.x_lo - 1 or x == self.x_hi:
            if self.sealed:
                return False
            if x == self.x_lo - 1:
                return None
        return bool(self.columns[x - self.x_lo] & rail_bit(y))

    def vertical_open(self, x: int) -> bool:
        return bool(self.column(x) & VERT)

    def edge_open(self, u: Vertex, v: Vertex) -> Optional[bool]:
        """State of the edge between two neighbouring vertices."""
        (xu, yu), (xv, yv) = u, v
        if xu == xv and yu != yv:
            return self.vertical_open(xu) if self.contains(xu) else None
        if yu == yv and abs(xu - xv) == 1:
            return self.horizontal_open(min(xu, xv), yu)
        raise DomainError(f"{u} and {v} are not neighbours")

    def vertex_index(self, v: Vertex) -> int:
        return 2 * (v[0] - self.x_lo) + v[1]

    def index_vertex(self, i: int) -> Vertex:
        return (self.x_lo + i // 2, i % 2)

    def component_labels(self) -> np.ndarray:
        """Connected-component label per vertex (index 2·(x-x_lo)+y) inside the window."""
        n = self.width
        codes = np.frombuffer(bytes(self.columns), dtype=np.uint8)
        idx = np.arange(n)
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        inner = idx[:-1]
        for bit, y in ((TOP, 1), (BOTTOM, 0)):
            mask = (codes[:-1] & bit) > 0
            rows.append(2 * inner[mask] + y)
            cols.append(2 * (inner[mask] + 1) + y)
        vmask = (codes & VERT) > 0
        rows.append(2 * idx[vmask])
        cols.append(2 * idx[vmask] + 1)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        graph = coo_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(2 * n, 2 * n))
        _, labels = connected_components(graph, directed=False)
        return labels

    def cluster_mask(self) -> np.ndarray:
        """(width, 2) bool array: vertices connected to both end columns of the window."""
        labels = self.component_labels()
        left = set(labels[0:2].tolist())
        right = set(labels[-2:].tolist())
        crossing = left & right
        flat = np.isin(labels, list(crossing)) if crossing else np.zeros(len(labels), dtype=bool)
        return flat.reshape(-1, 2)

    def in_cluster(self, v: Vertex) -> bool:
        if not self.contains(v[0]):
            return False
        return bool(self.cluster_mask()[v[0] - self.x_lo, v[1]])

    def has_crossing(self) -> bool:
        return bool(self.cluster_mask().any())


def find_pre_regeneration_points(env: Environment) -> List[int]:
    """Levels x with (x,1) isolated and (x,0) in the window's crossing cluster.

    The top edge entering x_lo lies outside the window, so x_lo itself is never
    reported, even when its own column matches the pattern. Callers that need
    x_lo must widen the window by a column first.

    Raises:
        MarginError: If the window has fewer than three columns.
    """
    if env.width < 3:
        raise MarginError("pre-regeneration detection needs at least three columns")
    codes = np.frombuffer(bytes(env.columns), dtype=np.uint8)
    top_prev_closed = (codes[:-1] & TOP) == 0
    here = codes[1:]
    isolated = top_prev_closed & ((here & TOP) == 0) & ((here & VERT) == 0)
    if not isolated.any():
        return []
    cluster = env.cluster_mask()[1:, 0]
    hits = np.nonzero(isolated & cluster)[0] + 1 + env.x_lo
    return [int(x) for x in hits]


def _draw_probability(p: float, draw: int) -> float:
    ones = bin(draw).count("1")
    return p**ones * (1.0 - p) ** (3 - ones)


def advance_state(state: int, draw: int) -> int:
    """Reachable rails at x+1 from reachable rails at x and the draw (t(x), b(x), v(x+1))."""
    top = bool(state & TOP_ONLY) and bool(draw & TOP)
    bottom = bool(state & BOTTOM_ONLY) and bool(draw & BOTTOM)
    if not (top or bottom):
        return 0
    if draw & VERT:
        return BOTH
    return (TOP_ONLY if top else 0) | (BOTTOM_ONLY if bottom else 0)


@dataclass(frozen=True)
class ColumnChain:
    """Rail-reachability chain of i.i.d. columns and its Doob transform.

    ``kernel[i, j]`` is the live-to-live sub-stochastic kernel over
    LIVE_STATES; ``doob[i, d]`` is the probability of draw d from live state i
    under the survival-conditioned chain.
    """
    p: float
    kernel: np.ndarray
    perron_root: float
    h: np.ndarray
    doob: np.ndarray
    top_closed: np.ndarray  # P̂(t = 0 | state) per live state
    _cdf: Tuple[Tuple[Tuple[float, ...], ...], ...] = field(repr=False, compare=False)

    def h_of(self, state: int) -> float:
        return float(self.h[LIVE_STATES.index(state)])

    def conditional_cdf(self, state: int, top: Optional[int]) -> Tuple[float, ...]:
        """Cumulative Doob draw law from ``state`` given the top bit (None: unconditioned)."""
        slot = 2 if top is None else int(top)
        cdf = self._cdf[LIVE_STATES.index(state)][slot]
        if not cdf:
            raise DomainError(f"live state {state} does not survive top bit {top}")
        return cdf


def build_column_chain(p: float, tol: float = 1e-14, max_iter: int = 100_000) -> ColumnChain:
    """Live kernel, Perron pair (power iteration) and Doob kernel for retention p."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"retention probability must lie in (0, 1), got {p}")
    kernel = np.zeros((3, 3))
    for i, s in enumerate(LIVE_STATES):
        for d in range(8):
            nxt = advance_state(s, d)
            if nxt:
                kernel[i, LIVE_STATES.index(nxt)] += _draw_probability(p, d)

    h = np.ones(3)
    rho = 0.0
    for _ in range(max_iter):
        nh = kernel @ h
        rho_new = nh[2] / h[2]
        nh = nh / nh[2]
        delta = float(np.max(np.abs(nh - h)))
        h, rho = nh, rho_new
        if delta < tol:
            break
    rho = float((kernel @ h)[2] / h[2])

    doob = np.zeros((3, 8))
    for i, s in enumerate(LIVE_STATES):
        for d in range(8):
            nxt = advance_state(s, d)
            if nxt:
                doob[i, d] = _draw_probability(p, d) * h[LIVE_STATES.index(nxt)] / (rho * h[i])
    top_closed = np.array([doob[i, [d for d in range(8) if not d & TOP]].sum() for i in range(3)])

    cdfs = []
    for i in range(3):
        per_state = []
        for top in (0, 1):
            weights = np.array([doob[i, d] if bool(d & TOP) == bool(top) else 0.0 for d in range(8)])
            total = weights.sum()
            # a top-only state cannot survive a closed top edge
            per_state.append(tuple(np.cumsum(weights / total).tolist()) if total > 0 else ())
        per_state.append(tuple(np.cumsum(doob[i] / doob[i].sum()).tolist()))
        cdfs.append(tuple(per_state))

    logger.debug("column chain p=%s rho=%.15g h=%s", p, rho, h)
    return ColumnChain(
        p=p, kernel=kernel, perron_root=rho, h=h, doob=doob, top_closed=top_closed, _cdf=tuple(cdfs)
    )


def crossing_probability(chain: ColumnChain, n: int) -> float:
    """P(an n-column window of i.i.d. columns has a left-right crossing)."""
    if n < 1:
        raise DomainError("window needs at least one column")
    vec = np.zeros(3)
    vec[LIVE_STATES.index(BOTH)] = 1.0
    for _ in range(n - 1):
        vec = vec @ chain.kernel
    return float(vec.sum())


class _UniformBuffer:
    """Block-drawn uniforms consumed one at a time."""

    __slots__ = ("_rng", "_buf", "_pos", "_block")

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self._rng = rng
        self._block = block
        self._buf: List[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


@dataclass(frozen=True)
class Cycle:
    """Columns of one cycle, starting at its pre-regeneration level (relative x = 0)."""
    columns: bytes

    @property
    def length(self) -> int:
        return len(self.columns)


def _draw(cdf: Tuple[float, ...], u: float) -> int:
    return min(bisect_right(cdf, u), 7)


def sample_cycle(chain: ColumnChain, rng: np.random.Generator | _UniformBuffer, cap: int = 1_000_000) -> Cycle:
    """One cycle of the cycle-stationary law.

    Starts in the bottom-only state with closed vertical and closed top
    horizontal at level 0; stops at the first level x > 0 where the top vertex
    is isolated, deciding the closed top edge leaving x by a one-column
    lookahead coin.

    Raises:
        HorizonError: If no pattern completes within ``cap`` columns.
    """
    uniforms = rng if isinstance(rng, _UniformBuffer) else _UniformBuffer(rng, block=256)
    q_close = float(chain.top_closed[LIVE_STATES.index(BOTTOM_ONLY)])
    cols = bytearray()
    state = BOTTOM_ONLY
    current_v = 0
    forced_top: Optional[int] = 0
    while True:
        if len(cols) >= cap:
            raise HorizonError(f"no pre-regeneration pattern within {cap} columns")
        d = _draw(chain.conditional_cdf(state, forced_top), uniforms.next())
        cols.append((d & (TOP | BOTTOM)) | current_v)
        state = advance_state(state, d)
        current_v = d & VERT
        if state == BOTTOM_ONLY and not d & TOP and not current_v:
            if uniforms.next() < q_close:
                return Cycle(bytes(cols))
            forced_top = 1
        else:
            forced_top = None


def mirror_columns(block: bytes) -> bytes:
    """Reflect a run of columns that starts at a pre-regeneration level.

    The result covers the levels a-L..a-1 (leftmost first) when the original
    run covered a..a+L-1; the vertical at a-L is the closed vertical of the
    next pattern.
    """
    n = len(block)
    out = bytearray(n)
    for k in range(n):
        horiz = block[n - 1 - k] & (TOP | BOTTOM)
        vert = block[n - k] & VERT if k > 0 else 0
        out[k] = horiz | vert
    return bytes(out)


def sample_environment(
    chain: ColumnChain,
    rng: np.random.Generator,
    n_cycles: Optional[int] = None,
    x_extent: Optional[int] = None,
    left_cycles: int = 1,
    cap: int = 1_000_000,
) -> Environment:
    """Concatenate i.i.d. cycles rightward from 0 (and mirrored ones leftward).

    At least ``n_cycles`` cycles are drawn on the right and the right edge is
    extended until it reaches ``x_extent``; either may be omitted but not both.
    """
    if n_cycles is None and x_extent is None:
        raise DomainError("give n_cycles or x_extent")
    if (n_cycles is not None and n_cycles < 1) or (x_extent is not None and x_extent < 1):
        raise DomainError("environment extent must be positive")
    uniforms = _UniformBuffer(rng)
    right = bytearray()
    boundaries: List[int] = []
    while (n_cycles is not None and len(boundaries) < n_cycles) or (
        x_extent is not None and len(right) <= x_extent
    ):
        boundaries.append(len(right))
        right.extend(sample_cycle(chain, uniforms, cap=cap).columns)

    left = bytearray()
    left_bounds: List[int] = []
    for _ in range(left_cycles):
        if left:
            left_bounds.append(-len(left))
        left[0:0] = mirror_columns(sample_cycle(chain, uniforms, cap=cap).columns)
    return Environment(
        -len(left),
        bytes(left) + bytes(right),
        provenance=Provenance.CYCLE_STATIONARY,
        p=chain.p,
        cycle_boundaries=boundaries,
        left_boundaries=sorted(left_bounds),
    )


def splice_window(
    window: Environment,
    chain: ColumnChain,
    rng: np.random.Generator,
    right_cycles: int = 4,
    left_cycles: int = 1,
    cap: int = 1_000_000,
) -> Environment:
    """Continue a window-rejection sample with cycles on both sides.

    The window is cut at its leftmost pre-regeneration level a < 0 and its
    rightmost one b > 0. Its columns a..b-1 are kept, cycle-stationary cycles
    are appended from b and mirrored cycles prepended before a. The result
    keeps the window-rejection provenance and ends on cycle boundaries, so an
    EnvironmentExtender can grow it.

    Raises:
        MarginError: If the window has no pre-regeneration level on one side of 0.
    """
    if window.sealed:
        raise DomainError("a sealed window cannot be spliced")
    if right_cycles < 1 or left_cycles < 1:
        raise DomainError("splicing needs at least one cycle on each side")
    points = find_pre_regeneration_points(window)
    left = [x for x in points if x < 0]
    right = [x for x in points if x > 0]
    if not left or not right:
        raise MarginError(f"window [{window.x_lo}, {window.x_hi}] has no pre-regeneration level on both sides of 0")
    a, b = left[0], right[-1]
    core = bytes(window.columns[a - window.x_lo : b - window.x_lo])

    uniforms = _UniformBuffer(rng)
    tail = bytearray()
    boundaries: List[int] = []
    for _ in range(right_cycles):
        boundaries.append(b + len(tail))
        tail.extend(sample_cycle(chain, uniforms, cap=cap).columns)
    head = bytearray()
    left_bounds: List[int] = []
    for _ in range(left_cycles):
        left_bounds.append(a - len(head))
        head[0:0] = mirror_columns(sample_cycle(chain, uniforms, cap=cap).columns)
    return Environment(
        a - len(head),
        bytes(head) + core + bytes(tail),
        provenance=Provenance.WINDOW_REJECTION,
        p=window.p,
        cycle_boundaries=boundaries,
        left_boundaries=sorted(left_bounds),
    )


class EnvironmentExtender:
    """Grows an environment in place when a walk reaches its edge.

    The environment must end on cycle boundaries: cycle-stationary samples do,
    and so do window-rejection samples passed through splice_window.
    """

    def __init__(self, env: Environment, chain: ColumnChain, rng: np.random.Generator, cap: int = 1_000_000):
        if env.provenance is Provenance.HANDCRAFTED or env.sealed or not env.cycle_boundaries:
            raise DomainError("only environments that end on cycle boundaries can be extended")
        self.env = env
        self.chain = chain
        self._uniforms = _UniformBuffer(rng)
        self.cap = cap
        self.extensions = 0

    def extend_right(self, min_x_hi: int) -> None:
        env = self.env
        grow = max(min_x_hi - env.x_hi, env.width // 2, 64)
        target = env.x_hi + grow
        while env.x_hi < target:
            env.cycle_boundaries.append(env.x_hi + 1)
            env.columns.extend(sample_cycle(self.chain, self._uniforms, cap=self.cap).columns)
        self.extensions += 1

    def extend_left(self, max_x_lo: int) -> None:
        env = self.env
        grow = max(env.x_lo - max_x_lo, env.width // 2, 64)
        target = env.x_lo - grow
        while env.x_lo > target:
            env.left_boundaries.insert(0, env.x_lo)
            block = mirror_columns(sample_cycle(self.chain, self._uniforms, cap=self.cap).columns)
            env.columns[0:0] = block
            env.x_lo -= len(block)
        self.extensions += 1


def _window_reachability(codes: np.ndarray) -> np.ndarray:
    """Vectorized crossing test for a batch of windows, shape (batch, width)."""
    state = np.full(codes.shape[0], BOTH, dtype=np.uint8)
    for x in range(codes.shape[1] - 1):
        c = codes[:, x]
        top = ((state & TOP_ONLY) > 0) & ((c & TOP) > 0)
        bottom = ((state & BOTTOM_ONLY) > 0) & ((c & BOTTOM) > 0)
        vert = (codes[:, x + 1] & VERT) > 0
        any_reached = top | bottom
        state = np.where(
            any_reached & vert,
            BOTH,
            top.astype(np.uint8) * TOP_ONLY + bottom.astype(np.uint8) * BOTTOM_ONLY,
        ).astype(np.uint8)
    return state > 0


def window_accepts(env: Environment, origin_rule: str = "either") -> bool:
    """Crossing exists and the origin column meets the crossing cluster.

    ``origin_rule`` is "either" ((0,0) or (0,1) in the cluster) or "origin"
    ((0,0) in the cluster).
    """
    if not env.contains(0):
        raise MarginError("window does not contain level 0")
    mask = env.cluster_mask()
    row = mask[0 - env.x_lo]
    if origin_rule == "origin":
        return bool(row[0])
    if origin_rule == "either":
        return bool(row[0] or row[1])
    raise DomainError(f"unknown origin rule {origin_rule!r}")


def sample_window_rejection(
    p: float,
    N: int,
    rng: np.random.Generator,
    budget: int = 100_000,
    origin_rule: str = "either",
    batch: int = 256,
) -> Environment:
    """i.i.d. columns on [-N, N] conditioned on a crossing through the origin column.

    Raises:
        RejectionBudgetError: After ``budget`` rejected windows.
    """
    if N < 2:
        raise DomainError(f"half-width must be >= 2, got {N}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"retention probability must lie in (0, 1), got {p}")
    width = 2 * N + 1
    attempts = 0
    while attempts < budget:
        n = min(batch, budget - attempts)
        bits = rng.random((n, width, 3)) < p
        codes = (bits[:, :, 0] * TOP + bits[:, :, 1] * BOTTOM + bits[:, :, 2] * VERT).astype(np.uint8)
        crossing = _window_reachability(codes)
        for i in range(n):
            attempts += 1
            if not crossing[i]:
                continue
            env = Environment(-N, codes[i].tobytes(), provenance=Provenance.WINDOW_REJECTION, p=p)
            if window_accepts(env, origin_rule):
                return env
    raise RejectionBudgetError(f"no accepted window after {budget} attempts (p={p}, N={N})")


def write_environment(env: Environment, path: str | Path) -> None:
    """Write the ``ladderenv v1`` text format (see docs/formats.md)."""
    p_text = "nan" if env.p is None else repr(float(env.p))
    header = f"ladderenv v1 p={p_text} x_lo={env.x_lo} x_hi={env.x_hi} provenance={env.provenance.value}"
    if env.sealed:
        header += " sealed=1"
    lines = [header] + [f"{x} {t} {b} {v}" for x, t, b, v in env.rows()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_environment(path: str | Path) -> Environment:
    """Parse the ``ladderenv v1`` format; cycle boundaries are recomputed."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("ladderenv v1 "):
        raise DomainError(f"{path}: missing 'ladderenv v1' header")
    fields = dict(token.split("=", 1) for token in text[0].split()[2:])
    x_lo, x_hi = int(fields["x_lo"]), int(fields["x_hi"])
    p = float(fields["p"])
    codes = bytearray()
    expected = x_lo
    for line in text[1:]:
        if not line.strip():
            continue
        x, t, b, v = (int(tok) for tok in line.split())
        if x != expected or {t, b, v} - {0, 1}:
            raise DomainError(f"{path}: bad column line {line!r}")
        codes.append(pack(t, b, v))
        expected += 1
    if expected != x_hi + 1:
        raise DomainError(f"{path}: expected levels {x_lo}..{x_hi}")
    env = Environment(
        x_lo,
        bytes(codes),
        provenance=Provenance(fields["provenance"]),
        p=None if math.isnan(p) else p,
        sealed=fields.get("sealed") == "1",
    )
    if env.provenance is Provenance.CYCLE_STATIONARY:
        points = find_pre_regeneration_points(env)
        env.cycle_boundaries = [x for x in points if x >= 0]
        env.left_boundaries = [x for x in points if x < 0]
    return env


__all__ = [
    "TOP",
    "BOTTOM",
    "VERT",
    "Vertex",
    "Provenance",
    "Environment",
    "ColumnChain",
    "Cycle",
    "pack",
    "unpack",
    "rail_bit",
    "advance_state",
    "build_column_chain",
    "crossing_probability",
    "sample_cycle",
    "mirror_columns",
    "sample_environment",
    "EnvironmentExtender",
    "window_accepts",
    "sample_window_rejection",
    "find_pre_regeneration_points",
    "write_environment",
    "read_environment",
]
