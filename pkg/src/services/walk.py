"""The quenched lazy biased walk, single-trap excursion chains and exact kernels."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union
import logging
import math

import numpy as np

from ..core.errors import DomainError, HorizonError, MarginError, WindowExitError
from .env import VERT, Environment, EnvironmentExtender, Vertex
from .traps import PrunedEnvironment, enumerate_traps, trap_id_map

logger = logging.getLogger(__name__)

DEFAULT_STEP_CAP = 10_000_000
MOVES = ("right", "left", "vertical")


def candidate_law(lam: float) -> Tuple[float, float, float]:
    """(right, left, vertical) candidate probabilities (e^λ, e^{-λ}, 1)/E."""
    if lam < 0:
        raise DomainError(f"bias must be nonnegative, got {lam}")
    el, eml = math.exp(lam), math.exp(-lam)
    total = el + 1.0 + eml
    return el / total, eml / total, 1.0 / total


def obstacle_candidate_law(lam: float) -> Tuple[float, float, float]:
    """Candidate law at an obstacle: (e^λ(1-γ), e^{-λ}, 1)/(e^λ+1)."""
    el, eml = math.exp(lam), math.exp(-lam)
    total = el + 1.0
    return (el - eml) / total, eml / total, 1.0 / total


def _neighbour(v: Vertex, move: str) -> Vertex:
    x, y = v
    if move == "right":
        return (x + 1, y)
    if move == "left":
        return (x - 1, y)
    return (x, 1 - y)


def _edge_state(env: Environment, v: Vertex, move: str) -> Optional[bool]:
    if move == "vertical":
        return env.vertical_open(v[0])
    return env.edge_open(v, _neighbour(v, move))


def _transition_from_law(env: Environment, vertex: Vertex, law: Sequence[float]) -> Dict[str, float]:
    if not env.contains(vertex[0]):
        raise MarginError(f"{vertex} is outside the window")
    out = {"right": 0.0, "left": 0.0, "vertical": 0.0, "stay": 0.0}
    for move, prob in zip(MOVES, law):
        state = _edge_state(env, vertex, move)
        if state is None:
            raise MarginError(f"edge {move} of {vertex} leaves the window")
        out[move if state else "stay"] += prob
    return out


def quenched_transition(env: Environment, lam: float, vertex: Vertex) -> Dict[str, float]:
    """One-step law at ``vertex``; closed candidates turn into a stay."""
    return _transition_from_law(env, vertex, candidate_law(lam))


def pruned_transition(penv: PrunedEnvironment, vertex: Vertex) -> Dict[str, float]:
    """One-step law of the pruned walk.

    Obstacles weight the right candidate by (1-γ); every other vertex uses the
    standard law, with missing edges turned into a stay.
    """
    law = obstacle_candidate_law(penv.lam) if penv.is_obstacle(vertex) else candidate_law(penv.lam)
    return _transition_from_law(penv.env, vertex, law)


class Kernel(Protocol):
    """Markov kernel over hashable states; a ``None`` target means leaving the window."""

    def transition(self, state) -> List[Tuple[object, float]]:  # pragma: no cover - protocol
        ...


class _LawKernel:
    def _moves(self, vertex: Vertex) -> Tuple[Environment, Sequence[float]]:
        raise NotImplementedError

    def transition(self, vertex: Vertex) -> List[Tuple[Optional[Vertex], float]]:
        env, law = self._moves(vertex)
        out: List[Tuple[Optional[Vertex], float]] = []
        stay = 0.0
        for move, prob in zip(MOVES, law):
            state = _edge_state(env, vertex, move) if env.contains(vertex[0]) else None
            if state is None:
                out.append((None, prob))
            elif state:
                out.append((_neighbour(vertex, move), prob))
            else:
                stay += prob
        if stay:
            out.append((vertex, stay))
        return out


class QuenchedKernel(_LawKernel):
    def __init__(self, env: Environment, lam: float):
        self.env = env
        self.law = candidate_law(lam)

    def _moves(self, vertex: Vertex) -> Tuple[Environment, Sequence[float]]:
        return self.env, self.law


class PrunedKernel(_LawKernel):
    def __init__(self, penv: PrunedEnvironment):
        self.penv = penv
        self.law = candidate_law(penv.lam)
        self.obstacle_law = obstacle_candidate_law(penv.lam)

    def _moves(self, vertex: Vertex) -> Tuple[Environment, Sequence[float]]:
        return self.penv.env, self.obstacle_law if self.penv.is_obstacle(vertex) else self.law


def exact_k_step_distribution(kernel: Kernel, start, k: int, cap: int = 16, exit_tol: float = 1e-15) -> Dict[object, float]:
    """Exact law after k steps by dense matrix-vector products over the reachable states.

    Raises:
        DomainError: If k exceeds ``cap``.
        WindowExitError: If more than ``exit_tol`` mass leaves the window.
    """
    if k < 0 or k > cap:
        raise DomainError(f"k must lie in [0, {cap}], got {k}")
    index: Dict[object, int] = {start: 0}
    rows: List[List[Tuple[Optional[object], float]]] = []
    frontier = deque([(start, 0)])
    while frontier:
        state, depth = frontier.popleft()
        moves = kernel.transition(state) if depth < k else []
        rows.append(moves)
        for target, _ in moves:
            if target is not None and target not in index:
                index[target] = len(index)
                frontier.append((target, depth + 1))
    n = len(index)
    exit_slot = n
    matrix = np.zeros((n + 1, n + 1))
    matrix[exit_slot, exit_slot] = 1.0
    order = sorted(index.items(), key=lambda kv: kv[1])
    for (state, i), moves in zip(order, rows):
        if not moves:
            matrix[i, i] = 1.0  # frontier states are never left within k steps
        for target, prob in moves:
            matrix[i, exit_slot if target is None else index[target]] += prob
    vec = np.zeros(n + 1)
    vec[0] = 1.0
    for _ in range(k):
        vec = vec @ matrix
    if vec[exit_slot] > exit_tol:
        raise WindowExitError(f"{vec[exit_slot]:.3g} of the {k}-step mass leaves the window")
    return {state: float(vec[i]) for state, i in order if vec[i] > 0.0}


def total_variation(a: Dict[object, float], b: Dict[object, float]) -> float:
    keys = set(a) | set(b)
    return 0.5 * math.fsum(abs(a.get(key, 0.0) - b.get(key, 0.0)) for key in keys)


@dataclass(frozen=True)
class StopRule:
    """Stop at the first of: time ``horizon``, X ≥ ``x_threshold``, return to the start."""
    horizon: Optional[int] = None
    x_threshold: Optional[int] = None
    stop_on_return: bool = False
    checkpoints: Tuple[int, ...] = ()


@dataclass
class WalkState:
    position: Vertex
    time: int
    min_x: int
    max_x: int
    visits: Dict[Vertex, int] = field(default_factory=dict)
    trap_time: Dict[int, int] = field(default_factory=dict)  # keyed by trap entrance level
    backbone_time: int = 0


@dataclass
class Trajectory:
    state: WalkState
    reason: str
    path_x: Optional[np.ndarray] = None
    path_y: Optional[np.ndarray] = None
    checkpoints: Dict[int, int] = field(default_factory=dict)

    @property
    def time_in_traps(self) -> int:
        return sum(self.state.trap_time.values())


StopPredicate = Callable[[WalkState], bool]


class QuenchedWalker:
    """Walk on a fixed environment consuming one uniform per step.

    With an ``extender`` the environment grows when the walk reaches an edge;
    without one, any step that needs an edge outside the window raises
    WindowExitError.
    """

    def __init__(
        self,
        env: Environment,
        lam: float,
        rng: np.random.Generator,
        start: Vertex = (0, 0),
        extender: Optional[EnvironmentExtender] = None,
        track_traps: bool = False,
        registered: Iterable[Vertex] = (),
        record: bool = False,
        block: int = 65_536,
    ):
        if not env.contains(start[0]):
            raise MarginError(f"start {start} outside the window")
        if extender is not None and extender.env is not env:
            raise DomainError("extender must wrap the walked environment")
        self.env = env
        self.lam = lam
        right, left, _ = candidate_law(lam)
        self._p_right = right
        self._p_right_left = right + left
        self._rng = rng
        self._block = block
        self._buf: List[float] = []
        self._pos = 0
        self.start = (int(start[0]), int(start[1]))
        self.x, self.y = self.start
        self.time = 0
        self.min_x = self.max_x = self.x
        self.extender = extender
        self.track_traps = track_traps
        self.visits: Dict[Vertex, int] = {tuple(v): 0 for v in registered}  # type: ignore[misc]
        if self.start in self.visits:
            self.visits[self.start] += 1
        self.trap_time: Dict[int, int] = {}
        self.backbone_time = 0
        self.record = record
        self._path_x: List[int] = [self.x] if record else []
        self._path_y: List[int] = [self.y] if record else []
        self._trap_ids: List[int] = []
        self._trap_keys: List[int] = []
        if track_traps:
            self._refresh_traps()

    def _refresh_traps(self) -> None:
        traps = enumerate_traps(self.env)
        self._trap_ids = trap_id_map(self.env, traps).tolist()
        self._trap_keys = [t.entrance_x for t in traps]

    def _extend(self) -> None:
        assert self.extender is not None
        if self.x >= self.env.x_hi:
            self.extender.extend_right(self.x + 1)
        if self.x <= self.env.x_lo:
            self.extender.extend_left(self.x - 1)
        logger.debug("walk at %d extended window to [%d, %d]", self.x, self.env.x_lo, self.env.x_hi)
        if self.track_traps:
            self._refresh_traps()

    def state(self) -> WalkState:
        return WalkState(
            position=(self.x, self.y),
            time=self.time,
            min_x=self.min_x,
            max_x=self.max_x,
            visits=dict(self.visits),
            trap_time=dict(self.trap_time),
            backbone_time=self.backbone_time,
        )

    def step(self) -> Vertex:
        self._advance(self.time + 1, None, False, ())
        return (self.x, self.y)

    def _advance(
        self,
        until: int,
        x_threshold: Optional[int],
        stop_on_return: bool,
        checkpoints: Sequence[int],
        marks: Optional[Dict[int, int]] = None,
    ) -> Optional[str]:
        env = self.env
        cols = env.columns
        x_lo, x_hi, sealed = env.x_lo, env.x_hi, env.sealed
        pr, prl = self._p_right, self._p_right_left
        x, y, t = self.x, self.y, self.time
        sx, sy = self.start
        min_x, max_x = self.min_x, self.max_x
        buf, pos = self._buf, self._pos
        track = self.track_traps
        trap_ids, trap_keys, trap_time = self._trap_ids, self._trap_keys, self.trap_time
        backbone = self.backbone_time
        visits = self.visits
        registered = bool(visits)
        record = self.record
        path_x, path_y = self._path_x, self._path_y
        pending = [c for c in checkpoints if c > t]
        next_mark = pending[0] if pending else -1
        reason: Optional[str] = None

        while t < until:
            if (x == x_hi or x == x_lo) and not sealed and self.extender is not None:
                self.x, self.y = x, y
                self._extend()
                x_lo, x_hi = env.x_lo, env.x_hi
                trap_ids, trap_keys = self._trap_ids, self._trap_keys
            if pos >= len(buf):
                buf = self._rng.random(self._block).tolist()
                pos = 0
            u = buf[pos]
            pos += 1
            if track:
                tid = trap_ids[2 * (x - x_lo) + y]
                if tid >= 0:
                    key = trap_keys[tid]
                    trap_time[key] = trap_time.get(key, 0) + 1
                else:
                    backbone += 1
            if u < pr:
                if cols[x - x_lo] & (2 - y):
                    if x == x_hi and not sealed:
                        self._sync(x, y, t, min_x, max_x, buf, pos, backbone)
                        raise WindowExitError(f"walk left the window to the right at time {t}")
                    x += 1
                    if x > max_x:
                        max_x = x
            elif u < prl:
                if x == x_lo:
                    if not sealed:
                        self._sync(x, y, t, min_x, max_x, buf, pos, backbone)
                        raise WindowExitError(f"walk left the window to the left at time {t}")
                elif cols[x - 1 - x_lo] & (2 - y):
                    x -= 1
                    if x < min_x:
                        min_x = x
            elif cols[x - x_lo] & VERT:
                y ^= 1
            t += 1
            if record:
                path_x.append(x)
                path_y.append(y)
            if registered and (x, y) in visits:
                visits[(x, y)] += 1
            if t == next_mark and marks is not None:
                marks[t] = x
                pending.pop(0)
                next_mark = pending[0] if pending else -1
            if stop_on_return and x == sx and y == sy:
                reason = "returned"
                break
            if x_threshold is not None and x >= x_threshold:
                reason = "x_threshold"
                break

        self._sync(x, y, t, min_x, max_x, buf, pos, backbone)
        return reason

    def _sync(self, x: int, y: int, t: int, min_x: int, max_x: int, buf: List[float], pos: int, backbone: int) -> None:
        self.x, self.y, self.time = x, y, t
        self.min_x, self.max_x = min_x, max_x
        self._buf, self._pos = buf, pos
        self.backbone_time = backbone

    def path(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self._path_x, dtype=np.int64), np.asarray(self._path_y, dtype=np.int8)

    def run(self, stop: Union[StopRule, StopPredicate], step_cap: int = DEFAULT_STEP_CAP) -> Trajectory:
        """Walk until ``stop`` fires.

        Raises:
            HorizonError: If a rule without horizon has not fired after ``step_cap`` steps.
            WindowExitError: If the walk needs edges outside a non-extensible window.
        """
        marks: Dict[int, int] = {}
        if callable(stop) and not isinstance(stop, StopRule):
            while not stop(self.state()):
                if self.time >= step_cap:
                    raise HorizonError(f"stop predicate did not fire within {step_cap} steps")
                self.step()
            reason = "predicate"
        else:
            until = stop.horizon if stop.horizon is not None else step_cap
            checkpoints = tuple(sorted(stop.checkpoints))
            if 0 in checkpoints:
                marks[0] = self.x
            reason = self._advance(until, stop.x_threshold, stop.stop_on_return, checkpoints, marks)
            if reason is None:
                if stop.horizon is None:
                    raise HorizonError(f"walk did not stop within {step_cap} steps")
                reason = "horizon"
        path_x, path_y = self.path() if self.record else (None, None)
        return Trajectory(state=self.state(), reason=reason, path_x=path_x, path_y=path_y, checkpoints=marks)


def simulate_walk(
    env: Environment,
    lam: float,
    rng: np.random.Generator,
    stop: Union[StopRule, StopPredicate],
    start: Vertex = (0, 0),
    extender: Optional[EnvironmentExtender] = None,
    track_traps: bool = False,
    registered: Iterable[Vertex] = (),
    record: Optional[bool] = None,
) -> Trajectory:
    """Sample one trajectory of the quenched walk until ``stop``.

    Full position records default to on only for horizons up to 10^5 steps.
    """
    if record is None:
        record = isinstance(stop, StopRule) and stop.horizon is not None and stop.horizon <= 100_000
    walker = QuenchedWalker(
        env, lam, rng, start=start, extender=extender, track_traps=track_traps, registered=registered, record=record
    )
    return walker.run(stop)


class KernelWalker:
    """Step-by-step sampler for any finite-branching kernel (pruned walks, small chains)."""

    def __init__(self, kernel: Kernel, rng: np.random.Generator, start):
        self.kernel = kernel
        self.state = start
        self.time = 0
        self._rng = rng
        self._cache: Dict[object, Tuple[List[object], np.ndarray]] = {}

    def step(self):
        entry = self._cache.get(self.state)
        if entry is None:
            moves = self.kernel.transition(self.state)
            entry = ([target for target, _ in moves], np.cumsum([prob for _, prob in moves]))
            self._cache[self.state] = entry
        targets, cdf = entry
        i = min(int(np.searchsorted(cdf, self._rng.random() * cdf[-1], side="right")), len(targets) - 1)
        target = targets[i]
        if target is None:
            raise WindowExitError(f"kernel walk left the window from {self.state}")
        self.state = target
        self.time += 1
        return target


@dataclass(frozen=True)
class ExcursionBatch:
    """Per-excursion records of the single-trap chain."""
    duration: np.ndarray
    reached_bottom: np.ndarray
    bottom_returns: np.ndarray

    def __len__(self) -> int:
        return len(self.duration)


def simulate_trap_excursions(m: int, lam: float, rng: np.random.Generator, n: int, lazy: bool = False) -> ExcursionBatch:
    """Run n independent excursions of the line-graph chain on {0,…,m} from 1 until absorption at 0.

    Non-lazy: steps right with p_λ and left with q_λ, staying put at m instead
    of stepping right. Lazy: right, left, stay with weights e^λ, e^{-λ}, 1, and
    the right weight also turns into a stay at m.
    """
    if m < 1:
        raise DomainError(f"trap length must be >= 1, got {m}")
    if lam <= 0:
        raise DomainError(f"bias must be positive, got {lam}")
    if lazy:
        p_right, p_left, _ = candidate_law(lam)
    else:
        p_right = 1.0 / (1.0 + math.exp(-2.0 * lam))
        p_left = 1.0 - p_right
    duration = np.zeros(n, dtype=np.int64)
    visits = np.zeros(n, dtype=np.int64)
    position = np.ones(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        here = position[active]
        at_bottom = here == m
        visits[active[at_bottom]] += 1
        u = rng.random(active.size)
        right = (u < p_right) & ~at_bottom
        left = (u >= p_right) & (u < p_right + p_left)
        here = here + right - left
        duration[active] += 1
        position[active] = here
        active = active[here > 0]
    reached = visits > 0
    return ExcursionBatch(duration=duration, reached_bottom=reached, bottom_returns=np.where(reached, visits - 1, 0))


def simulate_trap_excursion(m: int, lam: float, rng: np.random.Generator, lazy: bool = False) -> Dict[str, int]:
    """Single excursion record {duration, reached_bottom, bottom_returns}."""
    batch = simulate_trap_excursions(m, lam, rng, 1, lazy=lazy)
    return {
        "duration": int(batch.duration[0]),
        "reached_bottom": bool(batch.reached_bottom[0]),
        "bottom_returns": int(batch.bottom_returns[0]),
    }


__all__ = [
    "DEFAULT_STEP_CAP",
    "candidate_law",
    "obstacle_candidate_law",
    "quenched_transition",
    "pruned_transition",
    "Kernel",
    "QuenchedKernel",
    "PrunedKernel",
    "exact_k_step_distribution",
    "total_variation",
    "StopRule",
    "WalkState",
    "Trajectory",
    "QuenchedWalker",
    "simulate_walk",
    "KernelWalker",
    "ExcursionBatch",
    "simulate_trap_excursions",
    "simulate_trap_excursion",
]
