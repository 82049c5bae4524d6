"""Joint chain of the pruned walk and the walk on the re-inserted environment.

A coupled state is (u, v, w): u lives on the pruned environment, v on the
environment obtained by re-inserting a trap piece at every obstacle, and w
fixes the exit side of a backbone excursion through a piece (0 when free).

Step cases:

1. u = φ(v), u not an obstacle: one candidate, executed on both graphs.
2. u = φ(v) is an obstacle: the seven-entry joint move at the obstacle.
3. v on the backbone interior of a piece: v moves, h-transformed when w ≠ 0.
4. v on a trap node: v moves by the standard law.
5. v has an image but u ≠ φ(v): u moves by the pruned law, v waits.

Steps of cases 1, 2 and 5 move the pruned component (N₁); steps of cases
1 to 4 move the full component (N₂).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple
import json
import logging
import math

import numpy as np
import pandas as pd

from ..core.errors import (
    DegenerateSampleError,
    DomainError,
    InconsistentStateError,
    WindowExitError,
)
from .analytic import critical_bias, max_feasible_trap_length, obstacle_transitions, pruned_energy_bound
from .env import (
    BOTTOM,
    TOP,
    VERT,
    Environment,
    Vertex,
    build_column_chain,
    find_pre_regeneration_points,
    rail_bit,
    sample_environment,
    sample_window_rejection,
)
from .regen import regeneration_points
from .traps import PrunedEnvironment, TrapPiece, enumerate_traps, prune_environment
from .walk import (
    MOVES,
    KernelWalker,
    PrunedKernel,
    QuenchedKernel,
    candidate_law,
    exact_k_step_distribution,
    total_variation,
)

logger = logging.getLogger(__name__)

CASE_SYNC = 1
CASE_OBSTACLE = 2
CASE_BACKBONE = 3
CASE_TRAP = 4
CASE_CATCH_UP = 5
N1_CASES = (CASE_SYNC, CASE_OBSTACLE, CASE_CATCH_UP)
N2_CASES = (CASE_SYNC, CASE_OBSTACLE, CASE_BACKBONE, CASE_TRAP)

_NO_IMAGE = np.iinfo(np.int64).min

CouplingState = Tuple[Vertex, Vertex, int]


@dataclass(frozen=True)
class ReinsertedPiece:
    """A trap piece of the full environment and the obstacle it replaces."""
    obstacle_level: int
    trap: TrapPiece

    @property
    def entrance_x(self) -> int:
        return self.trap.entrance_x

    @property
    def length(self) -> int:
        return self.trap.length

    @property
    def continuing_rail(self) -> int:
        return 1 - self.trap.rail


@dataclass(frozen=True)
class OriginDraw:
    """Outcome of the origin coin for the obstacle at pruned level 0."""
    heads: bool
    length: int
    shift: int  # ω̃ level of the obstacle is -shift; 0 on heads


@dataclass(frozen=True, eq=False)
class CoupledEnvironment:
    """Pruned environment, the re-inserted environment ω̃ and the level maps between them."""
    pruned: PrunedEnvironment
    full: Environment
    lengths: Dict[int, int]
    pieces: Tuple[ReinsertedPiece, ...]
    pruned_to_full: np.ndarray
    full_to_pruned: np.ndarray
    piece_index: np.ndarray
    origin: Optional[OriginDraw] = None

    @property
    def lam(self) -> float:
        return self.pruned.lam

    def lift(self, u: Vertex) -> Vertex:
        return (int(self.pruned_to_full[u[0] - self.pruned.env.x_lo]), u[1])

    def piece_of(self, v: Vertex) -> Optional[ReinsertedPiece]:
        """The piece whose interior levels contain v (either rail)."""
        if not self.full.contains(v[0]):
            raise WindowExitError(f"{v} is outside the re-inserted window")
        i = int(self.piece_index[v[0] - self.full.x_lo])
        return self.pieces[i] if i >= 0 else None

    def phi(self, v: Vertex) -> Optional[Vertex]:
        """Pruned vertex corresponding to v; None on piece interiors."""
        if not self.full.contains(v[0]):
            raise WindowExitError(f"{v} is outside the re-inserted window")
        level = int(self.full_to_pruned[v[0] - self.full.x_lo])
        return None if level == _NO_IMAGE else (level, v[1])

    def start_state(self, start: Vertex = (0, 0)) -> CouplingState:
        u = self.phi(start)
        if u is None:
            raise DomainError(f"start {start} lies inside a re-inserted piece")
        return (u, start, 0)

    @cached_property
    def kernel(self) -> "CouplingKernel":
        return CouplingKernel(self)


def _assemble(
    pruned: PrunedEnvironment,
    full: Environment,
    pruned_to_full: np.ndarray,
    lengths: Dict[int, int],
    origin: Optional[OriginDraw] = None,
) -> CoupledEnvironment:
    full_to_pruned = np.full(full.width, _NO_IMAGE, dtype=np.int64)
    full_to_pruned[pruned_to_full - full.x_lo] = np.arange(pruned.env.width, dtype=np.int64) + pruned.env.x_lo
    piece_index = np.full(full.width, -1, dtype=np.int64)
    pieces: List[ReinsertedPiece] = []
    for ob in sorted(pruned.obstacles, key=lambda o: o.level):
        a = int(pruned_to_full[ob.level - pruned.env.x_lo])
        L = int(lengths[ob.level])
        piece = ReinsertedPiece(ob.level, TrapPiece(rail=1 - ob.rail, entrance_x=a, length=L))
        start = a + 1 - full.x_lo
        piece_index[start : start + L] = len(pieces)
        pieces.append(piece)
    return CoupledEnvironment(
        pruned=pruned,
        full=full,
        lengths=dict(lengths),
        pieces=tuple(pieces),
        pruned_to_full=np.asarray(pruned_to_full, dtype=np.int64),
        full_to_pruned=full_to_pruned,
        piece_index=piece_index,
        origin=origin,
    )


def validate_lengths(lam: float, lengths: Sequence[int]) -> None:
    """Check every re-inserted length against the obstacle vector.

    Raises:
        InvalidCouplingParameters: For the shortest infeasible length.
    """
    for L in sorted(set(int(x) for x in lengths)):
        obstacle_transitions(lam, L, strict=True)


def reinsert_traps(pruned: PrunedEnvironment, lengths: Dict[int, int], origin: Optional[OriginDraw] = None) -> CoupledEnvironment:
    """Build ω̃ by re-inserting a piece of length ``lengths[level]`` at every obstacle.

    Pruned level 0 maps to ω̃ level ``-origin.shift`` (0 without an origin draw).
    """
    missing = [ob.level for ob in pruned.obstacles if ob.level not in lengths]
    if missing:
        raise DomainError(f"no re-inserted length for obstacles at {missing}")
    validate_lengths(pruned.lam, lengths.values())
    penv = pruned.env
    cols = bytearray()
    offsets = np.empty(penv.width, dtype=np.int64)
    for i, code in enumerate(penv.columns):
        level = penv.x_lo + i
        offsets[i] = len(cols)
        ob = pruned.obstacle_at(level)
        if ob is None:
            cols.append(code)
            continue
        L = int(lengths[level])
        cols.append(code | rail_bit(1 - ob.rail))
        cols.extend([TOP | BOTTOM] * (L - 1))
        cols.append(rail_bit(ob.rail))
    shift = origin.shift if origin is not None else 0
    if penv.contains(0):
        x_lo = -shift - int(offsets[0 - penv.x_lo])
    else:
        x_lo = penv.x_lo
    full = Environment(x_lo, bytes(cols), provenance=penv.provenance, p=penv.p, sealed=penv.sealed)
    return _assemble(pruned, full, offsets + x_lo, lengths, origin)


def coupled_from_environment(env: Environment, lam: float) -> CoupledEnvironment:
    """Couple a given environment with its own pruning; ω̃ is ``env`` itself."""
    pruned = prune_environment(env, lam)
    lengths = {ob.level: ob.length for ob in pruned.obstacles}
    validate_lengths(lam, lengths.values())
    return _assemble(pruned, env, np.asarray(pruned.levels, dtype=np.int64), lengths)


def sample_trap_lengths(p: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """i.i.d. generic trap lengths with P(L = m) ∝ e^{-2λ_c m}."""
    return rng.geometric(-math.expm1(-2.0 * critical_bias(p)), size=size).astype(np.int64)


def _sealed(env: Environment) -> Environment:
    out = env.copy()
    out.columns[-1] &= VERT
    out.sealed = True
    return out


# --- origin coin ------------------------------------------------------------


@dataclass(frozen=True)
class OriginCoin:
    """Estimate of P(entrance at 0 | 0 in a trap piece) with the conditional piece laws."""
    p: float
    heads_probability: float
    stderr: float
    n_samples: int
    n_events: int
    heads_lengths: Dict[int, float]
    tails_table: Dict[Tuple[int, int], float]  # (length, shift) -> probability

    def payload(self) -> str:
        return json.dumps(
            {
                "n_events": self.n_events,
                "heads_lengths": {str(m): q for m, q in sorted(self.heads_lengths.items())},
                "tails_table": {f"{m},{k}": q for (m, k), q in sorted(self.tails_table.items())},
            },
            sort_keys=True,
        )

    @classmethod
    def from_payload(cls, p: float, value: float, stderr: float, n_samples: int, payload: str) -> "OriginCoin":
        data = json.loads(payload)
        tails: Dict[Tuple[int, int], float] = {}
        for key, q in data["tails_table"].items():
            m, k = key.split(",")
            tails[(int(m), int(k))] = float(q)
        return cls(
            p=p,
            heads_probability=value,
            stderr=stderr,
            n_samples=n_samples,
            n_events=int(data["n_events"]),
            heads_lengths={int(m): float(q) for m, q in data["heads_lengths"].items()},
            tails_table=tails,
        )

    def draw(self, rng: np.random.Generator) -> OriginDraw:
        if rng.random() < self.heads_probability and self.heads_lengths:
            lengths = sorted(self.heads_lengths)
            probs = np.array([self.heads_lengths[m] for m in lengths])
            return OriginDraw(heads=True, length=int(rng.choice(lengths, p=probs / probs.sum())), shift=0)
        if not self.tails_table:
            raise DegenerateSampleError("origin coin has no interior events to draw from")
        keys = sorted(self.tails_table)
        probs = np.array([self.tails_table[key] for key in keys])
        m, k = keys[int(rng.choice(len(keys), p=probs / probs.sum()))]
        return OriginDraw(heads=False, length=m, shift=k)


def estimate_origin_coin(p: float, rng: np.random.Generator, n_samples: int, N: int = 8, budget: int = 100_000) -> OriginCoin:
    """Monte Carlo over window-rejection samples of where level 0 sits in a trap piece.

    Heads: a complete trap has its entrance at 0. Tails: 0 is an interior level
    of a trap entering at -k, recorded as (length, k).

    Raises:
        DegenerateSampleError: If no sample puts level 0 in a trap piece.
    """
    heads: Dict[int, int] = {}
    tails: Dict[Tuple[int, int], int] = {}
    for _ in range(n_samples):
        env = sample_window_rejection(p, N, rng, budget=budget)
        for trap in enumerate_traps(env):
            if trap.entrance_x == 0:
                heads[trap.length] = heads.get(trap.length, 0) + 1
                break
            if 0 in trap.interior_levels():
                key = (trap.length, -trap.entrance_x)
                tails[key] = tails.get(key, 0) + 1
                break
    n_heads = sum(heads.values())
    n_tails = sum(tails.values())
    n_events = n_heads + n_tails
    if n_events == 0:
        raise DegenerateSampleError(f"no origin trap events in {n_samples} windows at p={p}")
    q = n_heads / n_events
    logger.info("origin coin p=%.4g: %d heads, %d tails over %d windows", p, n_heads, n_tails, n_samples)
    return OriginCoin(
        p=p,
        heads_probability=q,
        stderr=math.sqrt(q * (1.0 - q) / n_events),
        n_samples=n_samples,
        n_events=n_events,
        heads_lengths={m: c / n_heads for m, c in heads.items()} if n_heads else {},
        tails_table={key: c / n_tails for key, c in tails.items()} if n_tails else {},
    )


def cached_origin_coin(storage, p: float, rng: np.random.Generator, n_samples: int, N: int = 8) -> OriginCoin:
    """Origin coin from the estimate cache, estimating and storing it on a miss."""
    row = storage.get_estimate("origin_coin", p, n_samples)
    if row is not None:
        return OriginCoin.from_payload(p, row["value"], row["stderr"], row["n_samples"], row["payload_json"])
    coin = estimate_origin_coin(p, rng, n_samples, N=N)
    storage.put_estimate("origin_coin", p, coin.heads_probability, coin.stderr, n_samples, coin.payload())
    return coin


def build_coupled_environment(
    p: float,
    lam: float,
    rng: np.random.Generator,
    extent: int,
    law: str = "cycle_stationary",
    left_cycles: int = 1,
    origin_coin: Optional[OriginCoin] = None,
    window_budget: int = 100_000,
) -> CoupledEnvironment:
    """Sample and prune an environment, then re-insert i.i.d. generic trap lengths.

    ``law`` is "cycle_stationary" (origin at a pre-regeneration point, no coin)
    or "window_rejection" on [-extent, extent], where an obstacle at pruned level
    0 takes its length and shift from ``origin_coin``. The window is sealed.

    Raises:
        InvalidCouplingParameters: If a drawn length makes the obstacle vector invalid.
    """
    if law == "cycle_stationary":
        env = sample_environment(build_column_chain(p), rng, x_extent=extent, left_cycles=left_cycles)
    elif law == "window_rejection":
        env = sample_window_rejection(p, extent, rng, budget=window_budget)
    else:
        raise DomainError(f"unknown environment law {law!r}")
    pruned = prune_environment(_sealed(env), lam)
    drawn = sample_trap_lengths(p, rng, len(pruned.obstacles))
    lengths = {ob.level: int(L) for ob, L in zip(pruned.obstacles, drawn)}
    origin: Optional[OriginDraw] = None
    if law == "window_rejection" and pruned.obstacle_at(0) is not None:
        if origin_coin is None:
            raise DomainError("an obstacle at level 0 needs the origin coin")
        origin = origin_coin.draw(rng)
        lengths[0] = origin.length
    cenv = reinsert_traps(pruned, lengths, origin)
    logger.debug("coupled environment: %d obstacles, width %d -> %d", len(lengths), pruned.env.width, cenv.full.width)
    return cenv


def feasibility_table(lams: Sequence[float], max_length: int = 10) -> pd.DataFrame:
    """Validity of the obstacle vector per (λ, L), with the smallest entry."""
    rows = []
    for lam in lams:
        for L in range(1, max_length + 1):
            ot = obstacle_transitions(lam, L, strict=False)
            rows.append({"lambda": lam, "L": L, "valid": ot.valid, "min_entry": min(ot.probabilities())})
    frame = pd.DataFrame(rows, columns=["lambda", "L", "valid", "min_entry"])
    frame["max_feasible_L"] = frame["lambda"].map({lam: max_feasible_trap_length(lam) for lam in lams})
    return frame


# --- the joint kernel ---------------------------------------------------------


def _step(env: Environment, v: Vertex, move: str) -> Vertex:
    x, y = v
    if move == "vertical":
        target = (x, 1 - y)
        state: Optional[bool] = env.vertical_open(x)
    else:
        target = (x + 1, y) if move == "right" else (x - 1, y)
        state = env.edge_open(v, target)
    if state is None:
        raise WindowExitError(f"move {move} from {v} leaves the window")
    return target if state else v


class CouplingKernel:
    """Transition law of the joint chain; each state's row is built once."""

    def __init__(self, cenv: CoupledEnvironment):
        self.cenv = cenv
        lam = cenv.lam
        self.law = candidate_law(lam)
        self.gamma = math.exp(-2.0 * lam)
        self.pruned_kernel = PrunedKernel(cenv.pruned)
        self.obstacle_moves = {L: obstacle_transitions(lam, L).moves for L in set(cenv.lengths.values())}
        self._rows: Dict[CouplingState, Tuple[List[CouplingState], np.ndarray, int]] = {}

    def case_of(self, state: CouplingState) -> int:
        u, v, w = state
        piece = self.cenv.piece_of(v)
        if piece is not None:
            return CASE_TRAP if v[1] == piece.trap.rail else CASE_BACKBONE
        if w != 0:
            raise InconsistentStateError(f"memory {w} outside a trap piece at {state}")
        if u != self.cenv.phi(v):
            return CASE_CATCH_UP
        return CASE_OBSTACLE if self.cenv.pruned.is_obstacle(u) else CASE_SYNC

    def _h(self, x: int, L: int, w: int) -> float:
        right = -math.expm1(x * math.log(self.gamma)) / -math.expm1((L + 1) * math.log(self.gamma))
        return right if w > 0 else 1.0 - right

    def _backbone(self, state: CouplingState, piece: ReinsertedPiece) -> List[Tuple[CouplingState, float]]:
        u, v, w = state
        a, L, y = piece.entrance_x, piece.length, v[1]
        x = v[0] - a
        p_right, p_left, p_stay = self.law
        if w != 0:
            hx = self._h(x, L, w)
            if hx <= 0.0:
                raise InconsistentStateError(f"conditioned excursion cannot exit on side {w} from {v}")
            p_right *= self._h(x + 1, L, w) / hx
            p_left *= self._h(x - 1, L, w) / hx
        out: List[Tuple[CouplingState, float]] = []
        for dx, prob in ((1, p_right), (-1, p_left), (0, p_stay)):
            if prob <= 0.0:
                continue
            nx = x + dx
            memory = 0 if nx in (0, L + 1) else w
            out.append(((u, (a + nx, y), memory), prob))
        return out

    def _rows_for(self, state: CouplingState) -> Tuple[List[Tuple[CouplingState, float]], int]:
        cenv = self.cenv
        u, v, w = state
        case = self.case_of(state)
        if case == CASE_TRAP:
            if w != 0:
                raise InconsistentStateError(f"memory {w} on a trap node at {state}")
            return [((u, _step(cenv.full, v, m), 0), q) for m, q in zip(MOVES, self.law)], case
        if case == CASE_BACKBONE:
            return self._backbone(state, cenv.piece_of(v)), case  # type: ignore[arg-type]
        if case == CASE_CATCH_UP:
            moves = self.pruned_kernel.transition(u)
            if any(target is None for target, _ in moves):
                raise WindowExitError(f"pruned move from {u} leaves the window")
            return [((target, v, 0), q) for target, q in moves], case  # type: ignore[misc]
        if case == CASE_OBSTACLE:
            out = []
            for move in self.obstacle_moves[cenv.lengths[u[0]]]:
                nu = _step(cenv.pruned.env, u, move.first)
                nv = _step(cenv.full, v, move.second)
                out.append(((nu, nv, move.w if cenv.piece_of(nv) is not None else 0), move.probability))
            return out, case
        out = []
        for m, q in zip(MOVES, self.law):
            out.append(((_step(cenv.pruned.env, u, m), _step(cenv.full, v, m), 0), q))
        return out, case

    def transition(self, state: CouplingState) -> Tuple[List[CouplingState], np.ndarray, int]:
        """Merged (targets, probabilities, case) for ``state``."""
        row = self._rows.get(state)
        if row is None:
            moves, case = self._rows_for(state)
            merged: Dict[CouplingState, float] = {}
            for target, q in moves:
                if q > 0.0:
                    merged[target] = merged.get(target, 0.0) + q
            targets = list(merged)
            row = (targets, np.array([merged[t] for t in targets]), case)
            self._rows[state] = row
        return row


def coupled_step(state: CouplingState, cenv: CoupledEnvironment, rng: np.random.Generator) -> Tuple[CouplingState, int]:
    """Draw the next joint state; returns it with the case that produced it.

    Raises:
        InconsistentStateError: If ``state`` matches no case.
    """
    targets, probs, case = cenv.kernel.transition(state)
    cdf = np.cumsum(probs)
    i = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(targets) - 1)
    return targets[i], case


@dataclass
class CouplingTrajectory:
    """Joint path with per-step case labels; ``cases[t]`` produced step t → t+1."""
    u: np.ndarray  # (n+1, 2)
    v: np.ndarray  # (n+1, 2)
    w: np.ndarray
    cases: np.ndarray

    def __len__(self) -> int:
        return int(self.cases.size)

    def case_counts(self) -> Dict[int, int]:
        counts = np.bincount(self.cases, minlength=CASE_CATCH_UP + 1)
        return {case: int(counts[case]) for case in range(CASE_SYNC, CASE_CATCH_UP + 1)}


def simulate_coupling(cenv: CoupledEnvironment, rng: np.random.Generator, horizon: int, start: Vertex = (0, 0)) -> CouplingTrajectory:
    """Run the joint chain for ``horizon`` steps from (φ(start), start, 0)."""
    if horizon < 0:
        raise DomainError(f"horizon must be nonnegative, got {horizon}")
    kernel = cenv.kernel
    state = cenv.start_state(start)
    u = np.empty((horizon + 1, 2), dtype=np.int64)
    v = np.empty((horizon + 1, 2), dtype=np.int64)
    w = np.empty(horizon + 1, dtype=np.int8)
    cases = np.empty(horizon, dtype=np.int8)
    u[0], v[0], w[0] = state
    uniforms = rng.random(horizon)
    for t in range(horizon):
        targets, probs, case = kernel.transition(state)
        cdf = np.cumsum(probs)
        i = min(int(np.searchsorted(cdf, uniforms[t] * cdf[-1], side="right")), len(targets) - 1)
        state = targets[i]
        cases[t] = case
        u[t + 1], v[t + 1], w[t + 1] = state
    return CouplingTrajectory(u=u, v=v, w=w, cases=cases)


def extract_marginals(traj: CouplingTrajectory) -> Tuple[np.ndarray, np.ndarray]:
    """(pruned_traj, full_traj): u sampled after N₁ steps, v after N₂ steps, each with its start."""
    n1 = np.isin(traj.cases, N1_CASES)
    n2 = np.isin(traj.cases, N2_CASES)
    pruned = np.concatenate([traj.u[:1], traj.u[1:][n1]])
    full = np.concatenate([traj.v[:1], traj.v[1:][n2]])
    return pruned, full


# --- exact marginals ------------------------------------------------------------


@dataclass(frozen=True)
class MarginalCheck:
    k: int
    n_states: int
    pruned: Dict[Vertex, float]
    full: Dict[Vertex, float]
    direct_pruned: Dict[Vertex, float]
    direct_full: Dict[Vertex, float]

    @property
    def tv_pruned(self) -> float:
        return total_variation(self.pruned, self.direct_pruned)  # type: ignore[arg-type]

    @property
    def tv_full(self) -> float:
        return total_variation(self.full, self.direct_full)  # type: ignore[arg-type]


def _censored_marginal(matrix: np.ndarray, active: np.ndarray, k: int) -> np.ndarray:
    """Law of the state at the k-th step of the chain watched only on ``active`` states."""
    a = np.nonzero(active)[0]
    b = np.nonzero(~active)[0]
    t_aa = matrix[np.ix_(a, a)]
    if b.size:
        t_bb = matrix[np.ix_(b, b)]
        try:
            absorb = np.linalg.solve(np.eye(b.size) - t_bb, matrix[np.ix_(b, a)])
        except np.linalg.LinAlgError as e:
            raise InconsistentStateError("waiting excursions of the joint chain do not terminate") from e
        kernel = t_aa + matrix[np.ix_(a, b)] @ absorb
    else:
        absorb = np.zeros((0, a.size))
        kernel = t_aa
    pi = np.zeros(a.size)
    if active[0]:
        pi[np.searchsorted(a, 0)] = 1.0
    else:
        pi = absorb[np.searchsorted(b, 0)].copy()
    for _ in range(k):
        pi = pi @ kernel
    out = np.zeros(matrix.shape[0])
    out[a] = pi
    return out


def exact_marginal_distributions(
    cenv: CoupledEnvironment, start: Vertex = (0, 0), k: int = 8, cap: int = 16, max_states: int = 20_000
) -> MarginalCheck:
    """Exact k-step laws of both subsampled components against the direct walks.

    Builds every joint state reachable from the start, then censors the joint
    chain to N₁ (resp. N₂) steps and projects on u (resp. v).

    Raises:
        DomainError: If k exceeds ``cap`` or the joint state space is too large.
    """
    if k < 0 or k > cap:
        raise DomainError(f"k must lie in [0, {cap}], got {k}")
    kernel = cenv.kernel
    s0 = cenv.start_state(start)
    index: Dict[CouplingState, int] = {s0: 0}
    order: List[CouplingState] = [s0]
    rows = []
    i = 0
    while i < len(order):
        targets, probs, case = kernel.transition(order[i])
        rows.append((targets, probs, case))
        for target in targets:
            if target not in index:
                index[target] = len(order)
                order.append(target)
                if len(order) > max_states:
                    raise DomainError(f"more than {max_states} joint states reachable")
        i += 1
    n = len(order)
    matrix = np.zeros((n, n))
    cases = np.empty(n, dtype=np.int8)
    for row, (targets, probs, case) in enumerate(rows):
        cases[row] = case
        for target, q in zip(targets, probs):
            matrix[row, index[target]] += q

    def project(law: np.ndarray, component: int) -> Dict[Vertex, float]:
        out: Dict[Vertex, float] = {}
        for state, q in zip(order, law):
            if q > 0.0:
                key = state[component]
                out[key] = out.get(key, 0.0) + float(q)
        return out

    pruned_law = project(_censored_marginal(matrix, np.isin(cases, N1_CASES), k), 0)
    full_law = project(_censored_marginal(matrix, np.isin(cases, N2_CASES), k), 1)
    direct_pruned = exact_k_step_distribution(PrunedKernel(cenv.pruned), s0[0], k, cap=cap)
    direct_full = exact_k_step_distribution(QuenchedKernel(cenv.full, cenv.lam), start, k, cap=cap)
    logger.debug("exact marginals over %d joint states, k=%d", n, k)
    return MarginalCheck(
        k=k,
        n_states=n,
        pruned=pruned_law,
        full=full_law,
        direct_pruned=direct_pruned,  # type: ignore[arg-type]
        direct_full=direct_full,  # type: ignore[arg-type]
    )


# --- diagnostics ------------------------------------------------------------------


@dataclass
class DominationReport:
    checked: int
    n1_steps: int
    n2_steps: int
    violations: List[dict] = field(default_factory=list)
    entrance_violations: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.entrance_violations

    def as_dict(self) -> dict:
        out = asdict(self)
        out["ok"] = self.ok
        return out


def _departures(path: np.ndarray) -> Dict[Vertex, int]:
    if len(path) < 2:
        return {}
    keys, counts = np.unique(path[:-1], axis=0, return_counts=True)
    return {(int(x), int(y)): int(c) for (x, y), c in zip(keys, counts)}


def check_visit_domination(traj: CouplingTrajectory, cenv: CoupledEnvironment) -> DominationReport:
    """Full-component departures from each vertex with an image never exceed the pruned ones.

    Also checks, per piece, that entries into the trap are bounded by the
    pruned departures from the former entrance.
    """
    pruned, full = extract_marginals(traj)
    pruned_counts = _departures(pruned)
    full_counts = _departures(full)
    report = DominationReport(checked=0, n1_steps=len(pruned) - 1, n2_steps=len(full) - 1)
    for v, count in sorted(full_counts.items()):
        u = cenv.phi(v)
        if u is None:
            continue
        report.checked += 1
        bound = pruned_counts.get(u, 0)
        if count > bound:
            report.violations.append({"full": list(v), "pruned": list(u), "full_visits": count, "pruned_visits": bound})
    if len(full) > 1:
        steps = np.concatenate([full[:-1], full[1:]], axis=1)
        for piece in cenv.pieces:
            a, y = piece.entrance_x, piece.trap.rail
            entries = int(np.count_nonzero((steps[:, 0] == a) & (steps[:, 1] == y) & (steps[:, 2] == a + 1) & (steps[:, 3] == y)))
            bound = pruned_counts.get((piece.obstacle_level, y), 0)
            if entries > bound:
                report.entrance_violations.append(
                    {"entrance": [a, y], "entries": entries, "pruned_visits": bound}
                )
    if not report.ok:
        logger.warning("visit domination failed at %d vertices", len(report.violations) + len(report.entrance_violations))
    return report


@dataclass
class TransferReport:
    checked: int = 0
    pending: int = 0
    violations: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def regeneration_transfer_check(traj: CouplingTrajectory, cenv: CoupledEnvironment, delta: float = 20) -> TransferReport:
    """Certified regenerations of the pruned component are visited once by the full one.

    Levels the full component has not yet passed are counted as pending.
    """
    pruned, full = extract_marginals(traj)
    levels = find_pre_regeneration_points(cenv.pruned.env)
    record = regeneration_points(pruned[:, 0], levels, delta=delta)
    full_x = full[:, 0]
    report = TransferReport()
    for rho, censored in zip(record.rho, record.censored):
        if censored:
            continue
        level = int(cenv.pruned_to_full[int(rho) - cenv.pruned.env.x_lo])
        if full_x[-1] <= level:
            report.pending += 1
            continue
        report.checked += 1
        visits = int(np.count_nonzero(full_x == level))
        if visits != 1:
            report.violations.append({"pruned_level": int(rho), "full_level": level, "full_visits": visits})
    return report


@dataclass(frozen=True)
class EscapeEstimate:
    frequency: float
    stderr: float
    n: int
    excluded: int
    bound: float

    @property
    def consistent(self) -> bool:
        return self.frequency >= self.bound - 3.0 * self.stderr


def escape_frequency(
    pruned: PrunedEnvironment,
    rng: np.random.Generator,
    trials: int = 200,
    distance: int = 200,
    step_cap: int = 1_000_000,
) -> EscapeEstimate:
    """Fraction of pruned walks from pre-regeneration points that reach ``distance`` to the right before returning.

    Walks that leave the window, or hit the step cap, are excluded.
    """
    starts = [b for b in find_pre_regeneration_points(pruned.env) if b + distance <= pruned.env.x_hi]
    if not starts:
        raise DomainError(f"no pre-regeneration point with {distance} levels of room")
    kernel = PrunedKernel(pruned)
    escaped = returned = excluded = 0
    for i in range(trials):
        b = starts[i % len(starts)]
        origin = (b, 0)
        walker = KernelWalker(kernel, rng, origin)
        try:
            while walker.time < step_cap:
                state = walker.step()
                if state == origin:
                    returned += 1
                    break
                if state[0] >= b + distance:
                    escaped += 1
                    break
            else:
                excluded += 1
        except WindowExitError:
            excluded += 1
    n = escaped + returned
    if n == 0:
        raise DegenerateSampleError("every escape trial was excluded")
    f = escaped / n
    return EscapeEstimate(
        frequency=f,
        stderr=math.sqrt(f * (1.0 - f) / n),
        n=n,
        excluded=excluded,
        bound=pruned_energy_bound(pruned.lam).escape_bound,
    )


__all__ = [
    "CASE_SYNC",
    "CASE_OBSTACLE",
    "CASE_BACKBONE",
    "CASE_TRAP",
    "CASE_CATCH_UP",
    "ReinsertedPiece",
    "OriginDraw",
    "OriginCoin",
    "CoupledEnvironment",
    "CouplingKernel",
    "CouplingTrajectory",
    "MarginalCheck",
    "DominationReport",
    "TransferReport",
    "EscapeEstimate",
    "validate_lengths",
    "reinsert_traps",
    "coupled_from_environment",
    "sample_trap_lengths",
    "estimate_origin_coin",
    "cached_origin_coin",
    "build_coupled_environment",
    "feasibility_table",
    "coupled_step",
    "simulate_coupling",
    "extract_marginals",
    "exact_marginal_distributions",
    "check_visit_domination",
    "regeneration_transfer_check",
    "escape_frequency",
]
