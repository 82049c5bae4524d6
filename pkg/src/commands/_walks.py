"""Replica task shared by the walk-based experiments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Tuple
import math

import numpy as np

from ..core.rng import ReplicaStreams
from ..services.env import EnvironmentExtender, build_column_chain, sample_environment
from ..services.regen import LawTag, detect_regenerations
from ..services.walk import QuenchedWalker, StopRule


@dataclass(frozen=True)
class WalkPayload:
    experiment: str
    seed: int
    p: float
    lam: float
    horizons: Tuple[int, ...]
    initial_cycles: int = 32
    cycle_cap: int = 1_000_000
    track_traps: bool = True
    regenerations: bool = False
    delta: int = 200


def walk_replica(payload: WalkPayload, replica: int) -> Dict[str, Any]:
    """Walk one replica through every horizon; rows follow the trajectory summary schema."""
    streams = ReplicaStreams(payload.seed, payload.experiment, replica)
    chain = build_column_chain(payload.p)
    env_rng = streams.env
    env = sample_environment(chain, env_rng, n_cycles=payload.initial_cycles, left_cycles=1, cap=payload.cycle_cap)
    extender = EnvironmentExtender(env, chain, env_rng, cap=payload.cycle_cap)
    walker = QuenchedWalker(
        env,
        payload.lam,
        streams.walk,
        extender=extender,
        track_traps=payload.track_traps,
        record=payload.regenerations,
    )
    rows: List[Dict[str, Any]] = []
    traj = None
    for n in sorted(payload.horizons):
        traj = walker.run(StopRule(horizon=n))
        state = traj.state
        rows.append(
            {
                "replica": replica,
                "n": n,
                "X_n": state.position[0],
                "min_x": state.min_x,
                "time_in_traps": traj.time_in_traps if payload.track_traps else -1,
                "horizon_reason": traj.reason,
            }
        )
    out: Dict[str, Any] = {"rows": rows}
    if payload.regenerations and traj is not None:
        record = detect_regenerations(traj, env, payload.delta, law_tag=LawTag.FIRST_STATIONARY)
        frame = record.increments()
        frame.insert(0, "replica", replica)
        out["increments"] = frame
    return out


def iqr(values: np.ndarray) -> float:
    q1, q3 = np.quantile(np.asarray(values, dtype=np.float64), [0.25, 0.75])
    return float(q3 - q1)


def spread(values: List[float]) -> float:
    """max/min of a positive profile."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.max() / arr.min()) if arr.size and arr.min() > 0 else math.inf


__all__ = ["WalkPayload", "walk_replica", "iqr", "spread"]
