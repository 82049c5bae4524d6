"""Cycle-stationary environments: cycle lengths, trap inventories and crossing probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List
import logging

import numpy as np
import pandas as pd

from ..core.rng import ReplicaStreams
from ..services.env import build_column_chain, crossing_probability, sample_environment, write_environment
from ..services.regen import lag_one_correlation
from ..services.traps import enumerate_traps, trap_inventory_frame
from .framework import ExperimentContext, ExperimentDefinition, ExperimentResult, experiment

logger = logging.getLogger(__name__)

NAME = "sample-env"


@dataclass(frozen=True)
class _Payload:
    seed: int
    p: float
    n_cycles: int
    left_cycles: int
    cycle_cap: int
    keep_env: int


def _sample_replica(payload: _Payload, replica: int) -> Dict[str, Any]:
    chain = build_column_chain(payload.p)
    streams = ReplicaStreams(payload.seed, NAME, replica)
    env = sample_environment(
        chain, streams.env, n_cycles=payload.n_cycles, left_cycles=payload.left_cycles, cap=payload.cycle_cap
    )
    traps = enumerate_traps(env, include_incomplete=True)
    inventory = trap_inventory_frame(traps)
    inventory.insert(0, "replica", replica)
    bounds = list(env.cycle_boundaries) + [env.x_hi + 1]
    cycles = pd.DataFrame(
        {
            "replica": replica,
            "cycle": np.arange(len(env.cycle_boundaries)),
            "x_start": env.cycle_boundaries,
            "length": np.diff(bounds),
        }
    )
    return {
        "cycles": cycles,
        "traps": inventory,
        "env": env if replica < payload.keep_env else None,
    }


@experiment(NAME)
class SampleEnvironmentExperiment(ExperimentDefinition):
    description = "sample cycle-stationary environments and tabulate cycles and traps"

    def run(self, ctx: ExperimentContext) -> ExperimentResult:
        cfg = ctx.config
        payload = _Payload(
            seed=cfg.seed,
            p=cfg.p,
            n_cycles=int(ctx.param("n_cycles", 200)),
            left_cycles=int(ctx.param("left_cycles", 1)),
            cycle_cap=ctx.lab.cycle_cap,
            keep_env=int(ctx.param("write_environments", 3)),
        )
        results = ctx.run_replicas(_sample_replica, payload)
        cycles = pd.concat([r["cycles"] for r in results], ignore_index=True)
        traps = pd.concat([r["traps"] for r in results], ignore_index=True)
        ctx.writer.write_csv("cycles.csv", cycles)
        ctx.writer.write_csv("traps.csv", traps)
        for replica, result in enumerate(results):
            if result["env"] is not None:
                name = f"environments/env_{replica:04d}.txt"
                write_environment(result["env"], ctx.writer.path(name))
                ctx.writer.register(name)

        chain = build_column_chain(cfg.p)
        max_n = int(ctx.param("crossing_max_n", 12))
        probs = [crossing_probability(chain, n) for n in range(1, max_n + 1)]
        crossing = pd.DataFrame({"n": np.arange(1, max_n + 1), "probability": probs})
        crossing["ratio"] = crossing["probability"] / crossing["probability"].shift(1)
        ctx.writer.write_csv("crossing.csv", crossing)

        lengths = cycles["length"].to_numpy(dtype=float)
        summary: Dict[str, Any] = {
            "p": cfg.p,
            "perron_root": chain.perron_root,
            "h": list(chain.h),
            "cycles": int(len(cycles)),
            "mean_cycle_length": float(lengths.mean()),
            "complete_traps": int(traps["complete"].sum()),
            "censored_traps": int((~traps["complete"].astype(bool)).sum()),
        }
        if lengths.size >= 3:
            r, se = lag_one_correlation(lengths)
            summary["cycle_length_lag1"] = {"r": r, "se": se}
        complete: List[int] = traps.loc[traps["complete"].astype(bool), "length"].tolist()
        if complete:
            summary["mean_trap_length"] = float(np.mean(complete))
        return ExperimentResult(summary=summary)
