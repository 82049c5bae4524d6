"""The n/log n displacement law at the critical bias."""

from __future__ import annotations

import logging
import math

import numpy as np
import pandas as pd

from ..core.errors import ConfigError
from ..services.reporting import trajectory_summary_frame
from ._walks import WalkPayload, walk_replica
from .framework import ExperimentContext, ExperimentDefinition, ExperimentResult, experiment

logger = logging.getLogger(__name__)

NAME = "critical-speed"


@experiment(NAME)
class CriticalSpeedExperiment(ExperimentDefinition):
    description = "medians of X_n·log n/n and X_n/n across horizons"

    def run(self, ctx: ExperimentContext) -> ExperimentResult:
        cfg = ctx.config
        if len(cfg.horizons) < 2:
            raise ConfigError("critical-speed needs at least two horizons")
        payload = WalkPayload(
            experiment=NAME,
            seed=cfg.seed,
            p=cfg.p,
            lam=ctx.lam,
            horizons=tuple(cfg.horizons),
            cycle_cap=ctx.lab.cycle_cap,
        )
        frame = trajectory_summary_frame(row for r in ctx.run_replicas(walk_replica, payload) for row in r["rows"])
        ctx.writer.write_csv("trajectories.csv", frame)

        rows = []
        for n, group in frame.groupby("n", sort=True):
            x = group["X_n"].to_numpy(dtype=np.float64)
            rows.append(
                {
                    "n": int(n),
                    "median_log_scaled": float(np.median(x * math.log(n) / n)),
                    "median_linear": float(np.median(x / n)),
                    "replicas": int(x.size),
                }
            )
        table = pd.DataFrame(rows)
        table["ratio_log_scaled"] = table["median_log_scaled"] / table["median_log_scaled"].shift(1)
        table["ratio_linear_drop"] = table["median_linear"].shift(1) / table["median_linear"]
        ctx.writer.write_csv("critical_speed.csv", table)

        ratios = table["ratio_log_scaled"].dropna()
        drops = table["ratio_linear_drop"].dropna()
        return ExperimentResult(
            summary={
                "p": cfg.p,
                "lambda": ctx.lam,
                "log_scaled_ratios": ratios.tolist(),
                "linear_drops": drops.tolist(),
                "log_scaled_within_band": bool(((ratios >= 0.6) & (ratios <= 1.5)).all()),
                "linear_drop_at_least_1_8": bool((drops >= 1.8).all()),
            }
        )
