"""Fluctuation scaling of X_n in the three noncritical regimes, picked by α = λ_c/λ."""

from __future__ import annotations

from typing import Callable, Optional
import logging
import math

import numpy as np
import pandas as pd

from ..core.errors import ConfigError
from ..services.analytic import bias_params
from ..services.reporting import trajectory_summary_frame
from ._walks import WalkPayload, iqr, spread, walk_replica
from .framework import ExperimentContext, ExperimentDefinition, ExperimentResult, experiment

logger = logging.getLogger(__name__)

NAME = "fluctuations"


def scaling_for(alpha: float, speed: float) -> tuple[str, Callable[[np.ndarray, int], np.ndarray]]:
    """Centering and norming of X_n for the regime of α."""
    if alpha < 1.0:
        return "X_n/n^alpha", lambda x, n: x / n**alpha
    if math.isclose(alpha, 1.0, rel_tol=1e-9):
        raise ConfigError("alpha = 1 is the critical regime; use critical-speed")
    if alpha >= 2.0 - 1e-12:
        return "(X_n-n*v)/sqrt(n log n)", lambda x, n: (x - n * speed) / math.sqrt(n * math.log(n))
    return "(X_n-n*v)/n^(1/alpha)", lambda x, n: (x - n * speed) / n ** (1.0 / alpha)


@experiment(NAME)
class FluctuationsExperiment(ExperimentDefinition):
    description = "IQR of rescaled fluctuations per horizon"

    def run(self, ctx: ExperimentContext) -> ExperimentResult:
        cfg = ctx.config
        if len(cfg.horizons) < 2:
            raise ConfigError("fluctuations needs at least two horizons")
        lam = ctx.lam
        alpha = bias_params(cfg.p, lam).alpha
        payload = WalkPayload(
            experiment=NAME,
            seed=cfg.seed,
            p=cfg.p,
            lam=lam,
            horizons=tuple(cfg.horizons),
            cycle_cap=ctx.lab.cycle_cap,
            track_traps=False,
        )
        frame = trajectory_summary_frame(row for r in ctx.run_replicas(walk_replica, payload) for row in r["rows"])
        ctx.writer.write_csv("trajectories.csv", frame)

        n_max = max(cfg.horizons)
        given: Optional[float] = ctx.param("speed")
        speed = float(given) if given is not None else float(frame.loc[frame["n"] == n_max, "X_n"].mean() / n_max)
        label, scale = scaling_for(alpha, speed)
        rows = []
        for n, group in frame.groupby("n", sort=True):
            z = scale(group["X_n"].to_numpy(dtype=np.float64), int(n))
            rows.append({"n": int(n), "statistic": label, "iqr": iqr(z), "median": float(np.median(z))})
        table = pd.DataFrame(rows)
        ctx.writer.write_csv("fluctuations.csv", table)
        return ExperimentResult(
            summary={
                "p": cfg.p,
                "lambda": lam,
                "alpha": alpha,
                "speed": speed,
                "speed_source": "config" if given is not None else "largest_horizon_mean",
                "statistic": label,
                "iqr_spread": spread(table["iqr"].tolist()),
            }
        )
