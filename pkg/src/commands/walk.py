"""Quenched walks on cycle-stationary environments: trajectory summaries and speed estimates."""

from __future__ import annotations

from typing import Any, Dict, List
import logging

import numpy as np
import pandas as pd

from ..core.errors import ConfigError
from ..services.analytic import bias_params
from ..services.regen import ratio_speed
from ..services.reporting import bootstrap_mean_ci, trajectory_summary_frame
from ._walks import WalkPayload, walk_replica
from .framework import ExperimentContext, ExperimentDefinition, ExperimentResult, experiment

logger = logging.getLogger(__name__)

NAME = "walk"


@experiment(NAME)
class WalkExperiment(ExperimentDefinition):
    description = "trajectory summaries and v̂ per horizon with 99% bootstrap intervals"

    def run(self, ctx: ExperimentContext) -> ExperimentResult:
        cfg = ctx.config
        if not cfg.horizons:
            raise ConfigError("walk needs at least one horizon")
        lam = ctx.lam
        payload = WalkPayload(
            experiment=NAME,
            seed=cfg.seed,
            p=cfg.p,
            lam=lam,
            horizons=tuple(cfg.horizons),
            cycle_cap=ctx.lab.cycle_cap,
            regenerations=bool(ctx.param("speed_identity", False)),
            delta=ctx.lab.certificate_delta,
        )
        results = ctx.run_replicas(walk_replica, payload)
        rows: List[Dict[str, Any]] = [row for r in results for row in r["rows"]]
        frame = trajectory_summary_frame(rows)
        ctx.writer.write_csv("trajectories.csv", frame)

        boot_rng = ctx.streams(cfg.replicas).aux
        speed_rows = []
        for n, group in frame.groupby("n", sort=True):
            v = group["X_n"].to_numpy(dtype=np.float64) / float(n)
            lo, hi = bootstrap_mean_ci(v, boot_rng, confidence=0.99)
            speed_rows.append(
                {
                    "n": int(n),
                    "v_hat": float(v.mean()),
                    "se": float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan"),
                    "ci_lo": lo,
                    "ci_hi": hi,
                    "trap_fraction": float(group["time_in_traps"].sum() / (float(n) * len(group))),
                }
            )
        speeds = pd.DataFrame(speed_rows)
        ctx.writer.write_csv("speed.csv", speeds)

        bp = bias_params(cfg.p, lam)
        summary: Dict[str, Any] = {
            "p": cfg.p,
            "lambda": lam,
            "alpha": bp.alpha,
            "speed": speed_rows,
            "ci_excludes_zero_at_max_n": bool(speeds["ci_lo"].iloc[-1] > 0),
        }
        if payload.regenerations:
            inc = pd.concat([r["increments"] for r in results], ignore_index=True)
            ctx.writer.write_csv("walk_increments.csv", inc)
            generic = inc[(inc["k"] >= 2) & ~inc["censored"].astype(bool)]
            if len(generic) >= 2:
                ratio, se_ratio = ratio_speed(generic["tau_inc"], generic["rho_inc"])
                direct = speed_rows[-1]
                combined = float(np.hypot(se_ratio, direct["se"]))
                summary["speed_identity"] = {
                    "ratio_speed": ratio,
                    "ratio_se": se_ratio,
                    "direct_speed": direct["v_hat"],
                    "direct_se": direct["se"],
                    "increments": int(len(generic)),
                    "z": (direct["v_hat"] - ratio) / combined if combined > 0 else 0.0,
                }
        return ExperimentResult(summary=summary)
