"""Coupling audit: feasible region, exact window marginals and sampled visit domination."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional
import logging

import pandas as pd

from ..core.errors import DegenerateSampleError, InvalidCouplingParameters
from ..core.rng import ReplicaStreams
from ..services.coupling import (
    OriginCoin,
    build_coupled_environment,
    cached_origin_coin,
    check_visit_domination,
    coupled_from_environment,
    escape_frequency,
    estimate_origin_coin,
    exact_marginal_distributions,
    feasibility_table,
    regeneration_transfer_check,
    simulate_coupling,
)
from ..services.handcrafted import ORACLE_WINDOWS, oracle_window
from .framework import ExperimentContext, ExperimentDefinition, ExperimentResult, experiment

logger = logging.getLogger(__name__)

NAME = "coupling-check"

TV_TOLERANCE = 1e-12
CASE_NAMES = {1: "sync", 2: "obstacle", 3: "backbone", 4: "trap", 5: "catch_up"}


@dataclass(frozen=True)
class _Payload:
    seed: int
    p: float
    lam: float
    extent: int
    horizon: int
    law: str
    delta: int
    escape_trials: int
    escape_distance: int
    origin_coin: Optional[OriginCoin] = None


def _coupling_replica(payload: _Payload, replica: int) -> Dict[str, Any]:
    streams = ReplicaStreams(payload.seed, NAME, replica)
    try:
        cenv = build_coupled_environment(
            payload.p,
            payload.lam,
            streams.env,
            extent=payload.extent,
            law=payload.law,
            origin_coin=payload.origin_coin,
        )
    except InvalidCouplingParameters as e:
        return {"replica": replica, "feasible": False, "error": str(e)}
    traj = simulate_coupling(cenv, streams.walk, payload.horizon)
    domination = check_visit_domination(traj, cenv)
    transfer = regeneration_transfer_check(traj, cenv, delta=payload.delta)
    out: Dict[str, Any] = {
        "replica": replica,
        "feasible": True,
        "pieces": len(cenv.pieces),
        "cases": {CASE_NAMES[c]: n for c, n in traj.case_counts().items()},
        "domination": domination.as_dict(),
        "transfer": {
            "checked": transfer.checked,
            "pending": transfer.pending,
            "violations": transfer.violations,
        },
    }
    if payload.escape_trials:
        try:
            est = escape_frequency(
                cenv.pruned, streams.aux, trials=payload.escape_trials, distance=payload.escape_distance
            )
            out["escape"] = {
                "frequency": est.frequency,
                "stderr": est.stderr,
                "n": est.n,
                "excluded": est.excluded,
                "bound": est.bound,
                "consistent": est.consistent,
            }
        except DegenerateSampleError as e:
            out["escape"] = {"error": str(e)}
    return out


@experiment(NAME)
class CouplingCheckExperiment(ExperimentDefinition):
    description = "feasibility table, exact marginal TVs and replica-wise visit domination"

    def _window_checks(self, ctx: ExperimentContext, violations: List[str]) -> pd.DataFrame:
        window_lam = float(ctx.param("window_lambda", 0.2))
        k = int(ctx.param("k", 8))
        rows = []
        for name in sorted(ORACLE_WINDOWS):
            # infeasible obstacle vectors propagate as InvalidCouplingParameters
            cenv = coupled_from_environment(oracle_window(name), window_lam)
            check = exact_marginal_distributions(cenv, start=(0, 0), k=k, cap=ctx.lab.exact_step_cap)
            rows.append({"window": name, "lambda": window_lam, "k": k, "tv_full": check.tv_full, "tv_pruned": check.tv_pruned})
            if max(check.tv_full, check.tv_pruned) > TV_TOLERANCE:
                violations.append(f"window {name}: tv_full={check.tv_full:.3g} tv_pruned={check.tv_pruned:.3g}")
        return pd.DataFrame(rows)

    def run(self, ctx: ExperimentContext) -> ExperimentResult:
        cfg = ctx.config
        lam = ctx.lam
        violations: List[str] = []

        lams = sorted({float(v) for v in ctx.param("feasibility_lambdas", [0.05, 0.1, 0.2, 0.3, 0.5])} | {lam})
        feasibility = feasibility_table(lams, max_length=int(ctx.param("max_length", 10)))
        ctx.writer.write_csv("feasibility.csv", feasibility)

        windows = self._window_checks(ctx, violations)
        ctx.writer.write_csv("coupling_windows.csv", windows)

        law = str(ctx.param("law", "cycle_stationary"))
        coin = None
        if law == "window_rejection":
            coin_rng = ctx.streams(cfg.replicas).aux
            samples, half_width = ctx.lab.origin_coin_samples, ctx.lab.origin_coin_half_width
            if ctx.storage is not None:
                coin = cached_origin_coin(ctx.storage, cfg.p, coin_rng, samples, N=half_width)
            else:
                coin = estimate_origin_coin(cfg.p, coin_rng, samples, N=half_width)
        payload = _Payload(
            seed=cfg.seed,
            p=cfg.p,
            lam=lam,
            extent=int(ctx.param("extent", 400)),
            horizon=max(cfg.horizons) if cfg.horizons else 100_000,
            law=law,
            delta=int(ctx.param("delta", 20)),
            escape_trials=int(ctx.param("escape_trials", 0)),
            escape_distance=int(ctx.param("escape_distance", 200)),
            origin_coin=coin,
        )
        replicas = ctx.run_replicas(_coupling_replica, payload)

        feasible = [r for r in replicas if r["feasible"]]
        for r in feasible:
            if not r["domination"]["ok"]:
                violations.append(f"replica {r['replica']}: visit domination failed")
            if r["transfer"]["violations"]:
                violations.append(f"replica {r['replica']}: regeneration transfer failed")
        if len(feasible) < len(replicas):
            logger.warning("%d of %d replicas drew an infeasible obstacle vector", len(replicas) - len(feasible), len(replicas))

        audit = {
            "p": cfg.p,
            "lambda": lam,
            "law": law,
            "extent": payload.extent,
            "horizon": payload.horizon,
            "origin_coin": None if coin is None else {"heads_probability": coin.heads_probability, "stderr": coin.stderr},
            "windows": windows.to_dict(orient="records"),
            "replicas": replicas,
        }
        ctx.writer.write_json("coupling_audit.json", audit)

        case_totals: Dict[str, int] = {}
        for r in feasible:
            for case, n in r["cases"].items():
                case_totals[case] = case_totals.get(case, 0) + n
        return ExperimentResult(
            summary={
                "p": cfg.p,
                "lambda": lam,
                "max_window_tv": float(windows[["tv_full", "tv_pruned"]].to_numpy().max()),
                "feasible_replicas": len(feasible),
                "infeasible_replicas": len(replicas) - len(feasible),
                "domination_checked": sum(r["domination"]["checked"] for r in feasible),
                "case_totals": case_totals,
            },
            violations=violations,
        )
