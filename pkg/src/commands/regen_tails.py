"""Regeneration increments under the circ-conditioned law and their tail indices.

Optional passes draw the first increment τ₁ under window-rejection P and a
second circ-conditioned sample certified with margin 2Δ; both are fitted the
same way as the main sample and compared with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Tuple
import logging
import math

import numpy as np
import pandas as pd

from ..core.errors import DomainError
from ..core.rng import ReplicaStreams
from ..services.analytic import bias_params
from ..services.env import build_column_chain
from ..services.regen import (
    IncrementSample,
    LawTag,
    exp_moment_profile,
    kappa_moment_profile,
    profile_drift,
    sample_first_increment,
    sample_regeneration_increment,
    tail_index_estimate,
)
from .framework import ExperimentContext, ExperimentDefinition, ExperimentResult, experiment

logger = logging.getLogger(__name__)

NAME = "regen-tails"


@dataclass(frozen=True)
class _Payload:
    seed: int
    p: float
    lam: float
    per_replica: int
    delta: int
    budget: int
    step_cap: int
    doubled_per_replica: int = 0
    first_per_replica: int = 0
    first_half_width: int = 6


def _row(replica: int, draw: int, inc: IncrementSample, tag: LawTag, delta: int) -> Dict[str, Any]:
    return {
        "replica": replica,
        "draw": draw,
        "tau_inc": inc.tau,
        "rho_inc": inc.rho,
        "law_tag": tag.value,
        "delta": delta,
        "censored": inc.censored,
        "attempts": inc.attempts,
    }


def _increment_replica(payload: _Payload, replica: int) -> List[Dict[str, Any]]:
    streams = ReplicaStreams(payload.seed, NAME, replica)
    chain = build_column_chain(payload.p)
    rows = []
    circ_rng = streams.walk
    for i in range(payload.per_replica):
        inc = sample_regeneration_increment(
            payload.p, payload.lam, circ_rng, delta=payload.delta, budget=payload.budget, step_cap=payload.step_cap, chain=chain
        )
        rows.append(_row(replica, i, inc, LawTag.CIRC, payload.delta))
    doubled = 2 * payload.delta
    doubled_rng = streams.aux
    for i in range(payload.doubled_per_replica):
        inc = sample_regeneration_increment(
            payload.p, payload.lam, doubled_rng, delta=doubled, budget=payload.budget, step_cap=payload.step_cap, chain=chain
        )
        rows.append(_row(replica, i, inc, LawTag.CIRC, doubled))
    first_rng = streams.env
    for i in range(payload.first_per_replica):
        inc = sample_first_increment(
            payload.p,
            payload.lam,
            first_rng,
            N=payload.first_half_width,
            delta=payload.delta,
            budget=payload.budget,
            step_cap=payload.step_cap,
            chain=chain,
        )
        rows.append(_row(replica, i, inc, LawTag.FIRST, payload.delta))
    return rows


def _band_for_range(values: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
    """Quantile band covering the value range [lo, hi] of the sample."""
    xs = np.sort(values)
    q_lo = np.searchsorted(xs, lo, side="left") / xs.size
    q_hi = np.searchsorted(xs, hi, side="right") / xs.size
    return float(q_lo), float(min(q_hi, 1.0))


def _fit_tails(
    tau: np.ndarray, value_range: Tuple[float, float], rng: np.random.Generator, min_samples: int, label: str
) -> Dict[str, Any]:
    """Log-log and Hill fits of one sample; empty when it is too small."""
    fits: Dict[str, Any] = {}
    if tau.size < min_samples:
        logger.warning("only %d uncensored %s increments; tail fits need %d", tau.size, label, min_samples)
        return fits
    lo, hi = value_range
    try:
        fits["loglog_regression"] = tail_index_estimate(
            tau, method="loglog_regression", band=_band_for_range(tau, lo, hi), rng=rng, min_samples=min_samples
        ).as_dict()
        fits["loglog_regression"]["value_range"] = [lo, hi]
    except DomainError as e:
        logger.warning("%s log-log fit over [%g, %g] skipped: %s", label, lo, hi, e)
    try:
        fits["hill"] = tail_index_estimate(tau, method="hill", rng=rng, min_samples=min_samples).as_dict()
    except DomainError as e:
        logger.warning("%s Hill estimate skipped: %s", label, e)
    return fits


def _uncensored_tau(frame: pd.DataFrame, tag: LawTag, delta: int) -> np.ndarray:
    mask = (frame["law_tag"] == tag.value) & (frame["delta"] == delta) & ~frame["censored"].astype(bool)
    return frame.loc[mask, "tau_inc"].to_numpy(dtype=np.float64)


def _hill_interval(fits: Dict[str, Any]) -> List[float]:
    return [fits["hill"]["ci_low"], fits["hill"]["ci_high"]]


@experiment(NAME)
class RegenerationTailsExperiment(ExperimentDefinition):
    description = "τ/ρ increments, log-log and Hill tail indices, moment profiles"

    def run(self, ctx: ExperimentContext) -> ExperimentResult:
        cfg = ctx.config
        lam = ctx.lam
        bp = bias_params(cfg.p, lam)
        if not bp.above_lambda_star:
            logger.warning("lambda=%.6g is at or below log(2)/2; increment tails are outside the proven regime", lam)
        per_replica = int(ctx.param("increments_per_replica", 100))
        payload = _Payload(
            seed=cfg.seed,
            p=cfg.p,
            lam=lam,
            per_replica=per_replica,
            delta=ctx.lab.certificate_delta,
            budget=ctx.lab.rejection_budget,
            step_cap=ctx.lab.walk_step_cap,
            doubled_per_replica=per_replica if ctx.param("double_delta", False) else 0,
            first_per_replica=int(ctx.param("first_increments_per_replica", 0)),
            first_half_width=int(ctx.param("first_half_width", 6)),
        )
        rows = [row for batch in ctx.run_replicas(_increment_replica, payload) for row in batch]
        frame = pd.DataFrame(rows)
        ctx.writer.write_csv("increments.csv", frame)

        main = frame[(frame["law_tag"] == LawTag.CIRC.value) & (frame["delta"] == payload.delta)]
        attempts = main["attempts"].to_numpy(dtype=np.float64)
        acceptance = len(main) / attempts.sum()
        summary: Dict[str, Any] = {
            "p": cfg.p,
            "lambda": lam,
            "alpha": bp.alpha,
            "delta": payload.delta,
            "increments": int(len(main)),
            "censored": int(main["censored"].sum()),
            "acceptance_rate": acceptance,
            "acceptance_se": math.sqrt(acceptance * (1 - acceptance) / attempts.sum()),
            "p_esc": bp.p_esc,
        }

        uncensored = main[~main["censored"].astype(bool)]
        tau = uncensored["tau_inc"].to_numpy(dtype=np.float64)
        rho = uncensored["rho_inc"].to_numpy(dtype=np.float64)
        boot_rng = ctx.streams(cfg.replicas).aux
        min_samples = int(ctx.param("min_samples", 1000))
        value_range = tuple(float(v) for v in ctx.param("tail_range", [100, 10_000]))
        report: Dict[str, Any] = _fit_tails(tau, value_range, boot_rng, min_samples, "circ-conditioned")
        report["target_alpha"] = bp.alpha

        if payload.first_per_replica:
            first = _uncensored_tau(frame, LawTag.FIRST, payload.delta)
            first_rows = frame[frame["law_tag"] == LawTag.FIRST.value]
            report["first_increment"] = _fit_tails(first, value_range, boot_rng, min_samples, "first")
            summary["first_increment"] = {
                "increments": int(len(first_rows)),
                "censored": int(first_rows["censored"].sum()),
                "half_width": payload.first_half_width,
                "windows_per_increment": float(first_rows["attempts"].mean()),
            }
            if "hill" in report and "hill" in report["first_increment"]:
                first_hill = report["first_increment"]["hill"]
                # τ₁ may be heavier than τ₂ - τ₁ but never significantly lighter
                summary["first_vs_generic"] = {
                    "method": "hill",
                    "first_alpha": first_hill["alpha"],
                    "first_ci": _hill_interval(report["first_increment"]),
                    "generic_alpha": report["hill"]["alpha"],
                    "generic_ci": _hill_interval(report),
                    "first_not_lighter": bool(first_hill["ci_low"] <= report["hill"]["ci_high"]),
                }

        if payload.doubled_per_replica:
            doubled = 2 * payload.delta
            report["doubled_delta"] = _fit_tails(
                _uncensored_tau(frame, LawTag.CIRC, doubled), value_range, boot_rng, min_samples, "2Δ"
            )
            report["doubled_delta"]["delta"] = doubled
            if "hill" in report and "hill" in report["doubled_delta"]:
                base, other = report["hill"], report["doubled_delta"]["hill"]
                summary["censoring_check"] = {
                    "method": "hill",
                    "delta": payload.delta,
                    "alpha": base["alpha"],
                    "ci": _hill_interval(report),
                    "delta_doubled": doubled,
                    "alpha_doubled": other["alpha"],
                    "ci_doubled": _hill_interval(report["doubled_delta"]),
                    "within_ci": bool(base["ci_low"] <= other["ci_high"] and other["ci_low"] <= base["ci_high"]),
                }
        ctx.writer.write_json("tail_report.json", report)

        if tau.size:
            profiles = pd.concat(
                [
                    kappa_moment_profile(tau, bp.alpha / 2.0).assign(statistic="tau_kappa_half_alpha"),
                    kappa_moment_profile(tau, 2.0 * bp.alpha).assign(statistic="tau_kappa_two_alpha"),
                    exp_moment_profile(rho, float(ctx.param("rho_delta", 0.05))).rename(columns={"delta": "kappa"}).assign(statistic="rho_exp"),
                ],
                ignore_index=True,
            )
            ctx.writer.write_csv("moment_profiles.csv", profiles[["statistic", "size", "kappa", "moment"]])
            summary["profile_drift"] = {
                name: profile_drift(group) for name, group in profiles.groupby("statistic", sort=True)
            }
        summary["tail"] = report
        return ExperimentResult(summary=summary)
