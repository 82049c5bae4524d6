"""Trap-length law, Doob-vs-rejection cross-validation and gambler's-ruin excursion checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple
import logging
import math

import numpy as np
import pandas as pd
from scipy import stats

from ..core.errors import ConfigError
from ..core.rng import ReplicaStreams
from ..services.analytic import critical_bias, ruin_quantities, size_biased_trap_length_mean, trap_length_mean, trap_length_pmf
from ..services.env import build_column_chain, sample_environment, sample_window_rejection
from ..services.traps import TrapPiece, enumerate_traps, origin_trap_length
from ..services.walk import simulate_trap_excursions
from .framework import ExperimentContext, ExperimentDefinition, ExperimentResult, experiment

logger = logging.getLogger(__name__)

NAME = "trap-law"


@dataclass(frozen=True)
class _Payload:
    seed: int
    p: float
    traps_per_replica: int
    cross_per_replica: int
    half_widths: Tuple[int, ...]
    rejection_budget: int
    cycle_cap: int


def _first_trap_length(traps: List[TrapPiece], x_from: int = 0) -> Optional[int]:
    for trap in traps:
        if trap.entrance_x >= x_from:
            return trap.length
    return None


def _trap_replica(payload: _Payload, replica: int) -> Dict[str, Any]:
    streams = ReplicaStreams(payload.seed, NAME, replica)
    chain = build_column_chain(payload.p)
    env_rng, aux_rng = streams.env, streams.aux
    lengths: List[int] = []
    while len(lengths) < payload.traps_per_replica:
        env = sample_environment(chain, env_rng, n_cycles=64, left_cycles=0, cap=payload.cycle_cap)
        lengths.extend(t.length for t in enumerate_traps(env) if t.entrance_x >= 0)
    widest = max(payload.half_widths) if payload.half_widths else 0
    doob: List[int] = []
    while len(doob) < payload.cross_per_replica:
        env = sample_environment(chain, env_rng, x_extent=widest, left_cycles=1, cap=payload.cycle_cap)
        m = _first_trap_length(enumerate_traps(env))
        if m is not None:
            doob.append(m)
    window: Dict[int, List[int]] = {}
    origin: List[int] = []
    for N in payload.half_widths:
        firsts: List[int] = []
        while len(firsts) < payload.cross_per_replica:
            env = sample_window_rejection(payload.p, N, aux_rng, budget=payload.rejection_budget)
            traps = enumerate_traps(env)
            m = _first_trap_length(traps)
            if m is not None:
                firsts.append(m)
            if N == widest:
                covering = origin_trap_length(env, traps=traps)
                if covering is not None:
                    origin.append(covering)
        window[N] = firsts
    return {"lengths": lengths[: payload.traps_per_replica], "doob": doob, "window": window, "origin": origin}


def _histogram(values: np.ndarray, top: int) -> np.ndarray:
    """Counts for 1..top-1 and a final bin for >= top."""
    clipped = np.minimum(values, top)
    return np.bincount(clipped, minlength=top + 1)[1:]


def _frequencies(values: np.ndarray, support: int) -> np.ndarray:
    return np.bincount(values, minlength=support + 1)[1:] / values.size


@experiment(NAME)
class TrapLawExperiment(ExperimentDefinition):
    description = "trap-length χ², first-trap sampler cross-validation and ruin excursions"

    def run(self, ctx: ExperimentContext) -> ExperimentResult:
        cfg = ctx.config
        n_traps = int(ctx.param("n_traps", 100_000))
        n_cross = int(ctx.param("cross_samples", 0))
        half_widths = tuple(sorted({int(n) for n in ctx.param("half_widths", [2, 4, 6])}))
        if n_cross and (not half_widths or half_widths[0] < 2):
            raise ConfigError(f"half_widths must be integers >= 2, got {list(half_widths)}")
        replicas = cfg.replicas
        payload = _Payload(
            seed=cfg.seed,
            p=cfg.p,
            traps_per_replica=math.ceil(n_traps / replicas),
            cross_per_replica=math.ceil(n_cross / replicas) if n_cross else 0,
            half_widths=half_widths if n_cross else (),
            rejection_budget=ctx.lab.rejection_budget,
            cycle_cap=ctx.lab.cycle_cap,
        )
        results = ctx.run_replicas(_trap_replica, payload)
        summary: Dict[str, Any] = {"p": cfg.p, "lambda_c": critical_bias(cfg.p)}

        lengths = np.concatenate([np.asarray(r["lengths"], dtype=np.int64) for r in results])[:n_traps]
        top = int(ctx.param("chi2_bins", 7))
        observed = _histogram(lengths, top)
        pmf = np.array([trap_length_pmf(m, cfg.p) for m in range(1, top)])
        expected = np.append(pmf, 1.0 - pmf.sum()) * lengths.size
        chi2 = stats.chisquare(observed, expected)
        ctx.writer.write_csv(
            "trap_lengths.csv",
            pd.DataFrame({"m": np.arange(1, top + 1), "observed": observed, "expected": expected}),
        )
        summary["chi2"] = {"statistic": float(chi2.statistic), "pvalue": float(chi2.pvalue), "n": int(lengths.size), "last_bin": f">={top}"}
        summary["mean_length"] = float(lengths.mean())

        if n_cross:
            summary.update(self._cross_validation(ctx, results, half_widths, n_cross))

        excursions = int(ctx.param("excursions", 0))
        if excursions:
            lams = [float(x) for x in ctx.param("ruin_lambdas", [0.5, critical_bias(0.5)])]
            rng = ctx.streams(replicas).aux
            rows = []
            for lam in lams:
                for m in range(1, int(ctx.param("max_length", 8)) + 1):
                    rows.extend(_ruin_rows(m, lam, simulate_trap_excursions(m, lam, rng, excursions)))
            ruin = pd.DataFrame(rows)
            ctx.writer.write_csv("ruin_excursions.csv", ruin)
            summary["ruin_max_abs_z"] = float(ruin["z"].abs().max())
        return ExperimentResult(summary=summary)

    def _cross_validation(
        self, ctx: ExperimentContext, results: List[Dict[str, Any]], half_widths: Tuple[int, ...], n_cross: int
    ) -> Dict[str, Any]:
        """First-trap TV per half-width and the length of the trap covering the origin."""
        p = ctx.config.p
        doob = np.concatenate([np.asarray(r["doob"], dtype=np.int64) for r in results])[:n_cross]
        windows = {
            N: np.concatenate([np.asarray(r["window"][N], dtype=np.int64) for r in results])[:n_cross] for N in half_widths
        }
        support = int(max(doob.max(), *(w.max() for w in windows.values())))
        f_doob = _frequencies(doob, support)
        frames = []
        tv: List[float] = []
        for N in half_widths:
            f_window = _frequencies(windows[N], support)
            tv.append(float(0.5 * np.abs(f_doob - f_window).sum()))
            frames.append(pd.DataFrame({"half_width": N, "m": np.arange(1, support + 1), "doob": f_doob, "window_rejection": f_window}))
            logger.debug("first-trap TV at N=%d: %.4f", N, tv[-1])
        ctx.writer.write_csv("first_trap_tv.csv", pd.concat(frames, ignore_index=True))
        out: Dict[str, Any] = {
            "first_trap_tv": tv[-1],
            "first_trap_half_width": half_widths[-1],
            "first_trap_tv_by_half_width": [{"half_width": N, "tv": t} for N, t in zip(half_widths, tv)],
        }
        if len(tv) > 1:
            out["first_trap_tv_shrinks"] = bool(tv[-1] < tv[0])

        origin = np.concatenate([np.asarray(r["origin"], dtype=np.float64) for r in results])
        generic = trap_length_mean(p)
        covering: Dict[str, Any] = {
            "half_width": half_widths[-1],
            "n": int(origin.size),
            "generic_mean": generic,
            "size_biased_mean": size_biased_trap_length_mean(p),
        }
        if origin.size >= 2:
            mean = float(origin.mean())
            covering.update(mean=mean, se=float(origin.std(ddof=1) / math.sqrt(origin.size)), exceeds_generic=bool(mean > generic))
        else:
            logger.warning("only %d windows had a complete trap over the origin", origin.size)
        out["origin_trap"] = covering
        return out


def _ruin_rows(m: int, lam: float, batch) -> List[Dict[str, Any]]:
    rq = ruin_quantities(m, lam)
    n = len(batch)
    rows = []
    hit = float(batch.reached_bottom.mean())
    se_hit = math.sqrt(max(rq.hit_bottom * (1 - rq.hit_bottom), 1e-300) / n)
    rows.append({"m": m, "lambda": lam, "quantity": "hit_bottom", "empirical": hit, "closed_form": rq.hit_bottom, "se": se_hit})
    returns = batch.bottom_returns[batch.reached_bottom]
    if returns.size:
        # one escape trial per bottom visit: visits are geometric with success e_m
        e_hat = returns.size / float((returns + 1).sum())
        se_e = math.sqrt(rq.e_m**2 * (1 - rq.e_m) / returns.size)
        rows.append({"m": m, "lambda": lam, "quantity": "e_m", "empirical": e_hat, "closed_form": rq.e_m, "se": se_e})
        mean = (1 - rq.e_m) / rq.e_m
        se_r = math.sqrt((1 - rq.e_m) / rq.e_m**2 / returns.size)
        rows.append({"m": m, "lambda": lam, "quantity": "bottom_returns_mean", "empirical": float(returns.mean()), "closed_form": mean, "se": se_r})
    for row in rows:
        row["z"] = (row["empirical"] - row["closed_form"]) / row["se"] if row["se"] > 0 else 0.0
    return rows
