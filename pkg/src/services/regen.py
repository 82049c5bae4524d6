"""Regeneration detection, increment sampling, tail-index estimates and renewal counts.

A pre-regeneration level b has an isolated top vertex, so the walk can only
cross it through (b, 0). A level counts as a regeneration when the walk's x
coordinate takes the value b exactly once; a lazy stay there disqualifies it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd
from scipy import stats

from ..core.errors import DegenerateSampleError, DomainError, MarginError, RejectionBudgetError
from .env import (
    ColumnChain,
    Environment,
    EnvironmentExtender,
    Provenance,
    build_column_chain,
    find_pre_regeneration_points,
    sample_environment,
    sample_window_rejection,
    splice_window,
)
from .walk import QuenchedWalker, StopRule, Trajectory

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 200


class LawTag(str, Enum):
    FIRST = "first_increment_under_P"
    FIRST_STATIONARY = "first_increment_cycle_stationary"
    GENERIC = "generic_increment"
    CIRC = "circ_conditioned"


@dataclass(frozen=True)
class RegenerationRecord:
    """Regeneration levels ρ_k and times τ_k found on one trajectory."""
    rho: np.ndarray
    tau: np.ndarray
    censored: np.ndarray
    law_tag: LawTag = LawTag.FIRST

    def __len__(self) -> int:
        return len(self.rho)

    @property
    def certified(self) -> int:
        return int(np.count_nonzero(~self.censored))

    def increments(self) -> pd.DataFrame:
        """Rows (k, tau_inc, rho_inc, law_tag, censored).

        Row k = 1 is (τ₁, ρ₁) measured from the start; later rows are
        consecutive differences and carry the generic tag.
        """
        if len(self.rho) == 0:
            return pd.DataFrame(columns=["k", "tau_inc", "rho_inc", "law_tag", "censored"])
        tau_inc = np.diff(self.tau, prepend=0)
        rho_inc = np.diff(self.rho, prepend=0)
        tags = [self.law_tag.value] + [LawTag.GENERIC.value] * (len(self.rho) - 1)
        return pd.DataFrame(
            {
                "k": np.arange(1, len(self.rho) + 1),
                "tau_inc": tau_inc,
                "rho_inc": rho_inc,
                "law_tag": tags,
                "censored": self.censored,
            }
        )


def regeneration_points(
    x_path: np.ndarray, levels: Sequence[int], delta: float = DEFAULT_DELTA, start_x: Optional[int] = None
) -> RegenerationRecord:
    """Levels in ``levels`` crossed exactly once by ``x_path``, with their crossing times.

    ``x_path[t]`` is X_t. Only levels strictly right of the start count. An
    entry is certified when the final position is at least ρ + ``delta``;
    uncertified entries are kept and flagged as censored.
    """
    path = np.asarray(x_path, dtype=np.int64)
    if path.size == 0:
        raise DomainError("empty path")
    start = int(path[0]) if start_x is None else int(start_x)
    running_max = np.maximum.accumulate(path)
    # suffix_min[t] = min(X_t, ..., X_n); padded so suffix_min[n+1] = +inf
    suffix_min = np.empty(path.size + 1, dtype=np.float64)
    suffix_min[:-1] = np.minimum.accumulate(path[::-1])[::-1]
    suffix_min[-1] = np.inf

    candidates = np.asarray([b for b in levels if start < b <= running_max[-1]], dtype=np.int64)
    if candidates.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return RegenerationRecord(rho=empty, tau=empty.copy(), censored=np.zeros(0, dtype=bool))
    hit = np.searchsorted(running_max, candidates, side="left")
    once = suffix_min[hit + 1] > candidates
    once &= hit < path.size - 1
    rho = candidates[once]
    tau = hit[once].astype(np.int64)
    censored = path[-1] < rho + delta if math.isfinite(delta) else np.ones(rho.size, dtype=bool)
    return RegenerationRecord(rho=rho, tau=tau, censored=np.asarray(censored, dtype=bool))


def first_increment_tag(env: Environment) -> LawTag:
    """Law of (τ₁, ρ₁) for a walk started at the origin of ``env``.

    Only window-rejection environments carry the annealed law P; a walk on a
    cycle-stationary (or handcrafted) environment starts at a pre-regeneration
    level and its first increment is not a P sample.
    """
    if env.provenance is Provenance.WINDOW_REJECTION:
        return LawTag.FIRST
    return LawTag.FIRST_STATIONARY


def detect_regenerations(
    traj: Trajectory, env: Environment, delta: float = DEFAULT_DELTA, law_tag: Optional[LawTag] = None
) -> RegenerationRecord:
    """Regeneration record of a recorded trajectory on ``env``.

    The first row is tagged by ``law_tag``, or from the environment's
    provenance when it is omitted.
    """
    if traj.path_x is None:
        raise DomainError("regeneration detection needs a recorded trajectory")
    record = regeneration_points(traj.path_x, find_pre_regeneration_points(env), delta)
    tag = first_increment_tag(env) if law_tag is None else law_tag
    return RegenerationRecord(rho=record.rho, tau=record.tau, censored=record.censored, law_tag=tag)


@dataclass(frozen=True)
class IncrementSample:
    tau: int
    rho: int
    attempts: int  # walks (or windows) tried, including the accepted one
    censored: bool = False

    def as_tuple(self) -> Tuple[int, int]:
        return (self.tau, self.rho)


def sample_regeneration_increment(
    p: float,
    lam: float,
    rng: np.random.Generator,
    delta: float = DEFAULT_DELTA,
    budget: int = 100_000,
    step_cap: int = 10_000_000,
    chain: Optional[ColumnChain] = None,
    first_chunk: int = 1024,
) -> IncrementSample:
    """First regeneration (τ₁, ρ₁) under P° conditioned on never returning to the origin.

    Each attempt draws a fresh cycle-stationary environment and walks from
    (0, 0) in doubling chunks. A return to (0, 0) rejects the attempt. When the
    step cap is hit before a certified regeneration, the first uncertified
    candidate (or the current position) is returned flagged as censored.

    Raises:
        RejectionBudgetError: After ``budget`` rejected attempts.
    """
    if lam <= 0:
        raise DomainError(f"bias must be positive, got {lam}")
    chain = build_column_chain(p) if chain is None else chain
    for attempt in range(1, budget + 1):
        env = sample_environment(chain, rng, n_cycles=8)
        extender = EnvironmentExtender(env, chain, rng)
        walker = QuenchedWalker(env, lam, rng, extender=extender, record=True)
        horizon = first_chunk
        while True:
            traj = walker.run(StopRule(horizon=min(horizon, step_cap), stop_on_return=True))
            if traj.reason == "returned":
                break
            record = detect_regenerations(traj, env, delta, law_tag=LawTag.CIRC)
            if record.certified:
                return IncrementSample(tau=int(record.tau[0]), rho=int(record.rho[0]), attempts=attempt)
            if walker.time >= step_cap:
                logger.warning("increment censored at %d steps (p=%s, lambda=%s)", step_cap, p, lam)
                if len(record):
                    return IncrementSample(int(record.tau[0]), int(record.rho[0]), attempt, censored=True)
                return IncrementSample(walker.time, walker.x, attempt, censored=True)
            horizon *= 2
    raise RejectionBudgetError(f"every one of {budget} attempts returned to the origin")


def sample_first_increment(
    p: float,
    lam: float,
    rng: np.random.Generator,
    N: int = 6,
    delta: float = DEFAULT_DELTA,
    budget: int = 100_000,
    step_cap: int = 10_000_000,
    chain: Optional[ColumnChain] = None,
    first_chunk: int = 1024,
) -> IncrementSample:
    """First regeneration (τ₁, ρ₁) of the walk from the origin under P.

    Each attempt draws a window-rejection sample on [-N, N], splices it into
    cycle-stationary surroundings and walks from (0, 0), or from (0, 1) when
    only the top vertex of the origin column is in the cluster. Nothing is
    conditioned on the walk. Windows without a pre-regeneration level on both
    sides of 0 are redrawn and count as attempts; ``budget`` also bounds the
    rejection sampler of each window.

    Raises:
        RejectionBudgetError: After ``budget`` windows that could not be spliced.
    """
    if lam <= 0:
        raise DomainError(f"bias must be positive, got {lam}")
    chain = build_column_chain(p) if chain is None else chain
    for attempt in range(1, budget + 1):
        window = sample_window_rejection(p, N, rng, budget=budget)
        try:
            env = splice_window(window, chain, rng)
        except MarginError:
            continue
        start = (0, 0) if env.in_cluster((0, 0)) else (0, 1)
        extender = EnvironmentExtender(env, chain, rng)
        walker = QuenchedWalker(env, lam, rng, start=start, extender=extender, record=True)
        horizon = first_chunk
        while True:
            traj = walker.run(StopRule(horizon=min(horizon, step_cap)))
            record = detect_regenerations(traj, env, delta)
            if record.certified:
                return IncrementSample(tau=int(record.tau[0]), rho=int(record.rho[0]), attempts=attempt)
            if walker.time >= step_cap:
                logger.warning("first increment censored at %d steps (p=%s, lambda=%s)", step_cap, p, lam)
                if len(record):
                    return IncrementSample(int(record.tau[0]), int(record.rho[0]), attempt, censored=True)
                return IncrementSample(walker.time, walker.x, attempt, censored=True)
            horizon *= 2
    raise RejectionBudgetError(f"none of {budget} windows had pre-regeneration levels on both sides of 0")


@dataclass(frozen=True)
class TailIndexEstimate:
    alpha: float
    ci_low: float
    ci_high: float
    method: str
    n: int
    k: Optional[int] = None
    band: Optional[Tuple[float, float]] = None
    light_tail_suspected: bool = False

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "method": self.method,
            "n": self.n,
            "k": self.k,
            "band": list(self.band) if self.band is not None else None,
            "light_tail_suspected": self.light_tail_suspected,
        }


LIGHT_TAIL_ALPHA = 5.0


def _hill(values: np.ndarray, k: int) -> float:
    top = np.partition(values, values.size - k - 1)[values.size - k - 1 :]
    threshold = top.min()
    logs = np.log(top / threshold)
    total = logs.sum()
    return math.inf if total == 0.0 else k / total


def _loglog(values: np.ndarray, band: Tuple[float, float]) -> float:
    xs = np.sort(values)
    n = xs.size
    lo, hi = int(math.floor(band[0] * n)), int(math.floor(band[1] * n))
    survival = (n - np.arange(lo, hi)) / n
    fit = stats.linregress(np.log(xs[lo:hi]), np.log(survival))
    return -float(fit.slope)


def tail_index_estimate(
    samples: Sequence[float],
    method: str = "hill",
    k: Optional[int] = None,
    band: Tuple[float, float] = (0.90, 0.999),
    n_boot: int = 200,
    confidence: float = 0.95,
    rng: Optional[np.random.Generator] = None,
    min_samples: int = 1000,
) -> TailIndexEstimate:
    """Tail index of positive samples with a percentile-bootstrap interval.

    ``hill`` uses the top k order statistics (k = ⌈√N⌉ by default);
    ``loglog_regression`` regresses the log empirical survival function on log x
    over the quantile ``band``.

    Raises:
        DegenerateSampleError: If every sample has the same value.
    """
    values = np.asarray(samples, dtype=np.float64)
    if values.size < min_samples:
        raise DomainError(f"need at least {min_samples} samples, got {values.size}")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise DomainError("samples must be positive and finite")
    if np.all(values == values[0]):
        raise DegenerateSampleError("all samples are equal")
    n = values.size
    if method == "hill":
        k = int(math.ceil(math.sqrt(n))) if k is None else int(k)
        if not 1 <= k < n:
            raise DomainError(f"k must lie in [1, {n}), got {k}")
        estimator = lambda v: _hill(v, k)  # noqa: E731
        used_band = None
    elif method == "loglog_regression":
        if not 0.0 <= band[0] < band[1] <= 1.0:
            raise DomainError(f"bad quantile band {band}")
        if int(band[1] * n) - int(band[0] * n) < 3:
            raise DomainError("quantile band holds fewer than three points")
        estimator = lambda v: _loglog(v, band)  # noqa: E731
        used_band = band
        k = None
    else:
        raise DomainError(f"unknown tail method {method!r}")

    alpha = estimator(values)
    rng = np.random.default_rng(0) if rng is None else rng
    boot = np.empty(n_boot)
    for i in range(n_boot):
        boot[i] = estimator(values[rng.integers(0, n, size=n)])
    tail = (1.0 - confidence) / 2.0
    finite = boot[np.isfinite(boot)]
    if finite.size:
        ci_low, ci_high = (float(q) for q in np.quantile(finite, [tail, 1.0 - tail]))
    else:
        ci_low = ci_high = math.inf
    return TailIndexEstimate(
        alpha=float(alpha),
        ci_low=ci_low,
        ci_high=ci_high,
        method=method,
        n=n,
        k=k,
        band=used_band,
        light_tail_suspected=alpha > LIGHT_TAIL_ALPHA,
    )


def renewal_counts(tau_sequence: Sequence[int], n: int) -> Tuple[int, int]:
    """(k(n), ν(n)) with k(n) = max{k : τ_k ≤ n} and ν(n) = k(n) + 1."""
    tau = np.asarray(tau_sequence, dtype=np.int64)
    if tau.size > 1 and np.any(np.diff(tau) <= 0):
        raise DomainError("tau sequence must be strictly increasing")
    k = int(np.searchsorted(tau, n, side="right"))
    return k, k + 1


def ratio_speed(tau_inc: Sequence[float], rho_inc: Sequence[float]) -> Tuple[float, float]:
    """Σρ/Στ over increments and its delta-method standard error."""
    tau = np.asarray(tau_inc, dtype=np.float64)
    rho = np.asarray(rho_inc, dtype=np.float64)
    if tau.size < 2:
        raise DomainError("need at least two increments")
    speed = rho.sum() / tau.sum()
    residual = rho - speed * tau
    se = math.sqrt(residual.var(ddof=1) / tau.size) / tau.mean()
    return float(speed), se


def lag_one_correlation(values: Sequence[float]) -> Tuple[float, float]:
    """Lag-1 Pearson correlation and its null standard error 1/√n."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 3:
        raise DomainError("need at least three values")
    r = float(np.corrcoef(x[:-1], x[1:])[0, 1])
    return r, 1.0 / math.sqrt(x.size - 1)


def _doubling_sizes(n: int, smallest: int) -> List[int]:
    sizes = []
    size = min(smallest, n)
    while size < n:
        sizes.append(size)
        size *= 2
    sizes.append(n)
    return sizes


def kappa_moment_profile(samples: Sequence[float], kappa: float, sizes: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Empirical E[X^κ] on growing prefixes; a stable column suggests a finite moment."""
    x = np.asarray(samples, dtype=np.float64)
    sizes = _doubling_sizes(x.size, 1000) if sizes is None else list(sizes)
    moments = [float(np.mean(x[:s] ** kappa)) for s in sizes]
    return pd.DataFrame({"size": sizes, "kappa": kappa, "moment": moments})


def exp_moment_profile(samples: Sequence[float], delta: float, sizes: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Empirical E[exp(δX)] on growing prefixes."""
    x = np.asarray(samples, dtype=np.float64)
    sizes = _doubling_sizes(x.size, 1000) if sizes is None else list(sizes)
    moments = [float(np.mean(np.exp(delta * x[:s]))) for s in sizes]
    return pd.DataFrame({"size": sizes, "delta": delta, "moment": moments})


def profile_drift(profile: pd.DataFrame) -> float:
    """Relative change of the moment between the two largest prefixes."""
    if len(profile) < 2:
        return 0.0
    last, before = profile["moment"].iloc[-1], profile["moment"].iloc[-2]
    return abs(last - before) / abs(before) if before else math.inf


__all__ = [
    "DEFAULT_DELTA",
    "LawTag",
    "RegenerationRecord",
    "regeneration_points",
    "detect_regenerations",
    "IncrementSample",
    "sample_regeneration_increment",
    "sample_first_increment",
    "first_increment_tag",
    "TailIndexEstimate",
    "tail_index_estimate",
    "renewal_counts",
    "ratio_speed",
    "lag_one_correlation",
    "kappa_moment_profile",
    "exp_moment_profile",
    "profile_drift",
]
