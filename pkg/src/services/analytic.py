"""Closed-form quantities of the biased ladder walk.

Every simulation module checks itself against these functions, so they are
kept pure and cheap: plain floats in, plain floats or frozen records out.

Notation used throughout the package:

* ``E = e^λ + 1 + e^{-λ}`` is the total candidate weight at a vertex.
* ``γ = e^{-2λ}`` is the drift ratio of the line walk.
* ``p_λ = e^λ / (e^λ + e^{-λ})`` and ``q_λ = 1 - p_λ``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple
import math

from ..core.errors import DomainError, InvalidCouplingParameters

LAMBDA_STAR = math.log(2.0) / 2.0

_ENTRY_TOL = 1e-15
_SUM_TOL = 1e-12


def _check_p(p: float) -> None:
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise DomainError(f"retention probability must lie in (0, 1), got {p}")


def _check_lambda(lam: float) -> None:
    if not lam > 0.0 or math.isinf(lam):
        raise DomainError(f"bias must be a positive finite real, got {lam}")


def _check_length(m: int) -> None:
    if int(m) != m or m < 1:
        raise DomainError(f"trap length must be an integer >= 1, got {m}")


def total_weight(lam: float) -> float:
    """E = e^λ + 1 + e^{-λ}."""
    return math.exp(lam) + 1.0 + math.exp(-lam)


def critical_bias(p: float) -> float:
    """Critical bias λ_c(p) separating ballistic from sub-ballistic motion.

    With s = p(1-p) the defining expression
    ½ log(2 / (1 + 2p - 2p² - √(1 + 4p² - 8p³ + 4p⁴))) equals
    ½ log((1 + 2s + √(1 + 4s²)) / (2s)), which has no cancellation near p = 1.
    """
    _check_p(p)
    s = p * (1.0 - p)
    return 0.5 * math.log((1.0 + 2.0 * s + math.sqrt(1.0 + 4.0 * s * s)) / (2.0 * s))


@dataclass(frozen=True)
class BiasParams:
    """Derived constants for a (p, λ) pair."""
    p: float  # Edge retention probability
    lam: float  # Bias
    lambda_c: float  # Critical bias for p
    alpha: float  # Tail index λ_c / λ
    p_lambda: float  # Right step probability of the non-lazy line walk
    q_lambda: float  # Left step probability of the non-lazy line walk
    gamma: float  # e^{-2λ} = q_λ / p_λ
    p_esc: float  # Lower bound for escaping from a pre-regeneration point
    R: float  # Mean first-passage time of the line walk to +1
    lambda_star: float  # log(2)/2
    above_lambda_star: bool  # λ > λ*, where the pruned walk has finite energy


def bias_params(p: float, lam: float) -> BiasParams:
    """Collect every bias-derived constant for (p, λ)."""
    _check_p(p)
    _check_lambda(lam)
    lambda_c = critical_bias(p)
    gamma = math.exp(-2.0 * lam)
    p_lambda = 1.0 / (1.0 + gamma)
    q_lambda = 1.0 - p_lambda
    return BiasParams(
        p=p,
        lam=lam,
        lambda_c=lambda_c,
        alpha=lambda_c / lam,
        p_lambda=p_lambda,
        q_lambda=q_lambda,
        gamma=gamma,
        p_esc=escape_probability_bound(lam),
        R=1.0 / math.tanh(lam),
        lambda_star=LAMBDA_STAR,
        above_lambda_star=lam > LAMBDA_STAR,
    )


def escape_probability_bound(lam: float) -> float:
    """p_esc = (1 - e^{-λ}) / (e^λ + 1 + e^{-λ})."""
    _check_lambda(lam)
    return -math.expm1(-lam) / total_weight(lam)


@dataclass(frozen=True)
class RuinQuantities:
    """Gambler's-ruin quantities of a trap of length m."""
    m: int
    lam: float
    gamma: float
    e_m: float  # Escape from the bottom before returning to it, non-lazy chain
    e_m_lazy: float  # Same for the lazy chain
    e_prime_m: float  # e^λ/E · (1-γ)/(1-γ^m)
    hit_bottom: float  # From 1, reach m before 0

    def h(self, y: int) -> float:
        """Probability of hitting 0 before m from y (harmonic, h(0)=1, h(m)=0)."""
        if y < 0 or y > self.m:
            raise DomainError(f"state {y} outside 0..{self.m}")
        denom = -math.expm1(-2.0 * self.lam * self.m)
        return (self.gamma ** y - self.gamma ** self.m) / denom


def ruin_quantities(m: int, lam: float) -> RuinQuantities:
    """Gambler's-ruin escape and hitting probabilities for a trap of length m.

    Example:
        ruin_quantities(1, lam).e_m == bias_params(p, lam).q_lambda
    """
    _check_length(m)
    _check_lambda(lam)
    gamma = math.exp(-2.0 * lam)
    one_minus_gamma = -math.expm1(-2.0 * lam)
    one_minus_gamma_m = -math.expm1(-2.0 * lam * m)
    p_lambda = 1.0 / (1.0 + gamma)
    big_e = total_weight(lam)
    return RuinQuantities(
        m=int(m),
        lam=lam,
        gamma=gamma,
        e_m=gamma ** m * p_lambda * one_minus_gamma / one_minus_gamma_m,
        e_m_lazy=math.exp(-lam) / big_e * gamma ** (m - 1) * one_minus_gamma / one_minus_gamma_m,
        e_prime_m=math.exp(lam) / big_e * one_minus_gamma / one_minus_gamma_m,
        hit_bottom=one_minus_gamma / one_minus_gamma_m,
    )


def first_passage_mgf(x: float, lam: float) -> float:
    """E[x^σ] for the first passage σ of the line walk from 0 to +1.

    Valid on the real branch 0 < x ≤ 1/(2√(p_λ q_λ)).
    """
    _check_lambda(lam)
    if not x > 0.0:
        raise DomainError(f"argument must be positive, got {x}")
    gamma = math.exp(-2.0 * lam)
    p_lambda = 1.0 / (1.0 + gamma)
    q_lambda = gamma / (1.0 + gamma)
    radicand = 1.0 - 4.0 * p_lambda * q_lambda * x * x
    if radicand < 0.0:
        if radicand > -1e-15:
            radicand = 0.0
        else:
            raise DomainError(f"x = {x} beyond the real branch 1/(2√(p_λ q_λ))")
    return (1.0 - math.sqrt(radicand)) / (2.0 * q_lambda * x)


def first_passage_mgf_derivative(x: float, lam: float) -> float:
    """d/dx E[x^σ], from differentiating f = p_λ x + q_λ x f²."""
    f = first_passage_mgf(x, lam)
    gamma = math.exp(-2.0 * lam)
    p_lambda = 1.0 / (1.0 + gamma)
    q_lambda = 1.0 - p_lambda
    denom = 1.0 - 2.0 * q_lambda * x * f
    if denom <= 0.0:
        raise DomainError(f"derivative undefined at the branch point x = {x}")
    return (p_lambda + q_lambda * f * f) / denom


def trap_length_pmf(m: int, p: float) -> float:
    """Law of a generic trap length: (e^{2λ_c} - 1) e^{-2λ_c m} on {1, 2, ...}."""
    _check_length(m)
    two_lc = 2.0 * critical_bias(p)
    return math.expm1(two_lc) * math.exp(-two_lc * m)


def trap_length_mean(p: float) -> float:
    """Mean of ``trap_length_pmf``: 1/(1 - e^{-2λ_c})."""
    return -1.0 / math.expm1(-2.0 * critical_bias(p))


def size_biased_trap_length_mean(p: float) -> float:
    """Mean of m·pmf(m)/E[m], the length of the trap covering a fixed level: (1 + r)/(1 - r)."""
    r = math.exp(-2.0 * critical_bias(p))
    return (1.0 + r) / (1.0 - r)


@dataclass(frozen=True)
class ObstacleMove:
    """One candidate of the joint move at an obstacle.

    ``first`` and ``second`` are the directions attempted by the pruned and the
    full component; ``w`` is the exit side fixed for the full component's
    trap-piece excursion (0 when none).
    """
    first: str
    second: str
    w: int
    probability: float


@dataclass(frozen=True)
class ObstacleTransitions:
    lam: float
    L: int
    moves: Tuple[ObstacleMove, ...]
    valid: bool

    def probabilities(self) -> Tuple[float, ...]:
        return tuple(m.probability for m in self.moves)


def obstacle_transitions(lam: float, L: int, strict: bool = True) -> ObstacleTransitions:
    """Joint move law at an obstacle whose re-inserted trap has length L.

    The seven entries, in order, are (right, right, +1), (left, left, 0),
    (vertical, vertical, 0), (left, right, +1), (left, right, -1),
    (vertical, right, +1) and (vertical, right, -1).

    Raises:
        InvalidCouplingParameters: If ``strict`` and an entry leaves [0, 1].
    """
    _check_lambda(lam)
    _check_length(L)
    el, eml = math.exp(lam), math.exp(-lam)
    big_e = el + 1.0 + eml
    c = (el - eml) / (el + 1.0)
    e_prime = ruin_quantities(L + 1, lam).e_prime_m
    rest = 1.0 / (1.0 + eml) - 1.0 / big_e - e_prime / (1.0 + eml)
    entries = (
        ("right", "right", 1, c),
        ("left", "left", 0, eml / big_e),
        ("vertical", "vertical", 0, 1.0 / big_e),
        ("left", "right", 1, eml / (1.0 + eml) * (e_prime - c)),
        ("left", "right", -1, eml * rest),
        ("vertical", "right", 1, (e_prime - c) / (1.0 + eml)),
        ("vertical", "right", -1, rest),
    )
    probs = [e[3] for e in entries]
    valid = all(-_ENTRY_TOL <= q <= 1.0 + _ENTRY_TOL for q in probs) and abs(math.fsum(probs) - 1.0) <= _SUM_TOL
    if strict and not valid:
        raise InvalidCouplingParameters(
            f"obstacle transition vector invalid at lambda={lam}, L={L}: "
            f"e'_(L+1)={e_prime:.6g} < {c:.6g}"
        )
    moves = tuple(
        ObstacleMove(first=f, second=s, w=w, probability=min(max(q, 0.0), 1.0) if valid else q)
        for f, s, w, q in entries
    )
    return ObstacleTransitions(lam=lam, L=int(L), moves=moves, valid=valid)


def max_feasible_trap_length(lam: float, limit: int = 10_000) -> int:
    """Largest L whose obstacle vector is valid; 0 if even L = 1 fails.

    e'_{L+1} decreases in L, so feasibility is a prefix of {1, 2, ...}.
    """
    feasible = 0
    for L in range(1, limit + 1):
        if not obstacle_transitions(lam, L, strict=False).valid:
            break
        feasible = L
    return feasible


@dataclass(frozen=True)
class PrunedEnergyBound:
    energy: float  # +inf when λ ≤ λ*
    escape_bound: float  # 0 when the energy is infinite


def pruned_energy_bound(lam: float) -> PrunedEnergyBound:
    """Energy bound of the pruned walk and the derived uniform escape bound."""
    _check_lambda(lam)
    if lam <= LAMBDA_STAR:
        return PrunedEnergyBound(energy=math.inf, escape_bound=0.0)
    gamma = math.exp(-2.0 * lam)
    ratio = gamma / (1.0 - gamma)
    series = ratio / (1.0 - ratio)
    energy = 1.0 + 2.0 * math.exp(lam) * series
    escape = 1.0 / (3.0 * math.exp(lam) * (1.0 + 2.0 * math.exp(2.0 * lam) * series))
    return PrunedEnergyBound(energy=energy, escape_bound=escape)


def oracle_values(p: float, lam: float) -> dict[str, float]:
    """Flat name -> value map printed by the ``oracle`` command."""
    bp = bias_params(p, lam)
    energy = pruned_energy_bound(lam)
    out: dict[str, float] = {
        "p": p,
        "lambda": lam,
        "lambda_c": bp.lambda_c,
        "alpha": bp.alpha,
        "p_lambda": bp.p_lambda,
        "q_lambda": bp.q_lambda,
        "gamma": bp.gamma,
        "p_esc": bp.p_esc,
        "R": bp.R,
        "lambda_star": bp.lambda_star,
        "above_lambda_star": float(bp.above_lambda_star),
        "trap_length_mean": trap_length_mean(p),
        "pruned_energy": energy.energy,
        "pruned_escape_bound": energy.escape_bound,
        "max_feasible_trap_length": float(max_feasible_trap_length(lam)),
    }
    for m in (1, 2, 3, 5, 8):
        rq = ruin_quantities(m, lam)
        out[f"e_{m}"] = rq.e_m
        out[f"e_prime_{m}"] = rq.e_prime_m
        out[f"hit_bottom_{m}"] = rq.hit_bottom
        out[f"trap_pmf_{m}"] = trap_length_pmf(m, p)
    return out


__all__ = [
    "LAMBDA_STAR",
    "total_weight",
    "critical_bias",
    "BiasParams",
    "bias_params",
    "escape_probability_bound",
    "RuinQuantities",
    "ruin_quantities",
    "first_passage_mgf",
    "first_passage_mgf_derivative",
    "trap_length_pmf",
    "trap_length_mean",
    "size_biased_trap_length_mean",
    "ObstacleMove",
    "ObstacleTransitions",
    "obstacle_transitions",
    "max_feasible_trap_length",
    "PrunedEnergyBound",
    "pruned_energy_bound",
    "oracle_values",
]
