"""Alternating binomial sums behind the annealed single-trap tail.

For x = (p_λ - q_λ)γ^{-t} ∈ (γ, 1] the two kernels are

    simple:  Σ_j C(n,j)(-x)^j / (1 - γ^{α+j})
    squared: Σ_j C(n,j)(-x)^j γ^{α+j} / (1 - γ^{α+j})²

Expanding the geometric series turns each into an all-positive sum over k,
which is the production evaluator. The alternating form is kept as a
high-precision oracle and the residue expansion gives the n^{-α} asymptotics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence
import logging
import math

import mpmath
import numpy as np
import pandas as pd
from scipy import optimize, special

from ..core.errors import DomainError, InvariantViolation, PrecisionBudgetError
from .analytic import critical_bias

logger = logging.getLogger(__name__)

VARIANTS = ("simple", "squared")
_CHUNK = 1024
_REL_TAIL = 1e-18


@dataclass(frozen=True)
class RiceConfig:
    alpha: float
    gamma: float
    drift: float  # p_λ - q_λ
    t: int
    variant: str = "simple"
    precision: int = 20  # guard digits on top of n0·log10(2) for the direct route
    K: int = 20
    mu: Optional[float] = None

    @property
    def x(self) -> float:
        return self.drift * self.gamma ** (-self.t)

    def validate(self) -> "RiceConfig":
        if not self.alpha > 0:
            raise InvariantViolation(f"alpha must be positive, got {self.alpha}")
        if not 0.0 < self.gamma < 1.0:
            raise InvariantViolation(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.variant not in VARIANTS:
            raise InvariantViolation(f"unknown variant {self.variant!r}")
        if self.t < 0 or not (self.x <= 1.0 < self.drift * self.gamma ** (-(self.t + 1))):
            raise InvariantViolation(f"t = {self.t} violates (p-q)γ^-t <= 1 < (p-q)γ^-(t+1)")
        if self.K < 1:
            raise InvariantViolation(f"residue half-width must be >= 1, got {self.K}")
        return self


def shift_index(drift: float, gamma: float) -> int:
    """Smallest-violation t with drift·γ^{-t} ≤ 1 < drift·γ^{-(t+1)}."""
    if not 0.0 < drift <= 1.0:
        raise DomainError(f"drift must lie in (0, 1], got {drift}")
    t = max(0, int(math.floor(math.log(drift) / math.log(gamma))))
    while drift * gamma ** (-t) > 1.0:
        t -= 1
    while drift * gamma ** (-(t + 1)) <= 1.0:
        t += 1
    return t


def make_rice_config(alpha: float, gamma: float, drift: float, **kwargs) -> RiceConfig:
    return RiceConfig(alpha=alpha, gamma=gamma, drift=drift, t=shift_index(drift, gamma), **kwargs).validate()


def rice_config(p: float, lam: float, variant: str = "simple", K: int = 20, precision: int = 20) -> RiceConfig:
    """Configuration at (p, λ): α = λ_c/λ, γ = e^{-2λ}, drift = tanh λ, with μ̂ selected."""
    if lam <= 0:
        raise DomainError(f"bias must be positive, got {lam}")
    return make_rice_config(
        critical_bias(p) / lam,
        math.exp(-2.0 * lam),
        math.tanh(lam),
        variant=variant,
        K=K,
        precision=precision,
        mu=select_mu_hat(lam),
    )


def _check_n0(n0: int) -> None:
    if n0 < 0 or int(n0) != n0:
        raise DomainError(f"n0 must be a nonnegative integer, got {n0}")


def alt_sum_geometric(n0: int, cfg: RiceConfig) -> float:
    """All-positive form Σ_k w_k γ^{αk}(1 - xγ^k)^{n0}, w_k = 1 or k."""
    cfg.validate()
    _check_n0(n0)
    log_gamma = math.log(cfg.gamma)
    x = cfg.x
    if n0 == 0:
        ga = cfg.gamma ** cfg.alpha
        return 1.0 / (1.0 - ga) if cfg.variant == "simple" else ga / (1.0 - ga) ** 2
    # past this index n0·xγ^k < 1, so the terms only shrink
    peak = max(0, int(math.ceil(math.log(n0 * x) / -log_gamma)) + 1)
    total = 0.0
    start = 0
    while True:
        k = np.arange(start, start + _CHUNK, dtype=np.float64)
        with np.errstate(divide="ignore"):
            log_terms = cfg.alpha * k * log_gamma + n0 * np.log1p(-x * np.exp(k * log_gamma))
        if cfg.variant == "squared":
            with np.errstate(divide="ignore"):
                log_terms = log_terms + np.log(k)
        terms = np.exp(log_terms)
        chunk = math.fsum(terms)
        total += chunk
        start += _CHUNK
        if start > peak and (chunk == 0.0 or terms[-1] < _REL_TAIL * total):
            return total


def alt_sum_direct(n0: int, cfg: RiceConfig, cap: int = 10_000) -> float:
    """Alternating form evaluated with n0·log10(2) + ``cfg.precision`` digits.

    Raises:
        PrecisionBudgetError: If ``n0`` exceeds ``cap``.
    """
    cfg.validate()
    _check_n0(n0)
    if n0 > cap:
        raise PrecisionBudgetError(f"n0 = {n0} above the direct-summation cap {cap}")
    digits = int(math.ceil(n0 * math.log10(2.0))) + cfg.precision
    with mpmath.workdps(digits):
        x = mpmath.mpf(cfg.x)
        gamma = mpmath.mpf(cfg.gamma)
        g = gamma ** mpmath.mpf(cfg.alpha)  # γ^{α+j}
        binom = mpmath.mpf(1)
        power = mpmath.mpf(1)  # (-x)^j
        total = mpmath.mpf(0)
        for j in range(n0 + 1):
            denom = 1 - g
            if cfg.variant == "simple":
                total += binom * power / denom
            else:
                total += binom * power * g / (denom * denom)
            binom = binom * (n0 - j) / (j + 1)
            power = -power * x
            g = g * gamma
        return float(total)


def alt_sum_naive(n0: int, cfg: RiceConfig) -> float:
    """The alternating form in double precision; loses about n0 bits to cancellation."""
    cfg.validate()
    _check_n0(n0)
    j = np.arange(n0 + 1, dtype=np.float64)
    g = cfg.gamma ** (cfg.alpha + j)
    weights = special.binom(n0, j) * (-cfg.x) ** j
    if cfg.variant == "simple":
        return float(np.sum(weights / (1.0 - g)))
    return float(np.sum(weights * g / (1.0 - g) ** 2))


@dataclass(frozen=True)
class ResidueResult:
    value: float
    leading_constant: float
    term_magnitudes: np.ndarray  # |k-th term| for k = 0..K (max over ±k)
    converged: bool


def residue_series(n0: int, cfg: RiceConfig) -> ResidueResult:
    """Truncated residue expansion over the poles z_k = -α + 2πik/log γ, |k| ≤ K.

    The leading constant is value·n0^α (simple) or value·n0^α/log n0 (squared).
    """
    cfg.validate()
    if n0 < 2:
        raise DomainError(f"residue expansion needs n0 >= 2, got {n0}")
    log_gamma = math.log(cfg.gamma)
    log_x = math.log(cfg.x)
    ks = np.arange(-cfg.K, cfg.K + 1)
    z = -cfg.alpha + 2j * math.pi * ks / log_gamma
    log_ratio = special.gammaln(n0 + 1) + special.loggamma(-z) - special.loggamma(n0 + 1 - z)
    kernel = np.exp(z * log_x + log_ratio)
    if cfg.variant == "simple":
        terms = kernel / (-log_gamma)
    else:
        terms = kernel * (log_x - special.psi(-z) + special.psi(n0 + 1 - z)) / log_gamma**2
    value = float(np.sum(terms).real)
    mags = np.abs(terms)
    per_k = np.maximum(mags[cfg.K :], mags[cfg.K :: -1])
    converged = bool(per_k[-1] <= 1e-14 * abs(value))
    if not converged:
        logger.warning("residue series not converged at K=%d (n0=%d)", cfg.K, n0)
    scale = n0**cfg.alpha
    if cfg.variant == "squared":
        scale /= math.log(n0)
    return ResidueResult(value=value, leading_constant=value * scale, term_magnitudes=per_k, converged=converged)


def excursion_bound(mu: float, lam: float) -> float:
    """f(μ) = e^{-2μR}(1 - √(1 - 4p_λq_λe^{2μ}))/(2q_λe^μ), R = coth λ."""
    if lam <= 0:
        raise DomainError(f"bias must be positive, got {lam}")
    gamma = math.exp(-2.0 * lam)
    p_l = 1.0 / (1.0 + gamma)
    q_l = 1.0 - p_l
    radicand = 1.0 - 4.0 * p_l * q_l * math.exp(2.0 * mu)
    if radicand < 0.0:
        if radicand < -1e-12:
            raise DomainError(f"mu = {mu} beyond the branch point")
        radicand = 0.0
    R = 1.0 / math.tanh(lam)
    return math.exp(-2.0 * mu * R) * (1.0 - math.sqrt(radicand)) / (2.0 * q_l * math.exp(mu))


def select_mu_hat(lam: float, tol: float = 1e-3) -> float:
    """Largest μ in (0, ½log(1/(4p_λq_λ))) with f(μ) ≤ 1 - tol, located by bisection."""
    gamma = math.exp(-2.0 * lam)
    p_l = 1.0 / (1.0 + gamma)
    q_l = 1.0 - p_l
    mu_max = 0.5 * math.log(1.0 / (4.0 * p_l * q_l))
    target = 1.0 - tol
    low = optimize.minimize_scalar(
        lambda m: excursion_bound(m, lam), bounds=(0.0, mu_max), method="bounded"
    ).x
    if excursion_bound(low, lam) > target:
        raise DomainError(f"no mu with f(mu) <= {target} at lambda={lam}")
    if excursion_bound(mu_max, lam) <= target:
        return mu_max
    return float(optimize.bisect(lambda m: excursion_bound(m, lam) - target, low, mu_max, xtol=1e-14))


@dataclass(frozen=True)
class ScalingProfile:
    table: pd.DataFrame
    ratio_simple: float  # max/min of n0^α S
    ratio_squared: float  # max/min of n0^α S / log n0


def scaling_profile(cfg: RiceConfig, n0_grid: Sequence[int], direct_cap: int = 0, min_decades: float = 3.0) -> ScalingProfile:
    """Normalized profiles of both kernels over ``n0_grid``.

    ``route_disagreement`` holds |geometric/direct - 1| for grid points up to
    ``direct_cap`` and NaN elsewhere.
    """
    grid = sorted(int(n) for n in n0_grid)
    if len(grid) < 2 or grid[0] < 2:
        raise DomainError("grid needs at least two points >= 2")
    if math.log10(grid[-1] / grid[0]) < min_decades - 1e-12:
        raise DomainError(f"grid spans fewer than {min_decades} decades")
    simple = replace(cfg, variant="simple")
    squared = replace(cfg, variant="squared")
    rows = []
    for n0 in grid:
        s1 = alt_sum_geometric(n0, simple)
        s2 = alt_sum_geometric(n0, squared)
        disagreement = math.nan
        if n0 <= direct_cap:
            disagreement = abs(s1 / alt_sum_direct(n0, simple, cap=direct_cap) - 1.0)
        rows.append(
            {
                "n0": n0,
                "S_simple": s1,
                "S_squared": s2,
                "norm_simple": n0**cfg.alpha * s1,
                "norm_squared": n0**cfg.alpha * s2 / math.log(n0),
                "route_disagreement": disagreement,
            }
        )
    table = pd.DataFrame(rows)
    return ScalingProfile(
        table=table,
        ratio_simple=float(table["norm_simple"].max() / table["norm_simple"].min()),
        ratio_squared=float(table["norm_squared"].max() / table["norm_squared"].min()),
    )


__all__ = [
    "RiceConfig",
    "shift_index",
    "make_rice_config",
    "rice_config",
    "alt_sum_geometric",
    "alt_sum_direct",
    "alt_sum_naive",
    "ResidueResult",
    "residue_series",
    "excursion_bound",
    "select_mu_hat",
    "ScalingProfile",
    "scaling_profile",
]
