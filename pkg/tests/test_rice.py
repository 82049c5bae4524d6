"""Tests for the alternating-sum evaluators and the residue expansion."""

from __future__ import annotations

import math

import pytest

from src.core.errors import InvariantViolation, PrecisionBudgetError
from src.services.analytic import critical_bias
from src.services.rice import (
    RiceConfig,
    alt_sum_direct,
    alt_sum_geometric,
    alt_sum_naive,
    excursion_bound,
    residue_series,
    rice_config,
    scaling_profile,
    select_mu_hat,
    shift_index,
)

LAM_C = critical_bias(0.5)


@pytest.fixture()  # type: ignore
def simple() -> RiceConfig:
    return rice_config(0.5, LAM_C, variant="simple")


@pytest.fixture()  # type: ignore
def squared() -> RiceConfig:
    return rice_config(0.5, LAM_C, variant="squared")


@pytest.mark.parametrize("lam", [0.05, 0.3, LAM_C, 2.0])
def test_shift_index_satisfies_double_inequality(lam: float) -> None:
    """t is pinned by (p-q)γ^-t ≤ 1 < (p-q)γ^-(t+1)."""
    gamma, drift = math.exp(-2 * lam), math.tanh(lam)
    t = shift_index(drift, gamma)
    assert drift * gamma ** (-t) <= 1.0 < drift * gamma ** (-(t + 1))


def test_zero_order_sums(simple: RiceConfig, squared: RiceConfig) -> None:
    """With n0 = 0 both kernels reduce to geometric series."""
    ga = simple.gamma**simple.alpha
    assert alt_sum_geometric(0, simple) == pytest.approx(1 / (1 - ga), rel=1e-15)
    assert alt_sum_geometric(0, squared) == pytest.approx(ga / (1 - ga) ** 2, rel=1e-15)


def test_two_term_direct_sum(simple: RiceConfig) -> None:
    """n0 = 1 is 1/(1-γ^α) - x/(1-γ^{α+1})."""
    g = simple.gamma
    expected = 1 / (1 - g**simple.alpha) - simple.x / (1 - g ** (simple.alpha + 1))
    assert alt_sum_direct(1, simple) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("n0", [10, 100, 1000, 10_000])
def test_routes_agree(n0: int, simple: RiceConfig, squared: RiceConfig) -> None:
    """Geometric and high-precision alternating evaluations agree to 1e-10."""
    for cfg in (simple, squared):
        assert alt_sum_geometric(n0, cfg) == pytest.approx(alt_sum_direct(n0, cfg), rel=1e-10)


def test_naive_sum_cancels_catastrophically(simple: RiceConfig) -> None:
    """Double precision loses the alternating sum at n0 = 200; the geometric form does not."""
    exact = alt_sum_direct(200, simple)
    assert abs(alt_sum_naive(200, simple) / exact - 1) > 1.0
    assert alt_sum_geometric(200, simple) == pytest.approx(exact, rel=1e-10)


def test_geometric_sum_positive_and_decreasing(simple: RiceConfig) -> None:
    """Each factor shrinks with n0, so the sum does too."""
    values = [alt_sum_geometric(n, simple) for n in (1, 2, 5, 10, 50, 300)]
    assert all(v > 0 for v in values)
    assert all(a > b for a, b in zip(values, values[1:]))


def test_direct_sum_budget(simple: RiceConfig) -> None:
    """Direct summation above the cap is refused."""
    with pytest.raises(PrecisionBudgetError):
        alt_sum_direct(10_001, simple)


def test_invalid_shift_is_an_invariant_violation() -> None:
    """A t breaking the double inequality is rejected."""
    with pytest.raises(InvariantViolation):
        RiceConfig(alpha=1.0, gamma=0.5, drift=0.9, t=3).validate()


def test_residue_terms_decay(simple: RiceConfig) -> None:
    """Beyond |k| = 1 the residue terms shrink monotonically."""
    for n0 in (10, 1000):
        result = residue_series(n0, simple)
        mags = result.term_magnitudes[1:]
        assert all(a > b for a, b in zip(mags, mags[1:]) if b > 0)
        assert result.converged


@pytest.mark.parametrize("variant", ["simple", "squared"])
def test_residue_matches_geometric_route(variant: str) -> None:
    """At n0 = 10^4 the residue expansion is within 1% of the exact sum."""
    cfg = rice_config(0.5, LAM_C, variant=variant)
    assert residue_series(10_000, cfg).value == pytest.approx(alt_sum_geometric(10_000, cfg), rel=0.01)


def test_leading_constant_is_log_periodic(simple: RiceConfig) -> None:
    """Multiplying n0 by 1/γ returns the leading constant to its value."""
    n0 = 10_000
    a = residue_series(n0, simple).leading_constant
    b = residue_series(n0 / simple.gamma, simple).leading_constant
    assert b == pytest.approx(a, rel=1e-3)


@pytest.mark.parametrize("alpha", [1.0, 1.5])
def test_normalized_profiles_bounded(alpha: float) -> None:
    """n0^α S and n0^α S/log n0 stay within a factor 10 over three decades."""
    cfg = rice_config(0.5, LAM_C / alpha)
    profile = scaling_profile(cfg, [10, 31, 100, 316, 1000, 3162, 10_000], direct_cap=1000)
    assert profile.ratio_simple <= 10
    assert profile.ratio_squared <= 10
    checked = profile.table["route_disagreement"].dropna()
    assert len(checked) == 5 and (checked < 1e-10).all()


def test_excursion_bound_and_mu_hat() -> None:
    """f(0) = 1, f'(0) = -1/(1-2q_λ), and μ̂ pushes f below one."""
    lam = 0.8
    q = math.exp(-2 * lam) / (1 + math.exp(-2 * lam))
    assert excursion_bound(0.0, lam) == pytest.approx(1.0, rel=1e-14)
    h = 1e-6
    slope = (excursion_bound(h, lam) - excursion_bound(0.0, lam)) / h
    assert slope == pytest.approx(-1 / (1 - 2 * q), rel=1e-4)
    mu = select_mu_hat(lam)
    assert 0 < mu <= 0.5 * math.log(1 / (4 * (1 - q) * q))
    assert excursion_bound(mu, lam) <= 1 - 1e-3 + 1e-12
