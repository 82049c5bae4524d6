"""Tests for regeneration detection, tail-index estimation and renewal counts."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from src.core.errors import DegenerateSampleError, DomainError
from src.core.rng import make_generator
from src.services.analytic import escape_probability_bound
from src.services.env import EnvironmentExtender, build_column_chain, sample_environment
from src.services.regen import (
    LawTag,
    detect_regenerations,
    exp_moment_profile,
    kappa_moment_profile,
    lag_one_correlation,
    profile_drift,
    ratio_speed,
    regeneration_points,
    renewal_counts,
    sample_first_increment,
    sample_regeneration_increment,
    tail_index_estimate,
)
from src.services.walk import StopRule, simulate_walk

PATH = [0, 1, 2, 3, 2, 3, 4, 5, 6, 7, 8, 9]


def test_revisited_level_is_excluded() -> None:
    """Level 2 is crossed twice, level 9 is only reached at the horizon."""
    record = regeneration_points(np.array(PATH), [2, 4, 6, 9], delta=3)
    assert record.rho.tolist() == [4, 6]
    assert record.tau.tolist() == [6, 8]
    assert not record.censored.any()


def test_certificate_margin_censors_trailing_points() -> None:
    """Points within Δ of the final position are kept but censored."""
    record = regeneration_points(np.array(PATH), [4, 6], delta=4)
    assert record.censored.tolist() == [False, True]
    assert record.certified == 1


def test_lazy_stay_disqualifies() -> None:
    """Occupying a level twice, even by staying, is not a single visit."""
    record = regeneration_points(np.array([0, 1, 2, 2, 3, 4]), [2, 3], delta=1)
    assert record.rho.tolist() == [3]


def test_infinite_margin_censors_everything() -> None:
    """No certificate exists when Δ is infinite."""
    record = regeneration_points(np.array(PATH), [4, 6], delta=math.inf)
    assert len(record) == 2
    assert record.certified == 0


def test_start_level_never_counts() -> None:
    """Only levels strictly right of the start are candidates."""
    record = regeneration_points(np.array([3, 4, 5, 6, 7]), [2, 3, 5], delta=1)
    assert record.rho.tolist() == [5]


@pytest.fixture(scope="module")  # type: ignore
def long_walk():
    chain = build_column_chain(0.5)
    env = sample_environment(chain, make_generator(51, 0), n_cycles=50)
    ext = EnvironmentExtender(env, chain, make_generator(51, 1))
    traj = simulate_walk(env, 0.3, make_generator(51, 2), StopRule(horizon=200_000), extender=ext)
    return env, traj


def test_regeneration_times_are_unique_visits(long_walk) -> None:
    """Each certified τ_k is the only time the walk sits at ρ_k."""
    env, traj = long_walk
    record = detect_regenerations(traj, env, delta=200)
    assert record.certified > 100
    assert np.all(np.diff(record.rho) > 0) and np.all(np.diff(record.tau) > 0)
    path = traj.path_x
    for rho, tau in list(zip(record.rho, record.tau))[:200]:
        assert path[tau] == rho
        assert np.count_nonzero(path == rho) == 1


def test_first_row_tag_follows_provenance(long_walk) -> None:
    """A walk on a cycle-stationary environment does not sample τ₁ under P."""
    env, traj = long_walk
    record = detect_regenerations(traj, env, delta=200)
    assert record.law_tag is LawTag.FIRST_STATIONARY
    tags = record.increments()["law_tag"]
    assert tags.iloc[0] == "first_increment_cycle_stationary"
    assert set(tags.iloc[1:]) == {LawTag.GENERIC.value}
    assert detect_regenerations(traj, env, delta=200, law_tag=LawTag.CIRC).law_tag is LawTag.CIRC


def test_generic_increments_look_independent(long_walk) -> None:
    """Consecutive increments after the first show no lag-1 dependence."""
    env, traj = long_walk
    frame = detect_regenerations(traj, env, delta=200).increments()
    generic = frame[(frame["law_tag"] == LawTag.GENERIC.value) & ~frame["censored"]]
    r, se = lag_one_correlation(generic["rho_inc"].to_numpy())
    assert abs(r) < 4 * se
    rank_r, _ = stats.spearmanr(generic["tau_inc"].to_numpy()[:-1], generic["tau_inc"].to_numpy()[1:])
    assert abs(rank_r) < 4 * se


def test_increment_speed_matches_walk_speed(long_walk) -> None:
    """Σρ/Στ over the increments agrees with X_n/n."""
    env, traj = long_walk
    frame = detect_regenerations(traj, env, delta=200).increments()
    generic = frame[~frame["censored"]].iloc[1:]
    speed, _ = ratio_speed(generic["tau_inc"], generic["rho_inc"])
    assert speed == pytest.approx(traj.state.position[0] / traj.state.time, rel=0.05)


def test_acceptance_rate_exceeds_escape_bound() -> None:
    """Rejection by return to the origin accepts at least p_esc of attempts."""
    p, lam, n = 0.5, 0.5, 100
    rng = make_generator(52, 0)
    chain = build_column_chain(p)
    samples = [sample_regeneration_increment(p, lam, rng, delta=20, chain=chain) for _ in range(n)]
    attempts = sum(s.attempts for s in samples)
    rate = n / attempts
    bound = escape_probability_bound(lam)
    assert rate >= bound - 3 * math.sqrt(bound * (1 - bound) / attempts)
    assert all(s.tau >= s.rho >= 1 and not s.censored for s in samples)


def test_first_increment_under_window_law() -> None:
    """τ₁ from the origin of spliced windows is certified and reaches at least ρ₁ steps."""
    p, lam = 0.5, 0.5
    rng = make_generator(55, 0)
    chain = build_column_chain(p)
    samples = [sample_first_increment(p, lam, rng, N=6, delta=20, chain=chain) for _ in range(30)]
    assert all(s.tau >= s.rho >= 1 and not s.censored for s in samples)
    assert all(s.attempts >= 1 for s in samples)


def test_first_increment_censored_at_step_cap() -> None:
    """A walk stopped by the step cap comes back flagged as censored."""
    sample = sample_first_increment(0.5, 0.5, make_generator(56, 0), N=6, delta=10_000, step_cap=500, first_chunk=100)
    assert sample.censored


def test_pareto_tail_index() -> None:
    """Both methods recover α = 1.5 from Pareto samples."""
    samples = 1.0 + make_generator(53, 0).pareto(1.5, size=100_000)
    loglog = tail_index_estimate(samples, method="loglog_regression", n_boot=50)
    assert 1.4 <= loglog.alpha <= 1.6
    assert loglog.band == (0.90, 0.999)
    hill = tail_index_estimate(samples, method="hill", k=2000, n_boot=50)
    assert hill.alpha == pytest.approx(1.5, abs=0.15)
    assert hill.ci_low <= hill.alpha <= hill.ci_high
    assert not hill.light_tail_suspected


def test_exponential_flags_light_tail() -> None:
    """Hill on exponential samples returns a large index and the flag."""
    samples = make_generator(54, 0).exponential(size=100_000)
    estimate = tail_index_estimate(samples, method="hill", n_boot=20)
    assert estimate.alpha > 5
    assert estimate.light_tail_suspected
    assert estimate.k == 317


def test_hill_is_scale_free() -> None:
    """Scaling by a power of two leaves the Hill estimate unchanged."""
    samples = 1.0 + make_generator(55, 0).pareto(2.0, size=5_000)
    a = tail_index_estimate(samples, n_boot=10, rng=make_generator(1))
    b = tail_index_estimate(8.0 * samples, n_boot=10, rng=make_generator(1))
    assert a.alpha == b.alpha


def test_tail_estimate_rejects_bad_samples() -> None:
    """Constant samples are degenerate; tiny samples and unknown methods are refused."""
    with pytest.raises(DegenerateSampleError):
        tail_index_estimate(np.full(2_000, 3.0))
    with pytest.raises(DomainError):
        tail_index_estimate(np.arange(1.0, 11.0))
    with pytest.raises(DomainError):
        tail_index_estimate(np.arange(1.0, 2001.0), method="moments")


def test_renewal_counts_conventions() -> None:
    """k(n) counts τ_j ≤ n; ν(n) = k(n) + 1."""
    tau = [5, 9, 14]
    assert renewal_counts(tau, 3) == (0, 1)
    assert renewal_counts(tau, 9) == (2, 3)
    assert renewal_counts(tau, 100) == (3, 4)
    with pytest.raises(DomainError):
        renewal_counts([3, 3, 4], 5)


def test_moment_profiles() -> None:
    """Finite moments stabilise under doubling; profiles report every prefix size."""
    rng = make_generator(56, 0)
    pareto = 1.0 + rng.pareto(1.5, size=64_000)
    profile = kappa_moment_profile(pareto, 0.75)
    assert profile["size"].tolist() == [1000, 2000, 4000, 8000, 16000, 32000, 64000]
    assert profile_drift(profile) < 0.2
    geometric = rng.geometric(0.5, size=16_000).astype(float)
    exp_profile = exp_moment_profile(geometric, 0.1)
    assert exp_profile["moment"].iloc[-1] == pytest.approx(0.5 * math.exp(0.1) / (1 - 0.5 * math.exp(0.1)), rel=0.05)
