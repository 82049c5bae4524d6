"""Tests for the quenched walk, exact kernels and trap excursions."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from src.core.errors import DomainError, HorizonError, WindowExitError
from src.core.rng import make_generator
from src.services.analytic import ruin_quantities, total_weight
from src.services.env import TOP, Environment, EnvironmentExtender, build_column_chain, sample_environment
from src.services.handcrafted import oracle_window
from src.services.traps import prune_environment
from src.services.walk import (
    KernelWalker,
    PrunedKernel,
    QuenchedKernel,
    QuenchedWalker,
    StopRule,
    exact_k_step_distribution,
    pruned_transition,
    quenched_transition,
    simulate_trap_excursion,
    simulate_trap_excursions,
    simulate_walk,
)


def test_closed_candidates_become_stays() -> None:
    """At the bottom of a trap only the left move is possible."""
    lam = 0.4
    law = quenched_transition(oracle_window("single_long_trap"), lam, (5, 0))
    big_e = total_weight(lam)
    assert law["left"] == pytest.approx(math.exp(-lam) / big_e)
    assert law["stay"] == pytest.approx((math.exp(lam) + 1) / big_e)
    assert law["right"] == 0.0 and law["vertical"] == 0.0


def test_pruned_law_at_obstacle() -> None:
    """The obstacle thins its right candidate by (1-γ) and renormalises by e^λ+1."""
    lam = 0.2
    pruned = prune_environment(oracle_window("single_long_trap"), lam)
    law = pruned_transition(pruned, (3, 1))
    gamma = math.exp(-2 * lam)
    assert law["right"] == pytest.approx(math.exp(lam) * (1 - gamma) / (math.exp(lam) + 1))
    assert sum(law.values()) == pytest.approx(1.0)
    plain = pruned_transition(pruned, (1, 1))
    assert plain["right"] == pytest.approx(math.exp(lam) / total_weight(lam))


def test_straight_rail_speed() -> None:
    """On a single open rail the walk moves at (e^λ - e^{-λ})/E."""
    lam = 1.0
    env = Environment(0, [TOP] * 16_000 + [0], sealed=True)
    n = 20_000
    traj = simulate_walk(env, lam, make_generator(3, 0), StopRule(horizon=n), start=(0, 1))
    speed = (math.exp(lam) - math.exp(-lam)) / total_weight(lam)
    assert traj.reason == "horizon"
    assert traj.state.position[0] / n == pytest.approx(speed, abs=0.02)


def test_unsealed_window_exit_raises() -> None:
    """Without an extender the walk cannot leave an open window."""
    env = Environment(0, [7] * 5)
    with pytest.raises(WindowExitError):
        simulate_walk(env, 0.5, make_generator(4, 0), StopRule(horizon=10_000), start=(2, 0))


def test_extender_grows_environment_for_threshold() -> None:
    """A walk on a cycle-stationary environment extends it on demand."""
    chain = build_column_chain(0.5)
    env = sample_environment(chain, make_generator(5, 0), n_cycles=3)
    ext = EnvironmentExtender(env, chain, make_generator(5, 1))
    traj = simulate_walk(env, 0.3, make_generator(5, 2), StopRule(x_threshold=800), extender=ext)
    assert traj.reason == "x_threshold"
    assert traj.state.max_x == 800
    assert env.x_hi >= 800
    assert ext.extensions >= 1


def test_trap_ledger_accounts_for_all_time() -> None:
    """Backbone time plus trap time equals elapsed time."""
    chain = build_column_chain(0.5)
    env = sample_environment(chain, make_generator(6, 0), n_cycles=3)
    ext = EnvironmentExtender(env, chain, make_generator(6, 1))
    traj = simulate_walk(env, 0.5, make_generator(6, 2), StopRule(horizon=5_000), extender=ext, track_traps=True)
    assert traj.state.backbone_time + traj.time_in_traps == 5_000
    assert all(t > 0 for t in traj.state.trap_time.values())


def test_return_to_start_in_sealed_window() -> None:
    """A finite sealed window is recurrent, so the walk comes back."""
    env = oracle_window("three_unit_traps")
    traj = simulate_walk(env, 0.2, make_generator(7, 0), StopRule(horizon=1_000_000, stop_on_return=True))
    assert traj.reason == "returned"
    assert traj.state.position == (0, 0)


def test_checkpoints_and_visits_match_path() -> None:
    """Checkpoint levels and registered visit counts agree with the recorded path."""
    env = oracle_window("chained_traps")
    traj = simulate_walk(
        env,
        0.3,
        make_generator(8, 0),
        StopRule(horizon=400, checkpoints=(0, 5, 100)),
        registered=[(3, 0), (0, 0)],
        record=True,
    )
    assert traj.path_x is not None and traj.path_y is not None
    assert len(traj.path_x) == 401
    assert traj.checkpoints == {0: 0, 5: int(traj.path_x[5]), 100: int(traj.path_x[100])}
    pairs = Counter(zip(traj.path_x.tolist(), traj.path_y.tolist()))
    assert traj.state.visits == {(3, 0): pairs[(3, 0)], (0, 0): pairs[(0, 0)]}


def test_predicate_stop_rule() -> None:
    """A callable stop rule is checked after every step."""
    env = oracle_window("single_long_trap")
    walker = QuenchedWalker(env, 0.5, make_generator(9, 0))
    traj = walker.run(lambda s: s.max_x >= 4)
    assert traj.reason == "predicate"
    assert traj.state.max_x == 4


def test_predicate_without_firing_hits_cap() -> None:
    """A rule that never fires stops at the step cap."""
    walker = QuenchedWalker(oracle_window("single_long_trap"), 0.5, make_generator(9, 1))
    with pytest.raises(HorizonError):
        walker.run(lambda s: False, step_cap=50)


def test_exact_distribution_matches_simulation() -> None:
    """Simulated 6-step frequencies agree with the exact kernel power."""
    env = oracle_window("single_long_trap")
    lam, k, n = 0.2, 6, 20_000
    exact = exact_k_step_distribution(QuenchedKernel(env, lam), (0, 0), k)
    assert sum(exact.values()) == pytest.approx(1.0, abs=1e-12)
    rng = make_generator(10, 0)
    counts: Counter = Counter()
    for _ in range(n):
        walker = QuenchedWalker(env, lam, rng, block=16)
        for _ in range(k):
            walker.step()
        counts[(walker.x, walker.y)] += 1
    for vertex, prob in exact.items():
        if prob > 0.02:
            se = math.sqrt(prob * (1 - prob) / n)
            assert abs(counts[vertex] / n - prob) < 4.5 * se


def test_exact_distribution_guards() -> None:
    """Mass leaving an open window and over-long horizons are refused."""
    env = Environment(0, [7, 7, 7])
    with pytest.raises(WindowExitError):
        exact_k_step_distribution(QuenchedKernel(env, 0.2), (1, 0), 3)
    with pytest.raises(DomainError):
        exact_k_step_distribution(QuenchedKernel(oracle_window("chained_traps"), 0.2), (0, 0), 17)


@pytest.mark.parametrize("name", ["single_long_trap", "chained_traps", "three_unit_traps"])
def test_pruned_kernel_is_stochastic(name: str) -> None:
    """The pruned walk on a sealed window keeps all of its mass."""
    pruned = prune_environment(oracle_window(name), 0.2)
    dist = exact_k_step_distribution(PrunedKernel(pruned), (0, 0), 8)
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(pruned.env.contains(x) for x, _ in dist)


def test_kernel_walker_follows_pruned_kernel() -> None:
    """Frequencies of the kernel sampler match the exact 4-step law."""
    pruned = prune_environment(oracle_window("three_unit_traps"), 0.2)
    kernel = PrunedKernel(pruned)
    exact = exact_k_step_distribution(kernel, (0, 0), 4)
    rng = make_generator(11, 0)
    n = 20_000
    counts: Counter = Counter()
    for _ in range(n):
        walker = KernelWalker(kernel, rng, (0, 0))
        for _ in range(4):
            walker.step()
        counts[walker.state] += 1
    for vertex, prob in exact.items():
        if prob > 0.02:
            se = math.sqrt(prob * (1 - prob) / n)
            assert abs(counts[vertex] / n - prob) < 4.5 * se


def test_unit_trap_duration_is_one_plus_returns() -> None:
    """In a length-one trap every step is spent at the bottom."""
    batch = simulate_trap_excursions(1, 0.4, make_generator(12, 0), 2_000)
    assert batch.reached_bottom.all()
    np.testing.assert_array_equal(batch.duration, 1 + batch.bottom_returns)
    single = simulate_trap_excursion(1, 0.4, make_generator(12, 1))
    assert single["duration"] == 1 + single["bottom_returns"]


@pytest.mark.parametrize("lazy", [False, True])
def test_excursion_statistics_match_ruin_formulas(lazy: bool) -> None:
    """Reaching the bottom and the number of bottom returns follow gambler's ruin."""
    m, lam, n = 3, 0.5, 20_000
    batch = simulate_trap_excursions(m, lam, make_generator(13, int(lazy)), n, lazy=lazy)
    ruin = ruin_quantities(m, lam)
    hit = ruin.hit_bottom
    assert abs(batch.reached_bottom.mean() - hit) < 5 * math.sqrt(hit * (1 - hit) / n)
    escape = ruin.e_m_lazy if lazy else ruin.e_m
    returns = batch.bottom_returns[batch.reached_bottom]
    mean = (1 - escape) / escape
    se = math.sqrt((1 - escape) / escape**2 / len(returns))
    assert abs(returns.mean() - mean) < 5 * se
    assert (batch.duration >= 1).all()


def test_excursion_rejects_bad_arguments() -> None:
    """Lengths below one and non-positive bias are domain errors."""
    with pytest.raises(DomainError):
        simulate_trap_excursions(0, 0.5, make_generator(0), 1)
    with pytest.raises(DomainError):
        simulate_trap_excursions(2, 0.0, make_generator(0), 1)
