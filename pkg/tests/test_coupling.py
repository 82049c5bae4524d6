"""Tests for the joint pruned/full chain, its marginals and its diagnostics."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from src.core.errors import InconsistentStateError, InvalidCouplingParameters
from src.core.rng import make_generator
from src.services.analytic import critical_bias, obstacle_transitions, trap_length_pmf
from src.services.coupling import (
    CASE_BACKBONE,
    CASE_OBSTACLE,
    CASE_SYNC,
    N1_CASES,
    build_coupled_environment,
    cached_origin_coin,
    check_visit_domination,
    coupled_from_environment,
    coupled_step,
    escape_frequency,
    estimate_origin_coin,
    exact_marginal_distributions,
    extract_marginals,
    feasibility_table,
    regeneration_transfer_check,
    reinsert_traps,
    sample_trap_lengths,
    simulate_coupling,
)
from src.services.env import Environment, build_column_chain, sample_environment
from src.services.handcrafted import ORACLE_WINDOWS, oracle_window
from src.services.traps import enumerate_traps, prune_environment
from src.services.walk import candidate_law

ORACLE_LAMBDA = 0.2


@pytest.mark.parametrize("name", sorted(ORACLE_WINDOWS))
def test_exact_marginals_match_direct_walks(name: str) -> None:
    """8-step laws of both subsampled components equal the direct walks' laws."""
    cenv = coupled_from_environment(oracle_window(name), ORACLE_LAMBDA)
    check = exact_marginal_distributions(cenv, start=(0, 0), k=8)
    assert sum(check.full.values()) == pytest.approx(1.0, abs=1e-12)
    assert sum(check.pruned.values()) == pytest.approx(1.0, abs=1e-12)
    assert check.tv_full < 1e-12
    assert check.tv_pruned < 1e-12


def test_case_two_row_is_the_obstacle_vector() -> None:
    """At an obstacle the joint row has the seven-entry law, with the right marginals."""
    lam = ORACLE_LAMBDA
    cenv = coupled_from_environment(oracle_window("single_long_trap"), lam)
    ob = cenv.pruned.obstacles[0]
    piece = cenv.pieces[0]
    state = (ob.vertex, cenv.lift(ob.vertex), 0)
    targets, probs, case = cenv.kernel.transition(state)
    assert case == CASE_OBSTACLE
    assert math.fsum(probs) == pytest.approx(1.0, abs=1e-14)
    law = dict(zip(targets, probs))
    into_piece = (piece.entrance_x + 1, ob.rail)
    both_right = ((ob.level + 1, ob.rail), into_piece, 1)
    c = (math.exp(lam) - math.exp(-lam)) / (math.exp(lam) + 1)
    assert law[both_right] == pytest.approx(c, rel=1e-14)
    full_right = math.fsum(q for (u, v, w), q in law.items() if v == into_piece)
    assert full_right == pytest.approx(candidate_law(lam)[0], rel=1e-13)
    pruned_right = math.fsum(q for (u, v, w), q in law.items() if u == (ob.level + 1, ob.rail))
    assert pruned_right == pytest.approx(c, rel=1e-13)
    assert sorted(probs) == pytest.approx(sorted(obstacle_transitions(lam, piece.length).probabilities()))


def test_case_one_moves_both_components_identically() -> None:
    """At a fully open vertex away from traps both components take the same step."""
    cenv = coupled_from_environment(oracle_window("single_long_trap"), ORACLE_LAMBDA)
    targets, probs, case = cenv.kernel.transition(((2, 0), (2, 0), 0))
    assert case == CASE_SYNC
    assert all(u == v and w == 0 for u, v, w in targets)
    assert sorted(probs) == pytest.approx(sorted(candidate_law(ORACLE_LAMBDA)))


def test_left_exit_conditioning_tilts_leftwards() -> None:
    """Conditioned to exit left, right/left < γ; conditioned to exit right, no left exit at x = 1."""
    lam = ORACLE_LAMBDA
    cenv = coupled_from_environment(oracle_window("single_long_trap"), lam)
    ob = cenv.pruned.obstacles[0]
    piece = cenv.pieces[0]
    a, y = piece.entrance_x, ob.rail
    targets, probs, case = cenv.kernel.transition((ob.vertex, (a + 1, y), -1))
    assert case == CASE_BACKBONE
    law = {v: q for (_, v, _), q in zip(targets, probs)}
    assert law[(a + 2, y)] / law[(a, y)] < math.exp(-2 * lam)
    targets, _, _ = cenv.kernel.transition((ob.vertex, (a + 1, y), 1))
    assert all(v != (a, y) for _, v, _ in targets)


def test_trap_free_environment_moves_in_lockstep() -> None:
    """Without traps only case 1 fires and both components coincide."""
    env = Environment.from_rows(0, [(1, 1, 1)] * 12 + [(0, 0, 1)], sealed=True)
    cenv = coupled_from_environment(env, 0.3)
    traj = simulate_coupling(cenv, make_generator(61, 0), 2_000)
    assert (traj.cases == CASE_SYNC).all()
    pruned, full = extract_marginals(traj)
    assert np.array_equal(pruned, full)


def test_generic_trap_lengths() -> None:
    """Drawn lengths follow the generic trap law (χ² over 1..6 and a tail bin)."""
    p, n = 0.5, 100_000
    lengths = sample_trap_lengths(p, make_generator(62, 0), n)
    observed = [np.count_nonzero(lengths == m) for m in range(1, 7)]
    observed.append(np.count_nonzero(lengths >= 7))
    expected = [n * trap_length_pmf(m, p) for m in range(1, 7)]
    expected.append(n - sum(expected))
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_reinsertion_inverts_pruning() -> None:
    """Pruning ω̃ gives back the pruned environment, and its traps carry the drawn lengths."""
    lam = 0.1
    cenv = build_coupled_environment(0.8, lam, make_generator(63, 0), extent=400, left_cycles=3)
    again = prune_environment(cenv.full, lam)
    assert again.env == cenv.pruned.env
    assert [o.level for o in again.obstacles] == [o.level for o in cenv.pruned.obstacles]
    inventory = {(t.entrance_x, t.rail, t.length) for t in enumerate_traps(cenv.full)}
    drawn = {(p.entrance_x, p.trap.rail, p.length) for p in cenv.pieces}
    assert drawn <= inventory
    assert [p.length for p in cenv.pieces] == [cenv.lengths[o.level] for o in sorted(cenv.pruned.obstacles, key=lambda o: o.level)]


def test_infeasible_lengths_are_rejected() -> None:
    """A length outside the feasible region aborts the coupling."""
    pruned = prune_environment(oracle_window("single_long_trap"), ORACLE_LAMBDA)
    with pytest.raises(InvalidCouplingParameters):
        reinsert_traps(pruned, {pruned.obstacles[0].level: 3})
    with pytest.raises(InvalidCouplingParameters):
        coupled_from_environment(oracle_window("single_long_trap"), 0.6)


def test_feasibility_table() -> None:
    """L ≤ 2 is feasible at λ = 0.2; nothing is at the critical bias of p = 1/2."""
    lam_c = critical_bias(0.5)
    frame = feasibility_table([ORACLE_LAMBDA, lam_c], max_length=4)
    low = frame[frame["lambda"] == ORACLE_LAMBDA]
    assert low["valid"].tolist() == [True, True, False, False]
    assert (low["max_feasible_L"] == 2).all()
    assert not frame.loc[frame["lambda"] == lam_c, "valid"].any()


def test_domination_and_regeneration_transfer() -> None:
    """On a sampled coupled environment the full walk never out-visits the pruned walk."""
    cenv = build_coupled_environment(0.8, 0.1, make_generator(64, 0), extent=400, left_cycles=3)
    traj = simulate_coupling(cenv, make_generator(64, 1), 20_000)
    pruned, full = extract_marginals(traj)
    assert len(pruned) - 1 == int(np.isin(traj.cases, N1_CASES).sum())
    assert (cenv.piece_index[[cenv.lift((int(x), 0))[0] - cenv.full.x_lo for x in np.unique(pruned[:, 0])]] == -1).all()
    report = check_visit_domination(traj, cenv)
    assert report.checked > 0
    assert report.ok, report.as_dict()
    transfer = regeneration_transfer_check(traj, cenv, delta=10)
    assert transfer.ok, transfer.violations


def test_inconsistent_memory_is_rejected() -> None:
    """Exit-side memory outside a trap piece is an implementation error."""
    cenv = coupled_from_environment(oracle_window("single_long_trap"), ORACLE_LAMBDA)
    with pytest.raises(InconsistentStateError):
        coupled_step(((0, 0), (0, 0), 1), cenv, make_generator(0))


def test_origin_coin_and_window_law() -> None:
    """The coin is a probability; interior draws shift the obstacle to -k with 1 ≤ k ≤ L₀."""
    rng = make_generator(65, 0)
    coin = estimate_origin_coin(0.8, rng, 1_500, N=8)
    assert 0.0 <= coin.heads_probability <= 1.0
    assert coin.n_events > 0 and coin.stderr >= 0.0
    assert all(1 <= k <= m for m, k in coin.tails_table)
    seen = 0
    for _ in range(300):
        cenv = build_coupled_environment(0.8, 0.1, rng, extent=8, law="window_rejection", origin_coin=coin)
        if cenv.origin is None:
            continue
        seen += 1
        ob = cenv.pruned.obstacle_at(0)
        assert ob is not None
        assert cenv.lift(ob.vertex)[0] == -cenv.origin.shift
        if not cenv.origin.heads:
            assert 1 <= cenv.origin.shift <= cenv.origin.length
            assert cenv.piece_index[0 - cenv.full.x_lo] >= 0
    assert seen > 0


def test_origin_coin_is_cached(storage) -> None:
    """A second request for the same p and sample count is served from the cache."""
    first = cached_origin_coin(storage, 0.8, make_generator(66, 0), 600, N=6)
    second = cached_origin_coin(storage, 0.8, make_generator(66, 1), 600, N=6)
    assert second == first


def test_pruned_escape_frequency_exceeds_bound() -> None:
    """Above λ* the empirical escape frequency clears the energy bound."""
    lam = 0.6
    env = sample_environment(build_column_chain(0.5), make_generator(67, 0), x_extent=3_000)
    pruned = prune_environment(env, lam)
    estimate = escape_frequency(pruned, make_generator(67, 1), trials=100, distance=100)
    assert estimate.n > 0
    assert estimate.bound > 0
    assert estimate.consistent
