"""Tests for environment samplers and window geometry."""

from __future__ import annotations

import itertools
import math
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from src.core.errors import DomainError, MarginError, RejectionBudgetError
from src.core.rng import make_generator
from src.services.analytic import critical_bias
from src.services.env import (
    BOTH,
    BOTTOM,
    BOTTOM_ONLY,
    TOP,
    TOP_ONLY,
    VERT,
    Environment,
    EnvironmentExtender,
    Provenance,
    build_column_chain,
    crossing_probability,
    find_pre_regeneration_points,
    mirror_columns,
    read_environment,
    sample_cycle,
    sample_environment,
    sample_window_rejection,
    splice_window,
    window_accepts,
    write_environment,
)


def test_column_chain_perron_root_at_half() -> None:
    """At p = 1/2 the Perron root is (3+√5)/8 and Doob rows are stochastic."""
    chain = build_column_chain(0.5)
    assert chain.perron_root == pytest.approx((3 + math.sqrt(5)) / 8, rel=1e-12)
    np.testing.assert_allclose(chain.doob.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(chain.h > 0)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.85])
def test_geometric_trap_ratio_matches_critical_bias(p: float) -> None:
    """One more trap cell costs p²(1-p)/ρ under the Doob chain, which is e^{-2λ_c}."""
    chain = build_column_chain(p)
    assert p * p * (1 - p) / chain.perron_root == pytest.approx(math.exp(-2 * critical_bias(p)), rel=1e-10)


def test_crossing_probability_matches_enumeration() -> None:
    """Transfer-matrix crossing probability equals brute force for n ≤ 4 columns."""
    p = 0.6
    chain = build_column_chain(p)
    for n in range(1, 5):
        total = 0.0
        for codes in itertools.product(range(8), repeat=n):
            env = Environment(0, codes)
            if env.has_crossing():
                ones = sum(bin(c).count("1") for c in codes)
                total += p**ones * (1 - p) ** (3 * n - ones)
        assert crossing_probability(chain, n) == pytest.approx(total, abs=1e-12)


def test_crossing_probability_decays_at_perron_rate() -> None:
    """P(n+1)/P(n) converges to the Perron root."""
    chain = build_column_chain(0.5)
    ratio = crossing_probability(chain, 41) / crossing_probability(chain, 40)
    assert ratio == pytest.approx(chain.perron_root, rel=1e-10)


def test_cycle_starts_with_isolated_top_vertex() -> None:
    """Level 0 of a cycle has a closed vertical and a closed top edge."""
    chain = build_column_chain(0.5)
    rng = make_generator(1, 0)
    for _ in range(50):
        cycle = sample_cycle(chain, rng)
        assert cycle.columns[0] & (TOP | VERT) == 0
        assert cycle.length >= 1


def test_cycle_boundaries_equal_detected_points() -> None:
    """Generated boundaries coincide with pattern-and-cluster detection."""
    for p, seed in ((0.5, 3), (0.8, 4)):
        chain = build_column_chain(p)
        env = sample_environment(chain, make_generator(seed, 0), n_cycles=300, left_cycles=4)
        assert env.provenance is Provenance.CYCLE_STATIONARY
        assert env.cycle_boundaries[0] == 0
        assert len(env.cycle_boundaries) == 300
        assert find_pre_regeneration_points(env) == env.left_boundaries + env.cycle_boundaries


def test_cycle_lengths_uncorrelated() -> None:
    """Consecutive cycle lengths show no rank correlation."""
    chain = build_column_chain(0.5)
    env = sample_environment(chain, make_generator(5, 0), n_cycles=3000)
    lengths = np.diff(env.cycle_boundaries)
    rho, _ = stats.spearmanr(lengths[:-1], lengths[1:])
    assert abs(rho) < 0.1


def test_mirror_columns_reflects_edges() -> None:
    """Horizontals mirror in place, verticals shift by one level."""
    block = bytes([BOTTOM, TOP | BOTTOM | VERT, TOP])
    mirrored = mirror_columns(block)
    assert mirrored == bytes([TOP, TOP | BOTTOM, BOTTOM | VERT])


def test_extender_keeps_boundaries_consistent() -> None:
    """Growing both ends preserves the boundary lists."""
    chain = build_column_chain(0.6)
    env = sample_environment(chain, make_generator(7, 0), n_cycles=5)
    ext = EnvironmentExtender(env, chain, make_generator(7, 1))
    ext.extend_right(env.x_hi + 500)
    ext.extend_left(env.x_lo - 300)
    assert env.x_hi >= 500 and env.x_lo <= -300
    assert find_pre_regeneration_points(env) == env.left_boundaries + env.cycle_boundaries
    assert ext.extensions == 2


def test_extender_rejects_windows() -> None:
    """Handcrafted and unspliced window-rejection environments do not grow."""
    chain = build_column_chain(0.5)
    with pytest.raises(DomainError):
        EnvironmentExtender(Environment(0, [7, 7, 1]), chain, make_generator(0))
    with pytest.raises(DomainError):
        EnvironmentExtender(sample_window_rejection(0.6, 4, make_generator(0)), chain, make_generator(1))


def test_spliced_window_keeps_core_and_grows() -> None:
    """Splicing keeps the columns between the outer pre-regeneration levels and ends on cycles."""
    chain = build_column_chain(0.5)
    rng = make_generator(14, 0)
    spliced = 0
    for _ in range(40):
        window = sample_window_rejection(0.5, 6, rng)
        try:
            env = splice_window(window, chain, rng)
        except MarginError:
            continue
        spliced += 1
        a, b = env.left_boundaries[-1], env.cycle_boundaries[0]
        assert a < 0 < b
        assert all(env.column(x) == window.column(x) for x in range(a, b))
        assert env.provenance is Provenance.WINDOW_REJECTION
        assert set(env.left_boundaries + env.cycle_boundaries) <= set(find_pre_regeneration_points(env))
        assert env.in_cluster((0, 0)) or env.in_cluster((0, 1))
        ext = EnvironmentExtender(env, chain, rng)
        ext.extend_right(env.x_hi + 100)
        ext.extend_left(env.x_lo - 100)
        assert env.in_cluster((0, 0)) or env.in_cluster((0, 1))
    assert spliced >= 3


def test_splice_needs_pre_regeneration_levels_on_both_sides() -> None:
    window = Environment(-3, [7] * 7, provenance=Provenance.WINDOW_REJECTION)
    with pytest.raises(MarginError):
        splice_window(window, build_column_chain(0.5), make_generator(0))


def test_window_rejection_accepts_only_origin_crossings() -> None:
    """Every accepted window crosses and meets the origin column."""
    rng = make_generator(11, 0)
    for _ in range(40):
        env = sample_window_rejection(0.55, 6, rng)
        assert env.x_lo == -6 and env.x_hi == 6
        assert env.has_crossing()
        assert window_accepts(env)


def test_window_rejection_conditional_law() -> None:
    """P(v(0) = 1 | accepted) matches exhaustive enumeration on [-2, 2]."""
    p, N = 0.9, 2
    accept_mass = 0.0
    vertical_mass = 0.0
    for codes in itertools.product(range(8), repeat=2 * N + 1):
        env = Environment(-N, codes)
        if env.has_crossing() and window_accepts(env):
            ones = sum(bin(c).count("1") for c in codes)
            weight = p**ones * (1 - p) ** (3 * (2 * N + 1) - ones)
            accept_mass += weight
            if codes[N] & VERT:
                vertical_mass += weight
    exact = vertical_mass / accept_mass

    rng = make_generator(12, 0)
    n = 4000
    hits = sum(bool(sample_window_rejection(p, N, rng).column(0) & VERT) for _ in range(n))
    se = math.sqrt(exact * (1 - exact) / n)
    assert abs(hits / n - exact) < 4 * se


def test_window_rejection_budget_and_domain() -> None:
    """Tiny budgets at low retention exhaust; bad arguments are rejected."""
    with pytest.raises(RejectionBudgetError):
        sample_window_rejection(0.05, 30, make_generator(0), budget=3)
    with pytest.raises(DomainError):
        sample_window_rejection(0.5, 1, make_generator(0))
    with pytest.raises(DomainError):
        sample_window_rejection(1.0, 5, make_generator(0))


def test_sealed_window_edges_closed() -> None:
    """A sealed window closes edges leaving it; an unsealed one leaves them unknown."""
    sealed = Environment.from_rows(0, [(1, 1, 1), (0, 0, 1)], sealed=True)
    assert sealed.horizontal_open(-1, 0) is False
    assert sealed.horizontal_open(1, 1) is False
    open_env = Environment.from_rows(0, [(1, 1, 1), (1, 0, 1)])
    assert open_env.horizontal_open(-1, 0) is None
    assert open_env.horizontal_open(1, 1) is True
    with pytest.raises(DomainError):
        Environment.from_rows(0, [(1, 1, 1), (1, 0, 1)], sealed=True)


def test_pre_regeneration_needs_margin() -> None:
    """Two-column windows cannot host detection."""
    with pytest.raises(MarginError):
        find_pre_regeneration_points(Environment(0, [7, 7]))


def test_pre_regeneration_skips_left_edge() -> None:
    """A single open bottom rail isolates every top vertex, but x_lo is never reported."""
    assert find_pre_regeneration_points(Environment(0, [BOTTOM] * 4)) == [1, 2, 3]
    assert find_pre_regeneration_points(Environment(-5, [BOTTOM] * 3)) == [-4, -3]


def test_dead_conditioning_has_no_draw_law() -> None:
    """A top-only state cannot survive a closed top edge; the other laws are proper."""
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        chain = build_column_chain(0.5)
    with pytest.raises(DomainError):
        chain.conditional_cdf(TOP_ONLY, 0)
    for state in (TOP_ONLY, BOTTOM_ONLY, BOTH):
        for top in (None, 1) if state == TOP_ONLY else (None, 0, 1):
            cdf = np.asarray(chain.conditional_cdf(state, top))
            assert np.all(np.isfinite(cdf))
            assert cdf[-1] == pytest.approx(1.0)


def test_environment_file_round_trip(tmp_path: Path) -> None:
    """ladderenv files restore columns, provenance, sealing and boundaries."""
    chain = build_column_chain(0.5)
    env = sample_environment(chain, make_generator(21, 0), n_cycles=20, left_cycles=2)
    path = tmp_path / "env.txt"
    write_environment(env, path)
    first = path.read_text().splitlines()[0]
    assert first.startswith("ladderenv v1 p=0.5 x_lo=")
    back = read_environment(path)
    assert back == env
    assert back.cycle_boundaries == env.cycle_boundaries
    assert back.left_boundaries == env.left_boundaries

    sealed = Environment.from_rows(0, [(1, 1, 1), (1, 1, 0), (0, 0, 1)], sealed=True)
    write_environment(sealed, tmp_path / "sealed.txt")
    restored = read_environment(tmp_path / "sealed.txt")
    assert restored.sealed and restored.p is None and restored == sealed
