"""Tests for trap enumeration, backbone extraction and pruning."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from src.core.errors import MarginError
from src.core.rng import make_generator
from src.services.analytic import trap_length_pmf
from src.services.env import Environment, build_column_chain, find_pre_regeneration_points, sample_environment
from src.services.handcrafted import oracle_window
from src.services.traps import (
    TrapPiece,
    backbone_vertices,
    enumerate_traps,
    extract_backbone,
    origin_trap_length,
    prune_environment,
    series_log_resistance,
    trap_id_map,
    write_trap_inventory,
)


def test_single_trap_entrance_and_bottom() -> None:
    """The long-trap window holds exactly one bottom-rail trap of length two."""
    traps = enumerate_traps(oracle_window("single_long_trap"))
    assert traps == [TrapPiece(rail=0, entrance_x=3, length=2)]
    trap = traps[0]
    assert trap.entrance == (3, 0)
    assert trap.bottom == (5, 0)
    assert list(trap.piece_range) == [3, 4, 5]
    assert trap.exit_vertex == (6, 1)


def test_chained_and_unit_traps() -> None:
    """Adjacent pieces are both found, in left-to-right order."""
    chained = enumerate_traps(oracle_window("chained_traps"))
    assert [(t.entrance_x, t.rail, t.length) for t in chained] == [(1, 1, 1), (3, 0, 1)]
    units = enumerate_traps(oracle_window("three_unit_traps"))
    assert [(t.entrance_x, t.rail, t.length) for t in units] == [(2, 0, 1), (4, 0, 1), (6, 1, 1)]


def test_all_verticals_open_has_no_traps() -> None:
    """Closed interior verticals are required."""
    env = Environment(0, [7] * 12)
    assert enumerate_traps(env) == []
    assert find_pre_regeneration_points(env) == []


def test_trap_needs_margin() -> None:
    """Two columns cannot host a trap piece."""
    with pytest.raises(MarginError):
        enumerate_traps(Environment(0, [7, 7]))


def test_censored_trap_at_window_edge() -> None:
    """A run still open at the right edge is reported as incomplete only on request."""
    env = Environment.from_rows(0, [(1, 1, 1), (1, 1, 1), (1, 1, 0), (1, 1, 0)])
    assert enumerate_traps(env) == []
    censored = enumerate_traps(env, include_incomplete=True)
    assert len(censored) == 1 and censored[0].complete is False


def test_origin_trap_covers_dead_end_levels_only() -> None:
    """Only the levels a+1..a+m of a trap report its length."""
    env = oracle_window("single_long_trap")
    assert [origin_trap_length(env, x) for x in range(3, 7)] == [None, 2, 2, None]
    assert origin_trap_length(Environment(0, [7] * 6), 2) is None


def test_backbone_of_trap_free_window_is_cluster() -> None:
    """Without traps the backbone keeps every cluster edge."""
    env = Environment(0, [7] * 6 + [4])
    assert extract_backbone(env).columns == env.columns


def test_backbone_removes_dead_end() -> None:
    """The dead-end rail of the trap is cut; the entrance stays."""
    env = oracle_window("single_long_trap")
    backbone = extract_backbone(env)
    assert backbone.horizontal_open(3, 0) is False
    assert backbone.horizontal_open(4, 0) is False
    assert backbone.horizontal_open(3, 1) is True
    vertices = backbone_vertices(env)
    assert (3, 0) in vertices
    assert (4, 0) not in vertices and (5, 0) not in vertices


def test_pre_regeneration_points_on_backbone() -> None:
    """Every pre-regeneration point survives backbone extraction."""
    chain = build_column_chain(0.5)
    env = sample_environment(chain, make_generator(31, 0), n_cycles=200)
    kept = set(backbone_vertices(env))
    for x in find_pre_regeneration_points(env):
        assert (x, 0) in kept


def test_trap_lengths_follow_geometric_law() -> None:
    """Trap lengths in cycle-stationary environments fit the geometric law."""
    p = 0.5
    chain = build_column_chain(p)
    env = sample_environment(chain, make_generator(41, 0), n_cycles=20_000)
    lengths = np.array([t.length for t in enumerate_traps(env) if t.entrance_x >= 0])
    assert len(lengths) > 500
    probs = [trap_length_pmf(m, p) for m in (1, 2, 3)]
    probs.append(1.0 - sum(probs))
    observed = [np.sum(lengths == 1), np.sum(lengths == 2), np.sum(lengths == 3), np.sum(lengths >= 4)]
    expected = [q * len(lengths) for q in probs]
    _, p_value = stats.chisquare(observed, expected)
    assert p_value > 0.001


def test_trap_id_map_marks_dead_end() -> None:
    """Only u_1..u_m carry the trap index."""
    env = oracle_window("single_long_trap")
    ids = trap_id_map(env, enumerate_traps(env))
    marked = {(i // 2, i % 2) for i in np.nonzero(ids >= 0)[0]}
    assert marked == {(4, 0), (5, 0)}


def test_series_resistance_matches_direct_sum() -> None:
    """Merged resistance equals the series sum."""
    lam, a, m = 0.37, 5, 4
    direct = math.fsum(math.exp(-lam * (2 * j + 1)) for j in range(a, a + m + 1))
    assert math.exp(series_log_resistance(a, m, lam)) == pytest.approx(direct, rel=1e-12)


def test_prune_single_trap_window() -> None:
    """The trap piece collapses onto an obstacle with a merged edge."""
    env = oracle_window("single_long_trap")
    pruned = prune_environment(env, 0.2)
    assert pruned.env.width == env.width - 2
    assert len(pruned.obstacles) == 1
    obstacle = pruned.obstacles[0]
    assert obstacle.vertex == (3, 1)
    assert obstacle.entrance == (3, 0)
    assert list(obstacle.piece_range) == [3, 4, 5]
    assert pruned.env.horizontal_open(3, 1) is True
    assert pruned.env.horizontal_open(3, 0) is False
    assert pruned.env.vertical_open(3)
    assert pruned.original_level(4) == 6
    assert pruned.env.sealed


def test_pruned_conductance_drops_by_one_minus_gamma() -> None:
    """Across an obstacle the conductance level shifts by exactly (1-γ)."""
    lam = 0.2
    pruned = prune_environment(oracle_window("three_unit_traps"), lam)
    assert [o.level for o in pruned.obstacles] == [2, 3, 4]
    gamma = math.exp(-2 * lam)
    before = pruned.log_conductance((1, 0), (2, 0)) - lam * 3
    after = pruned.log_conductance((5, 1), (6, 1)) - lam * 11
    assert after - before == pytest.approx(3 * math.log1p(-gamma), rel=1e-12)
    assert pruned.obstacle_count(0) == 0
    assert pruned.obstacle_count(3) == 1
    assert pruned.obstacle_count(10) == 3


def test_pruned_origin_moves_to_covering_obstacle() -> None:
    """When level 0 sits inside a trap piece the obstacle takes level 0."""
    env = Environment.from_rows(-3, [(1, 1, 1), (1, 1, 1), (1, 1, 0), (1, 0, 0), (1, 1, 1), (1, 1, 1), (0, 0, 1)], sealed=True)
    traps = enumerate_traps(env)
    assert [(t.entrance_x, t.length) for t in traps] == [(-2, 2)]
    pruned = prune_environment(env, 0.5)
    assert pruned.obstacles[0].level == 0
    assert pruned.original_level(0) == -2


def test_pruning_is_idempotent() -> None:
    """Pruning a pruned environment finds nothing left to prune."""
    for env in (oracle_window("chained_traps"), sample_environment(build_column_chain(0.5), make_generator(43, 0), n_cycles=300)):
        once = prune_environment(env, 0.9)
        twice = prune_environment(once.env, 0.9)
        assert twice.obstacles == []
        assert twice.env == once.env
        assert len(once.obstacles) == len(enumerate_traps(env))


def test_write_trap_inventory(tmp_path: Path) -> None:
    """The inventory CSV has one row per trap and the documented header."""
    path = tmp_path / "traps.csv"
    write_trap_inventory(oracle_window("three_unit_traps"), path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["index", "x_entrance", "rail", "length", "x_bottom", "complete"]
    assert frame["x_entrance"].tolist() == [2, 4, 6]
