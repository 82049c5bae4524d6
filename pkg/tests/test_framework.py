from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest  # type: ignore

from src.commands.framework import (
    ExperimentContext,
    ExperimentDefinition,
    ExperimentResult,
    experiment,
    registered_experiments,
)
from src.core.config import LabSettings
from src.core.events import EventBus
from src.core.experiment_config import ExperimentConfig
from src.core.rng import ReplicaStreams, experiment_key, make_generator
from src.services.reporting import ReportWriter


def _replica_index(payload: int, replica: int) -> int:
    return payload + replica


def test_duplicate_experiment_name_rejected(monkeypatch) -> None:
    monkeypatch.setattr("src.commands.framework.registered_experiments", dict(registered_experiments))

    @experiment("dup-test")
    class First(ExperimentDefinition):
        def run(self, ctx):
            return ExperimentResult()

    with pytest.raises(ValueError, match="registered twice"):

        @experiment("dup-test")
        class Second(ExperimentDefinition):
            def run(self, ctx):
                return ExperimentResult()

    assert First.name == "dup-test"


def test_context_streams_and_events(tmp_path: Path) -> None:
    bus = EventBus()
    seen = []
    bus.SubscribeAll(seen.append)
    cfg = ExperimentConfig(experiment="walk", lam=0.4, replicas=3, seed=12)
    ctx = ExperimentContext(cfg, LabSettings(), ReportWriter(tmp_path), bus, correlation_id="run-9")

    assert ctx.lam == 0.4
    assert ctx.run_replicas(_replica_index, 10) == [10, 11, 12]
    assert [(e.type, e.correlation_id) for e in seen] == [("ReplicaBatchCompleted", "run-9")]
    assert seen[0].payload == {"label": "replicas", "replicas": 3}

    a = ctx.streams(1).walk.random(4)
    b = ReplicaStreams(12, "walk", 1).walk.random(4)
    assert np.array_equal(a, b)


def test_replica_streams_are_distinct() -> None:
    s = ReplicaStreams(5, "walk", 0)
    draws = {tuple(g.random(3)) for g in (s.env, s.walk, s.aux, ReplicaStreams(5, "walk", 1).env, ReplicaStreams(5, "rice", 0).env)}
    assert len(draws) == 5


def test_experiment_key_is_stable() -> None:
    assert experiment_key("walk") == experiment_key("walk")
    assert experiment_key("walk") != experiment_key("rice")
    assert np.array_equal(make_generator(1, 2, 3).random(2), make_generator(1, 2, 3).random(2))
