from __future__ import annotations

from src.core.events import EventBus
from src.services.persistence import PersistenceService


def test_run_ledger_lifecycle(storage: PersistenceService) -> None:
    run_id = storage.record_run_started("walk", 7, {"p": 0.5, "horizons": [10, 100]}, out_dir="out", version="0.1.0")

    row = storage.get_run(run_id)
    assert row is not None
    assert row["status"] == "running"
    assert row["config"] == {"horizons": [10, 100], "p": 0.5}

    storage.record_run_completed(run_id, 1.25, status="ok")
    row = storage.get_run(run_id)
    assert row is not None
    assert row["status"] == "ok"
    assert row["wall_seconds"] == 1.25
    assert row["error"] is None


def test_failed_run_keeps_error(storage: PersistenceService) -> None:
    run_id = storage.record_run_started("coupling-check", 1, {})
    storage.record_run_completed(run_id, 0.5, status="failed", error="obstacle vector invalid")
    row = storage.get_run(run_id)
    assert row is not None
    assert (row["status"], row["error"]) == ("failed", "obstacle vector invalid")


def test_list_runs_newest_first_and_filter(storage: PersistenceService) -> None:
    first = storage.record_run_started("walk", 1, {})
    second = storage.record_run_started("rice", 2, {})
    third = storage.record_run_started("walk", 3, {})

    assert [r["id"] for r in storage.list_runs()] == [third, second, first]
    assert [r["seed"] for r in storage.list_runs("walk")] == [3, 1]


def test_unknown_run(storage: PersistenceService) -> None:
    assert storage.get_run(12345) is None
    storage.record_run_completed(12345, 1.0)


def test_attached_bus_logs_events(storage: PersistenceService) -> None:
    bus = EventBus()
    storage.attach(bus)

    bus.Emit("ExperimentStarted", {"seed": 3}, {"experiment": "walk"}, correlation_id="run-1")
    bus.Emit("ExperimentCompleted", {"violations": 0}, correlation_id="run-1")
    bus.Emit("ExperimentStarted", {"seed": 4}, correlation_id="run-2")

    events = storage.list_events("run-1")
    assert [e["event_type"] for e in events] == ["ExperimentStarted", "ExperimentCompleted"]
    assert events[0]["payload"] == {"seed": 3}
    assert len(storage.list_events()) == 3


def test_estimate_cache_roundtrip(storage: PersistenceService) -> None:
    assert storage.get_estimate("origin_coin", 0.5, 1000) is None

    assert storage.put_estimate("origin_coin", 0.5, 0.42, 0.01, 1000, '{"n_events": 10}') is True

    row = storage.get_estimate("origin_coin", 0.5, 1000)
    assert row is not None
    assert row["value"] == 0.42
    assert row["stderr"] == 0.01
    assert row["payload_json"] == '{"n_events": 10}'
    assert storage.get_estimate("origin_coin", 0.5, 2000) is None


def test_estimate_cache_rejects_duplicates(storage: PersistenceService) -> None:
    assert storage.put_estimate("origin_coin", 0.6, 0.3, 0.02, 500)
    assert storage.put_estimate("origin_coin", 0.6, 0.9, 0.02, 500) is False
    row = storage.get_estimate("origin_coin", 0.6, 500)
    assert row is not None and row["value"] == 0.3
