from __future__ import annotations
from typing import Optional, Any, Dict, List, cast
from datetime import datetime, timezone
import json
import logging
from sqlalchemy.orm import Session
from sqlalchemy.exc import IntegrityError
from ..core.events import Event, EventBus
from ..db.connection import Database
from ..db.models import Run, EventLog, EstimateCache

logger = logging.getLogger(__name__)


class PersistenceService:
    """Run ledger, lifecycle event log and Monte Carlo estimate cache."""

    def __init__(self, db: Database):
        self.db = db

    def record_run_started(
        self,
        experiment: str,
        seed: int,
        config: Dict[str, Any],
        out_dir: str | None = None,
        version: str | None = None,
    ) -> int:
        """Insert a ledger row in status 'running' and return its id."""
        session: Session = self.db.GetSession()
        try:
            run = Run(
                experiment=experiment,
                seed=int(seed),
                config_json=json.dumps(config, sort_keys=True, default=str),
                out_dir=out_dir,
                version=version,
                status="running",
            )
            session.add(run)
            session.commit()
            return cast(int, run.id)
        finally:
            session.close()

    def record_run_completed(
        self,
        run_id: int,
        wall_seconds: float,
        status: str = "ok",
        error: str | None = None,
    ) -> None:
        """Close a ledger row with its wall time and final status."""
        session: Session = self.db.GetSession()
        try:
            run = session.query(Run).filter(Run.id == run_id).first()
            if run is None:
                logger.warning("record_run_completed: unknown run id %s", run_id)
                return
            run.completed_at = datetime.now(timezone.utc).replace(tzinfo=None)  # type: ignore[assignment]
            run.wall_seconds = float(wall_seconds)  # type: ignore[assignment]
            run.status = status  # type: ignore[assignment]
            run.error = error  # type: ignore[assignment]
            session.commit()
        finally:
            session.close()

    def get_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        session: Session = self.db.GetSession()
        try:
            run = session.query(Run).filter(Run.id == run_id).first()
            if run is None:
                return None
            return {
                "id": cast(int, run.id),
                "experiment": run.experiment,
                "seed": run.seed,
                "config": json.loads(str(run.config_json)),
                "out_dir": run.out_dir,
                "status": run.status,
                "version": run.version,
                "wall_seconds": run.wall_seconds,
                "error": run.error,
            }
        finally:
            session.close()

    def list_runs(self, experiment: str | None = None) -> List[Dict[str, Any]]:
        """Ledger rows, newest first, optionally for one experiment."""
        session: Session = self.db.GetSession()
        try:
            query = session.query(Run)
            if experiment is not None:
                query = query.filter(Run.experiment == experiment)
            rows = query.order_by(Run.id.desc()).all()
            return [
                {
                    "id": cast(int, r.id),
                    "experiment": r.experiment,
                    "seed": r.seed,
                    "status": r.status,
                    "wall_seconds": r.wall_seconds,
                }
                for r in rows
            ]
        finally:
            session.close()

    def log_event(self, event: Event) -> None:
        """Append a lifecycle event to ``events_log``."""
        session: Session = self.db.GetSession()
        try:
            session.add(
                EventLog(
                    event_type=event.type,
                    occurred_at=event.timestamp.replace(tzinfo=None),
                    correlation_id=event.correlation_id,
                    payload_json=json.dumps(event.payload, sort_keys=True, default=str),
                    context_json=json.dumps(event.context, sort_keys=True, default=str),
                )
            )
            session.commit()
        finally:
            session.close()

    def list_events(self, correlation_id: str | None = None) -> List[Dict[str, Any]]:
        session: Session = self.db.GetSession()
        try:
            query = session.query(EventLog)
            if correlation_id is not None:
                query = query.filter(EventLog.correlation_id == correlation_id)
            return [
                {
                    "id": cast(int, e.id),
                    "event_type": e.event_type,
                    "correlation_id": e.correlation_id,
                    "payload": json.loads(str(e.payload_json)) if e.payload_json else {},
                }
                for e in query.order_by(EventLog.id).all()
            ]
        finally:
            session.close()

    def attach(self, bus: EventBus) -> None:
        """Subscribe ``log_event`` to every event on ``bus``."""
        bus.SubscribeAll(self.log_event)

    def get_estimate(self, key: str, p: float, n_samples: int) -> Optional[Dict[str, Any]]:
        """Cached estimate for (key, p, n_samples), or None."""
        session: Session = self.db.GetSession()
        try:
            row = session.query(EstimateCache).filter(
                EstimateCache.key == key,
                EstimateCache.p == float(p),
                EstimateCache.n_samples == int(n_samples),
            ).first()
            if row is None:
                return None
            return {
                "key": row.key,
                "p": row.p,
                "value": row.value,
                "stderr": row.stderr,
                "n_samples": row.n_samples,
                "payload_json": row.payload_json,
            }
        finally:
            session.close()

    def put_estimate(
        self,
        key: str,
        p: float,
        value: float,
        stderr: float,
        n_samples: int,
        payload_json: str | None = None,
    ) -> bool:
        """Store an estimate; returns False if one already exists for (key, p, n_samples)."""
        session: Session = self.db.GetSession()
        try:
            session.add(
                EstimateCache(
                    key=key,
                    p=float(p),
                    value=float(value),
                    stderr=float(stderr),
                    n_samples=int(n_samples),
                    payload_json=payload_json,
                )
            )
            session.commit()
            logger.info("cached estimate %s at p=%.6g (%d samples)", key, p, n_samples)
            return True
        except IntegrityError:
            session.rollback()
            return False
        finally:
            session.close()


__all__ = ["PersistenceService"]
