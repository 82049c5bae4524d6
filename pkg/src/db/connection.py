from __future__ import annotations

from collections.abc import Mapping, Sequence
from typing import Any, Dict

from sqlalchemy import create_engine, event, func, select
from sqlalchemy.orm import Session, sessionmaker
from sqlalchemy.sql import text

from .models import Base, EstimateCache, EventLog, Run

# ledger tables reported by RowCounts, keyed by their diagnostic label
LEDGER_TABLES = {"runs": Run, "events": EventLog, "estimates": EstimateCache}


def _ledger_pragmas(dbapi_connection, connection_record):  # type: ignore[no-untyped-def]
    cursor = dbapi_connection.cursor()
    try:
        # only the main process writes
        cursor.execute("PRAGMA journal_mode=WAL")
        cursor.execute("PRAGMA synchronous=NORMAL")
    finally:
        cursor.close()


class Database:
    """SQLite handle for the run ledger and the estimate cache."""

    def __init__(self, path: str):
        """Bind an engine to the ledger at ``path``; nothing is opened until first use.

        Args:
            path: Path to SQLite database file.
        """
        self.path = path
        self._engine = create_engine(
            f"sqlite:///{path}",
            connect_args={"check_same_thread": False, "timeout": 30},
            pool_pre_ping=True,
        )
        event.listen(self._engine, "connect", _ledger_pragmas)
        self._session_factory = sessionmaker(bind=self._engine, autoflush=False, expire_on_commit=False)

    def CreateTables(self) -> None:
        """Create the ledger tables that are missing."""
        Base.metadata.create_all(bind=self._engine)

    def GetSession(self) -> Session:
        """Open a session; callers close it."""
        return self._session_factory()

    def RowCounts(self) -> Dict[str, int]:
        """Row count of every ledger table."""
        with self._session_factory() as session:
            return {
                label: int(session.scalar(select(func.count()).select_from(model)) or 0)
                for label, model in LEDGER_TABLES.items()
            }

    def ExecuteRaw(self, sql: str, params: Mapping[str, Any] | Sequence[Any] | None = None) -> None:
        with self._engine.begin() as conn:
            conn.execute(text(sql), params or {})

    def QueryRaw(self, sql: str, params: Mapping[str, Any] | Sequence[Any] | None = None) -> list[tuple[Any, ...]]:
        with self._engine.connect() as conn:
            return [tuple(row) for row in conn.execute(text(sql), params or {})]

    def Close(self) -> None:
        """Dispose of pooled connections so the ledger file can be removed."""
        self._engine.dispose()


__all__ = ["Database", "LEDGER_TABLES"]
