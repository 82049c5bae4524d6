import os
import platform
import shutil
from typing import Dict, Any
import logging

import numpy as np
from ..core.events import EventBus
from ..db.connection import Database
from ..db.models import Run

logger = logging.getLogger(__name__)


class DiagnosticsService:
    """Snapshot of the lab's runtime state (ledger health, counts, disk space)."""
    def __init__(self, bus: EventBus, db: Database, db_path: str):
        self.bus = bus
        self.db = db
        self.db_path = db_path
        self.last_results: Dict[str, Any] | None = None

    def run_startup(self, version: str) -> Dict[str, Any]:
        results = self.collect()
        self.bus.Emit("DiagnosticsCompleted", {"version": version, "results": results}, {})
        return results

    def collect(self) -> Dict[str, Any]:
        results: Dict[str, Any] = {
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
        session = self.db.GetSession()
        try:
            session.query(Run).first()
            results["database"] = {"status": "ok"}
        except Exception as e:
            results["database"] = {"status": "error", "error": str(e)}
        finally:
            session.close()

        try:
            _, _, free = shutil.disk_usage(".")
            results["disk"] = {"free_mb": round(free / 1024 / 1024, 2)}
        except OSError as e:
            results["disk_error"] = str(e)

        storage: Dict[str, Any] = {"db_path": self.db_path}
        if self.db_path and self.db_path != ":memory:" and os.path.exists(self.db_path):
            storage["db_size_mb"] = round(os.path.getsize(self.db_path) / 1024 / 1024, 3)
        results["storage"] = storage

        try:
            results["counts"] = self.db.RowCounts()
        except Exception as e:
            logger.warning("diagnostics count query failed: %s", e)
            results["counts_error"] = str(e)

        self.last_results = results
        return results


__all__ = ["DiagnosticsService"]
