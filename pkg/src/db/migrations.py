"""Ledger schema: create whatever tables the ORM models declare and the file lacks."""

import logging
import os

from .connection import Database

logger = logging.getLogger(__name__)


def EnsureMigrated(database_path: str) -> None:
    """Create the ledger file (and its directory) with every table present."""
    os.makedirs(os.path.dirname(os.path.abspath(database_path)), exist_ok=True)
    database = Database(database_path)
    try:
        database.CreateTables()
        logger.debug("ledger ready at %s: %s", database_path, database.RowCounts())
    finally:
        database.Close()


__all__ = ["EnsureMigrated"]
