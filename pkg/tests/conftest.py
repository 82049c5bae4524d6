import os
import pytest  # type: ignore

import numpy as np

from src.db.migrations import EnsureMigrated
from src.db.connection import Database
from typing import Iterator, Any
from src.core.rng import make_generator
from src.services.env import Environment
from src.services.handcrafted import oracle_window
from src.services.persistence import PersistenceService

@pytest.fixture()  # type: ignore
def temp_db_path(tmp_path_factory: Any) -> Iterator[str]:
    # Unique ledger path per test
    tmpdir = tmp_path_factory.mktemp("db")
    db_path = os.path.join(str(tmpdir), "test.db")
    yield db_path
    # SQLite leaves -wal/-shm files next to the ledger
    for suffix in ("", "-wal", "-shm"):
        p = db_path + suffix
        try:
            if os.path.exists(p):
                os.remove(p)
        except Exception:
            pass

@pytest.fixture()  # type: ignore
def db(temp_db_path: str) -> Iterator[Database]:
    EnsureMigrated(temp_db_path)
    database = Database(temp_db_path)
    # create_all must be idempotent after EnsureMigrated
    database.CreateTables()
    yield database
    database.Close()


@pytest.fixture()  # type: ignore
def storage(db: Database) -> PersistenceService:
    """Persistence service bound to the temporary test ledger."""
    return PersistenceService(db)


@pytest.fixture()  # type: ignore
def rng() -> np.random.Generator:
    """Fixed-seed generator; tests needing several streams build their own."""
    return make_generator(20240501, 0)


@pytest.fixture()  # type: ignore
def single_long_trap() -> Environment:
    return oracle_window("single_long_trap")


@pytest.fixture()  # type: ignore
def chained_traps() -> Environment:
    return oracle_window("chained_traps")


@pytest.fixture()  # type: ignore
def three_unit_traps() -> Environment:
    return oracle_window("three_unit_traps")
