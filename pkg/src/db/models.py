from sqlalchemy import Column, Integer, String, DateTime, Float, Text, UniqueConstraint, Index
from sqlalchemy.orm import declarative_base
from sqlalchemy.sql import text

Base = declarative_base()

class Run(Base):
    """Experiment run ledger."""
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    experiment = Column(String, nullable=False)
    seed = Column(Integer, nullable=False)
    config_json = Column(Text, nullable=False)
    out_dir = Column(String)
    started_at = Column(DateTime, nullable=False, server_default=text('CURRENT_TIMESTAMP'))
    completed_at = Column(DateTime)
    wall_seconds = Column(Float)  # type: ignore[assignment]
    version = Column(String)
    status = Column(String, nullable=False, default='running')
    error = Column(Text)

    __table_args__ = (
        Index('idx_runs_experiment_seed', 'experiment', 'seed'),
    )

class EventLog(Base):
    """Event logging model."""
    __tablename__ = 'events_log'

    id = Column(Integer, primary_key=True, autoincrement=True)
    event_type = Column(String, nullable=False)
    occurred_at = Column(DateTime, nullable=False, server_default=text('CURRENT_TIMESTAMP'))
    correlation_id = Column(String)
    payload_json = Column(Text)
    context_json = Column(Text)

class EstimateCache(Base):
    """Monte Carlo estimates reused across runs (e.g. the origin coin per p)."""
    __tablename__ = 'estimate_cache'

    id = Column(Integer, primary_key=True, autoincrement=True)
    key = Column(String, nullable=False)
    p = Column(Float, nullable=False)  # type: ignore[assignment]
    value = Column(Float, nullable=False)  # type: ignore[assignment]
    stderr = Column(Float, nullable=False)  # type: ignore[assignment]
    n_samples = Column(Integer, nullable=False)
    payload_json = Column(Text)
    created_at = Column(DateTime, nullable=False, server_default=text('CURRENT_TIMESTAMP'))

    __table_args__ = (
        UniqueConstraint('key', 'p', 'n_samples'),
        Index('idx_estimate_cache_key', 'key', 'p'),
    )
