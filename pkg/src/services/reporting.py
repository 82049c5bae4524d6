"""Output tables, JSON summaries and the run manifest.

Every file an experiment writes goes through ReportWriter, so the manifest's
file list is complete and the float formatting is identical everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
import json
import logging
import math
import platform

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"
TRAJECTORY_COLUMNS = ["replica", "n", "X_n", "min_x", "time_in_traps", "horizon_reason"]


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into strict JSON values."""
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def DumpsSorted(obj: Any) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class ReportWriter:
    """Writes tables into one output directory and remembers what it wrote."""
    out_dir: Path
    files: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        target = self.out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def _remember(self, name: str) -> None:
        if name not in self.files:
            self.files.append(name)

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """CSV with a header row, no index and round-trip float precision."""
        target = self.path(name)
        frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        self._remember(name)
        logger.debug("wrote %s (%d rows)", target, len(frame))
        return target

    def write_json(self, name: str, obj: Any) -> Path:
        target = self.path(name)
        target.write_text(DumpsSorted(obj), encoding="utf-8")
        self._remember(name)
        return target

    def register(self, name: str) -> None:
        """Record a file written by another routine (e.g. an environment dump)."""
        if not self.path(name).exists():
            raise FileNotFoundError(f"{name} was not written under {self.out_dir}")
        self._remember(name)

    def write_manifest(
        self,
        config: Mapping[str, Any],
        version: str,
        seed: int,
        wall_seconds: float,
        status: str = "ok",
        extra: Optional[Mapping[str, Any]] = None,
    ) -> Path:
        """``manifest.json``: config echo, code version, seed, wall time and the file list."""
        manifest: Dict[str, Any] = {
            "config": dict(config),
            "version": version,
            "seed": int(seed),
            "wall_seconds": float(wall_seconds),
            "status": status,
            "files": sorted(self.files),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
        }
        if extra:
            manifest.update(extra)
        target = self.path(MANIFEST_NAME)
        target.write_text(DumpsSorted(manifest), encoding="utf-8")
        return target


def trajectory_summary_frame(rows: Iterable[Mapping[str, Any]]) -> pd.DataFrame:
    """Trajectory summary table (replica, n, X_n, min_x, time_in_traps, horizon_reason), sorted."""
    frame = pd.DataFrame(list(rows), columns=TRAJECTORY_COLUMNS)
    if frame.empty:
        return frame
    return frame.sort_values(["replica", "n"], kind="mergesort").reset_index(drop=True)


def frame_from_records(records: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(list(records), columns=list(columns))


def bootstrap_mean_ci(
    values: Sequence[float], rng: np.random.Generator, n_boot: int = 2000, confidence: float = 0.99
) -> Tuple[float, float]:
    """Percentile bootstrap interval for the mean; (nan, nan) below two values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return (math.nan, math.nan)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    means = values[idx].mean(axis=1)
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail])
    return float(lo), float(hi)


__all__ = [
    "FLOAT_FORMAT",
    "MANIFEST_NAME",
    "TRAJECTORY_COLUMNS",
    "DumpsSorted",
    "ReportWriter",
    "trajectory_summary_frame",
    "frame_from_records",
    "bootstrap_mean_ci",
]
