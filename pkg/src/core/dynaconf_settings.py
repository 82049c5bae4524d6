from dataclasses import dataclass
from typing import Any, Optional

from dynaconf import Dynaconf  # type: ignore

settings: Dynaconf = Dynaconf(  # type: ignore
    settings_files=["settings.toml", ".secrets.toml"],
    environments=True,                # allow [default], [development], [testing]
    envvar_prefix="LADDERWALK",       # env vars like LADDERWALK_DB_PATH etc.
    load_dotenv=True,                 # read .env file if present
    env_switcher="DYNACONF_ENV",      # switch env with DYNACONF_ENV=testing
)


@dataclass(frozen=True)
class LabSettings:
    """Lab-wide defaults shared by every experiment.

    Experiment files override the run-specific parts (seed, workers, output
    directory); budgets and caps are only read from here.
    """
    database_path: str = "ladderwalk.db"  # SQLite ledger and estimate cache
    output_dir: str = "results"  # Default root for experiment outputs
    default_seed: int = 20240501  # Seed used when a config omits one
    workers: int = 1  # Default process count for replica scheduling
    certificate_delta: int = 200  # Regeneration certificate margin
    cycle_cap: int = 1_000_000  # Column cap for a single cycle draw
    rejection_budget: int = 100_000  # Attempts before a rejection sampler gives up
    exact_step_cap: int = 16  # Largest k accepted by exact kernel powers
    direct_sum_cap: int = 10_000  # Largest n0 for the high-precision alternating sum
    residue_half_width: int = 20  # K in the truncated residue sum
    origin_coin_samples: int = 1_000_000  # Window draws behind the origin coin estimate
    origin_coin_half_width: int = 8  # Window half-width for origin coin draws
    walk_step_cap: int = 10_000_000  # Step cap for a single increment walk
    log_level: str = "INFO"  # Root logging level for the CLI


def _ParseLogLevel(value: Optional[Any]) -> str:
    """Normalize a log level given as name or number.

    Args:
        value: None, a level name (any case) or a numeric level.

    Returns:
        str: Upper-case level name understood by ``logging``.

    Example:
        _ParseLogLevel("debug") -> "DEBUG"
        _ParseLogLevel(30) -> "WARNING"
    """
    if value is None or value == "":
        return "INFO"
    if isinstance(value, int):
        return {10: "DEBUG", 20: "INFO", 30: "WARNING", 40: "ERROR", 50: "CRITICAL"}.get(value, "INFO")
    name = str(value).strip().upper()
    if name not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ValueError(f"Unknown log level: {value}")
    return name


def GetSettings(reload: bool = False) -> LabSettings:
    """
    Return LabSettings built from Dynaconf's settings.

    Args:
        reload: Whether to reload files and environment (useful in tests). Defaults to False.

    Returns:
        LabSettings: Settings instance with loaded values.

    Example:
        lab = GetSettings()
        lab = GetSettings(reload=True)
    """
    try:
        if reload:
            settings.reload()  # type: ignore

        return LabSettings(
            database_path=str(settings.get("DB_PATH", "ladderwalk.db")),  # type: ignore
            output_dir=str(settings.get("OUTPUT_DIR", "results")),  # type: ignore
            default_seed=int(settings.get("DEFAULT_SEED", 20240501)),  # type: ignore
            workers=max(1, int(settings.get("WORKERS", 1))),  # type: ignore
            certificate_delta=int(settings.get("CERTIFICATE_DELTA", 200)),  # type: ignore
            cycle_cap=int(settings.get("CYCLE_CAP", 1_000_000)),  # type: ignore
            rejection_budget=int(settings.get("REJECTION_BUDGET", 100_000)),  # type: ignore
            exact_step_cap=int(settings.get("EXACT_STEP_CAP", 16)),  # type: ignore
            direct_sum_cap=int(settings.get("DIRECT_SUM_CAP", 10_000)),  # type: ignore
            residue_half_width=int(settings.get("RESIDUE_HALF_WIDTH", 20)),  # type: ignore
            origin_coin_samples=int(settings.get("ORIGIN_COIN_SAMPLES", 1_000_000)),  # type: ignore
            origin_coin_half_width=int(settings.get("ORIGIN_COIN_HALF_WIDTH", 8)),  # type: ignore
            walk_step_cap=int(settings.get("WALK_STEP_CAP", 10_000_000)),  # type: ignore
            log_level=_ParseLogLevel(settings.get("LOG_LEVEL", "INFO")),  # type: ignore
        )
    except Exception as e:
        raise RuntimeError(f"Failed to load settings: {e}") from e
