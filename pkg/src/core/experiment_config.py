"""Experiment configuration files.

An experiment file is a flat TOML document of ``key = value`` lines::

    experiment = "critical-speed"
    p = 0.5
    lambda_multiple = 1.0
    horizons = [10000, 100000, 1000000]
    replicas = 200
    seed = 7

Keys outside the common schema are kept in ``ExperimentConfig.params`` and
interpreted by the experiment itself (see docs/config.md).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple
import logging
import math

from dynaconf import Dynaconf  # type: ignore

from .errors import ConfigError

logger = logging.getLogger(__name__)

EXPERIMENTS: Tuple[str, ...] = (
    "oracle",
    "sample-env",
    "trap-law",
    "walk",
    "regen-tails",
    "critical-speed",
    "fluctuations",
    "coupling-check",
    "rice",
    "renewal",
)

_COMMON_KEYS = {
    "experiment",
    "p",
    "lambda",
    "lambda_multiple",
    "horizons",
    "replicas",
    "seed",
    "out_dir",
    "workers",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run."""
    experiment: str  # One of EXPERIMENTS
    p: float = 0.5  # Edge retention probability
    lam: Optional[float] = None  # Bias, when given directly
    lambda_multiple: Optional[float] = None  # Bias as a multiple of the critical bias
    horizons: Tuple[int, ...] = ()  # Step counts or grid points, experiment dependent
    replicas: int = 1  # Replica count
    seed: int = 0  # Root seed of every substream
    out_dir: str = "results"  # Output directory
    workers: int = 1  # Process count
    params: Dict[str, Any] = field(default_factory=dict)  # Experiment-specific keys

    def resolved_lambda(self) -> float:
        """Bias to simulate, resolving ``lambda_multiple`` against the critical bias."""
        if self.lam is not None:
            return float(self.lam)
        if self.lambda_multiple is None:
            raise ConfigError("config defines neither 'lambda' nor 'lambda_multiple'")
        from ..services.analytic import critical_bias

        return float(self.lambda_multiple) * critical_bias(self.p)

    def param(self, key: str, default: Any = None) -> Any:
        """Experiment-specific value, case-insensitive on the key."""
        return self.params.get(key.lower(), default)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
        out_dir: Optional[str] = None,
    ) -> "ExperimentConfig":
        """Apply command-line overrides."""
        changes: Dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if workers is not None:
            if workers < 1:
                raise ConfigError(f"workers must be >= 1, got {workers}")
            changes["workers"] = int(workers)
        if out_dir is not None:
            changes["out_dir"] = str(out_dir)
        return replace(self, **changes) if changes else self

    def as_dict(self) -> Dict[str, Any]:
        """Plain mapping for the manifest echo; worker count is excluded from row provenance."""
        out: Dict[str, Any] = {
            "experiment": self.experiment,
            "p": self.p,
            "lambda": self.lam,
            "lambda_multiple": self.lambda_multiple,
            "horizons": list(self.horizons),
            "replicas": self.replicas,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "workers": self.workers,
        }
        out.update({k: v for k, v in sorted(self.params.items())})
        return out


def _as_horizons(value: Any) -> Tuple[int, ...]:
    """Parse horizons from a list or a CSV string.

    Example:
        _as_horizons([10, 100]) -> (10, 100)
        _as_horizons("1e4, 1e5") -> (10000, 100000)
    """
    if value is None:
        return tuple()
    if isinstance(value, (list, tuple)):
        items = list(value)  # type: ignore
    else:
        items = [x for x in str(value).split(",") if x.strip()]
    out = []
    for item in items:
        number = float(item)
        if not math.isfinite(number) or number <= 0 or number != int(number):
            raise ConfigError(f"horizon must be a positive integer, got {item!r}")
        out.append(int(number))
    return tuple(out)


def ParseExperimentConfig(data: Mapping[str, Any], default_seed: int = 0) -> ExperimentConfig:
    """Validate a raw key/value mapping into an ExperimentConfig.

    Args:
        data: Keys in any case, as produced by a TOML loader.
        default_seed: Seed used when the mapping has none.

    Returns:
        ExperimentConfig: The validated configuration.
    """
    raw = {str(k).lower(): v for k, v in data.items()}
    experiment = str(raw.get("experiment", "")).strip()
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
    try:
        p = float(raw.get("p", 0.5))
        lam = raw.get("lambda")
        multiple = raw.get("lambda_multiple")
        cfg = ExperimentConfig(
            experiment=experiment,
            p=p,
            lam=None if lam is None else float(lam),
            lambda_multiple=None if multiple is None else float(multiple),
            horizons=_as_horizons(raw.get("horizons")),
            replicas=int(raw.get("replicas", 1)),
            seed=int(raw.get("seed", default_seed)),
            out_dir=str(raw.get("out_dir", "results")),
            workers=int(raw.get("workers", 1)),
            params={k: v for k, v in raw.items() if k not in _COMMON_KEYS},
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"malformed experiment config: {e}") from e

    if not 0.0 < cfg.p < 1.0:
        raise ConfigError(f"p must lie in (0, 1), got {cfg.p}")
    if cfg.lam is not None and cfg.lambda_multiple is not None:
        raise ConfigError("give either 'lambda' or 'lambda_multiple', not both")
    if cfg.lam is not None and cfg.lam <= 0:
        raise ConfigError(f"lambda must be positive, got {cfg.lam}")
    if cfg.lambda_multiple is not None and cfg.lambda_multiple <= 0:
        raise ConfigError(f"lambda_multiple must be positive, got {cfg.lambda_multiple}")
    if cfg.replicas < 1:
        raise ConfigError(f"replicas must be >= 1, got {cfg.replicas}")
    if cfg.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg.workers}")
    return cfg


def LoadExperimentConfig(path: str, default_seed: int = 0) -> ExperimentConfig:
    """Read an experiment file with Dynaconf and validate it.

    Args:
        path: Path to the flat TOML file.
        default_seed: Seed used when the file has none.

    Returns:
        ExperimentConfig: The validated configuration.

    Example:
        cfg = LoadExperimentConfig("configs/critical_speed.toml")
    """
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        loader = Dynaconf(  # type: ignore
            settings_files=[str(path)],
            environments=False,
            envvar_prefix="LADDERWALK_EXPERIMENT",
            load_dotenv=False,
        )
        data = loader.as_dict()  # type: ignore
    except Exception as e:
        raise ConfigError(f"failed to parse config {path}: {e}") from e
    logger.debug("Loaded experiment config %s with keys %s", path, sorted(data))
    return ParseExperimentConfig(data, default_seed=default_seed)


__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ParseExperimentConfig",
    "LoadExperimentConfig",
]
