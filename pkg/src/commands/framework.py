"""Experiment definitions, their registry and the per-run context.

Derive an experiment from ExperimentDefinition, decorate it with
``@experiment("name")`` and implement ``run(ctx)``. Modules in this package
are imported by ``discover_experiments`` so the decorators fire; the CLI then
looks experiments up by name.

    @experiment("oracle")
    class OracleExperiment(ExperimentDefinition):
        description = "closed-form values"

        def run(self, ctx):
            ctx.writer.write_csv("oracle.csv", frame)
            return ExperimentResult(summary={...})
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Type, TypeVar
import importlib
import inspect
import logging
import pkgutil

from ..core.config import LabSettings
from ..core.events import Event, EventBus
from ..core.experiment_config import ExperimentConfig
from ..core.rng import ReplicaStreams
from ..services.persistence import PersistenceService
from ..services.reporting import ReportWriter
from ..services.runner import ReplicaTask, run_replicas

logger = logging.getLogger(__name__)

T = TypeVar("T")

# name -> experiment class, filled by @experiment
registered_experiments: Dict[str, Type["ExperimentDefinition"]] = {}


@dataclass
class ExperimentResult:
    """What an experiment hands back to the CLI.

    ``violations`` lists invariant failures found mid-run; a non-empty list
    turns into exit code 5 after all outputs are written.
    """
    summary: Dict[str, Any] = field(default_factory=dict)
    violations: List[str] = field(default_factory=list)
    stdout_lines: List[str] = field(default_factory=list)


@dataclass
class ExperimentContext:
    config: ExperimentConfig
    lab: LabSettings
    writer: ReportWriter
    bus: EventBus
    storage: Optional[PersistenceService] = None
    correlation_id: Optional[str] = None

    @property
    def lam(self) -> float:
        return self.config.resolved_lambda()

    def param(self, key: str, default: Any = None) -> Any:
        return self.config.param(key, default)

    def streams(self, replica: int) -> ReplicaStreams:
        return ReplicaStreams(self.config.seed, self.config.experiment, replica)

    def emit(self, event_type: str, payload: Dict[str, Any]) -> Event:
        return self.bus.Emit(
            event_type,
            payload,
            {"experiment": self.config.experiment},
            correlation_id=self.correlation_id,
        )

    def run_replicas(self, task: ReplicaTask[T], payload: Any, n: Optional[int] = None, label: str = "replicas") -> List[T]:
        """Run ``task`` over replicas with the configured worker count, in replica order."""
        count = self.config.replicas if n is None else int(n)
        results = run_replicas(task, payload, count, workers=self.config.workers)
        self.emit("ReplicaBatchCompleted", {"label": label, "replicas": count})
        return results


class ExperimentDefinition(ABC):
    """Base class for experiments; ``name`` is set by the ``experiment`` decorator."""

    name: str = ""
    description: str = ""

    @abstractmethod
    def run(self, ctx: ExperimentContext) -> ExperimentResult:
        raise NotImplementedError

    @classmethod
    def _discover_from_package(cls, package: str) -> List[Type["ExperimentDefinition"]]:
        """Import every module of ``package`` and return the experiment classes found."""
        try:
            pkg = importlib.import_module(package)
        except Exception as e:  # pragma: no cover - import error path
            logger.error("Failed to import package '%s': %s", package, e)
            return []

        pkg_path_list = getattr(pkg, "__path__", None)
        if not pkg_path_list:
            logger.warning("Package '%s' has no __path__; nothing to discover.", package)
            return []

        found: List[Type[ExperimentDefinition]] = []
        for mod_info in pkgutil.iter_modules(pkg_path_list):
            if mod_info.ispkg or mod_info.name.startswith("_") or mod_info.name == "framework":
                continue
            mod = importlib.import_module(f"{package}.{mod_info.name}")
            for _, obj in inspect.getmembers(mod, inspect.isclass):
                if issubclass(obj, ExperimentDefinition) and not inspect.isabstract(obj) and obj not in found:
                    found.append(obj)
        return found


def experiment(name: str) -> Callable[[Type[ExperimentDefinition]], Type[ExperimentDefinition]]:
    """Register an experiment class under ``name``.

    Raises:
        ValueError: If another class already claimed the name.
    """
    def decorator(cls: Type[ExperimentDefinition]) -> Type[ExperimentDefinition]:
        existing = registered_experiments.get(name)
        if existing is not None and existing is not cls:
            raise ValueError(f"experiment {name!r} registered twice ({existing.__name__}, {cls.__name__})")
        cls.name = name
        registered_experiments[name] = cls
        return cls

    return decorator


def discover_experiments(package: str = "src.commands") -> Dict[str, Type[ExperimentDefinition]]:
    """Import the experiment modules and return the registry."""
    ExperimentDefinition._discover_from_package(package)
    return dict(registered_experiments)


__all__ = [
    "ExperimentResult",
    "ExperimentContext",
    "ExperimentDefinition",
    "experiment",
    "discover_experiments",
    "registered_experiments",
]
