"""Command-line entrypoint: wires settings, the run ledger, the event bus and the experiments.

    ladderwalk <subcommand> --config FILE [--seed S] [--workers W] [--out DIR]
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Sequence
import argparse
import logging
import sys
import time

from . import __version__
from .commands.framework import ExperimentContext, ExperimentResult, discover_experiments
from .core.config import LabSettings, LoadConfig
from .core.errors import (
    BudgetError,
    ConfigError,
    HorizonError,
    InconsistentStateError,
    InvalidCouplingParameters,
    InvariantViolation,
)
from .core.events import Event, EventBus
from .core.experiment_config import EXPERIMENTS, ExperimentConfig, LoadExperimentConfig, ParseExperimentConfig
from .db.connection import Database
from .db.migrations import EnsureMigrated
from .services.diagnostics import DiagnosticsService
from .services.persistence import PersistenceService
from .services.reporting import ReportWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_COUPLING = 3
EXIT_BUDGET = 4
EXIT_INVARIANT = 5

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def ExitCodeFor(exc: BaseException) -> int:
    """Map an exception raised during a run to the process exit code."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, InvalidCouplingParameters):
        return EXIT_COUPLING
    if isinstance(exc, (BudgetError, HorizonError)):
        return EXIT_BUDGET
    if isinstance(exc, (InvariantViolation, InconsistentStateError)):
        return EXIT_INVARIANT
    return EXIT_UNEXPECTED


def BuildParser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ladderwalk", description="Biased random walk lab on ladder percolation clusters")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="SUBCOMMAND")
    for name in EXPERIMENTS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment")
        cmd.add_argument("--config", required=name != "oracle", help="flat TOML experiment file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--workers", type=int, default=None, help="process count for replicas")
        cmd.add_argument("--out", default=None, help="output directory")
        if name == "oracle":
            cmd.add_argument("--p", type=float, default=None, help="edge retention probability")
            cmd.add_argument("--lambda", dest="lam", type=float, default=None, help="bias")
    return parser


def ResolveExperimentConfig(args: argparse.Namespace, lab: LabSettings) -> ExperimentConfig:
    """Experiment config from the file (or the oracle flags), with command-line overrides applied.

    Raises:
        ConfigError: If the file is missing or invalid, or names another experiment.
    """
    if args.config:
        cfg = LoadExperimentConfig(args.config, default_seed=lab.default_seed)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
    else:
        raw: Dict[str, Any] = {"experiment": args.experiment, "out_dir": lab.output_dir, "workers": lab.workers}
        if getattr(args, "lam", None) is None:
            raise ConfigError("oracle without --config needs --lambda")
        raw["lambda"] = args.lam
        if args.p is not None:
            raw["p"] = args.p
        cfg = ParseExperimentConfig(raw, default_seed=lab.default_seed)
    return cfg.with_overrides(seed=args.seed, workers=args.workers, out_dir=args.out)


def _LogEvent(event: Event) -> None:
    logger.info("event %s %s", event.type, event.payload)


def RunExperiment(cfg: ExperimentConfig, lab: LabSettings, storage: Optional[PersistenceService] = None, bus: Optional[EventBus] = None) -> int:
    """Run one experiment, write its outputs and manifest, and return the exit code."""
    registry = discover_experiments()
    definition = registry.get(cfg.experiment)
    if definition is None:
        logger.error("experiment %s is not registered", cfg.experiment)
        return EXIT_CONFIG
    bus = bus or EventBus()
    writer = ReportWriter(cfg.out_dir)
    run_id = None
    if storage is not None:
        run_id = storage.record_run_started(cfg.experiment, cfg.seed, cfg.as_dict(), out_dir=cfg.out_dir, version=__version__)
    ctx = ExperimentContext(
        config=cfg,
        lab=lab,
        writer=writer,
        bus=bus,
        storage=storage,
        correlation_id=f"run-{run_id}" if run_id is not None else None,
    )
    ctx.emit("ExperimentStarted", {"seed": cfg.seed, "workers": cfg.workers, "out_dir": cfg.out_dir})
    started = time.perf_counter()
    try:
        result: ExperimentResult = definition().run(ctx)
    except Exception as e:
        wall = time.perf_counter() - started
        code = ExitCodeFor(e)
        if code == EXIT_UNEXPECTED:
            logger.exception("experiment %s failed", cfg.experiment)
        else:
            logger.error("experiment %s failed: %s: %s", cfg.experiment, type(e).__name__, e)
        writer.write_manifest(cfg.as_dict(), __version__, cfg.seed, wall, status="failed", extra={"error": f"{type(e).__name__}: {e}"})
        if storage is not None and run_id is not None:
            storage.record_run_completed(run_id, wall, status="failed", error=str(e))
        ctx.emit("ExperimentFailed", {"error": type(e).__name__, "message": str(e), "exit_code": code})
        return code

    wall = time.perf_counter() - started
    summary = dict(result.summary)
    summary["violations"] = list(result.violations)
    writer.write_json("summary.json", summary)
    status = "violations" if result.violations else "ok"
    writer.write_manifest(cfg.as_dict(), __version__, cfg.seed, wall, status=status)
    for line in result.stdout_lines:
        print(line)
    for violation in result.violations:
        logger.error("invariant violation: %s", violation)
    if storage is not None and run_id is not None:
        storage.record_run_completed(run_id, wall, status=status)
    ctx.emit("ExperimentCompleted", {"wall_seconds": round(wall, 3), "violations": len(result.violations)})
    return EXIT_INVARIANT if result.violations else EXIT_OK


def Run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, load settings and run the chosen experiment.

    Example:
        Run(["oracle", "--p", "0.5", "--lambda", "0.3"])
    """
    args = BuildParser().parse_args(list(argv) if argv is not None else None)
    try:
        lab = LoadConfig()
    except RuntimeError as e:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, force=True)
        logger.error("%s", e)
        return EXIT_CONFIG
    logging.basicConfig(level=lab.log_level, format=LOG_FORMAT, force=True)

    try:
        cfg = ResolveExperimentConfig(args, lab)
    except ConfigError as e:
        logger.error("config error: %s", e)
        return EXIT_CONFIG

    EnsureMigrated(lab.database_path)
    db = Database(lab.database_path)
    bus = EventBus()
    storage = PersistenceService(db)
    storage.attach(bus)
    bus.SubscribeAll(_LogEvent)
    DiagnosticsService(bus, db, lab.database_path).run_startup(__version__)
    try:
        return RunExperiment(cfg, lab, storage=storage, bus=bus)
    finally:
        db.Close()


def main() -> None:
    sys.exit(Run())


__all__: List[str] = [
    "EXIT_OK",
    "EXIT_UNEXPECTED",
    "EXIT_CONFIG",
    "EXIT_COUPLING",
    "EXIT_BUDGET",
    "EXIT_INVARIANT",
    "ExitCodeFor",
    "BuildParser",
    "ResolveExperimentConfig",
    "RunExperiment",
    "Run",
    "main",
]


if __name__ == "__main__":
    main()
