#!/usr/bin/env python3
"""
Ionization lab command line

Usage:
    ionization-lab eigen     [--config PATH] [--out DIR]
    ionization-lab propagate [--config PATH] [--out DIR] [--skip-dt-check]
    ionization-lab scan      [--config PATH] [--out DIR] [--workers N] [--resume]
    ionization-lab adk       [--config PATH] [--out DIR]
    ionization-lab delay     [--config PATH] [--out DIR] [--input CSV] [--levels 0.5,0.8]
    ionization-lab converge  [--config PATH] [--out DIR] --parameter P --values V1,V2,...

Exit codes: 0 ok, 2 configuration or input error, 3 unstable propagation,
4 every scan cell failed.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config.settings import RunConfig, load_config, parse_time
from .core.adk import AdkParams, adk_contours
from .core.atom import bound_population, build_projector
from .core.fields import keldysh_gamma
from .core.simulation import SimulationContext, calibration_shift, context_for, resolve_potential
from .models import RunRecord
from .processors.convergence import convergence_study
from .processors.rates import delay_report
from .processors.scan import ScanService, scan_axes
from .storage import DiagnosticsStream, ResultStorage, ScanJournal, read_scan
from .utils import (
    CalibrationError,
    ConfigError,
    IonizationLabError,
    PropagationUnstableError,
    ScanFailedError,
    StorageError,
    configure_logging,
)

logger = logging.getLogger("ionization_lab.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_SCAN_FAILED = 4

# Relative probability change at dt/2 above which a run is reported as time-step limited
DT_CHECK_TOLERANCE = 0.01


def _potential_metadata(config: RunConfig, potential, grid) -> dict:
    metadata = {"potential": potential.describe()}
    if config.potential.kind == "yukawa":
        metadata["yukawa_amplitude"] = potential.amplitude
        metadata["yukawa_calibrated"] = config.potential.calibrate
        if config.potential.calibrate:
            metadata["yukawa_half_step_shift"] = calibration_shift(grid, potential)
    return metadata


def _dt_check(config: RunConfig, context: SimulationContext, pulse, probability: float) -> dict:
    """Repeat a propagation at dt/2 and report the change of P"""
    half = config.with_overrides({"propagation.dt": config.propagation.dt / 2})
    refined = context.probability(context.run(pulse, half.propagation))
    change = abs(refined - probability) / probability if probability > 0 else None
    if change is not None and change > DT_CHECK_TOLERANCE:
        logger.warning(f"P changes by {change:.2%} at dt={half.propagation.dt}; the time step is too coarse")
    else:
        logger.info(f"dt/2 spot check: P={refined:.12e}")
    return {"dt": half.propagation.dt, "probability": refined, "relative_change": change}


def cmd_eigen(config: RunConfig, storage: ResultStorage, args: argparse.Namespace) -> int:
    """Bound-state energies for every ℓ ≤ L_b"""
    grid = config.grid.to_grid()
    potential = resolve_potential(grid, config.potential)
    projector = build_projector(grid, potential, config.projector.l_b, config.projector.max_n)
    states = projector.all_states()
    storage.write_eigen(states, config.fingerprint, extra=_potential_metadata(config, potential, grid))
    if states:
        logger.info(f"Lowest energy {min(s.energy for s in states):.10f} a.u. from {len(states)} bound states")
    else:
        logger.warning("Potential supports no bound states on this grid")
    return EXIT_OK


def cmd_propagate(config: RunConfig, storage: ResultStorage, args: argparse.Namespace) -> int:
    """One propagation, kicked when signal.tau is configured, with a dt/2 spot check unless skipped"""
    signal = config.signal.kick() if config.signal.tau is not None else None
    pulse = config.pulse.to_pulse(signal)
    context = context_for(config)
    gamma = keldysh_gamma(pulse.omega, pulse.peak_field, -context.ground_energy)
    logger.info(f"Keldysh parameter {gamma:.4f} for E0={pulse.peak_field}, omega={pulse.omega}")

    diagnostics = None
    if config.propagation.diagnostics_every > 0:
        diagnostics = DiagnosticsStream(storage.path("diagnostics.csv"), config.fingerprint, context.projector)
    try:
        result = context.run(pulse, config.propagation, observer=diagnostics, progress=args.progress)
        probability = context.probability(result)
        dt_check = None if args.skip_dt_check else _dt_check(config, context, pulse, probability)
    except PropagationUnstableError as e:
        storage.write_record({
            "error": str(e),
            "norm_drift": e.norm_drift,
            "time": e.time,
            "fingerprint": config.fingerprint,
        })
        raise
    finally:
        if diagnostics is not None:
            diagnostics.close()

    record = RunRecord(
        probability=probability,
        final_norm=result.final_norm,
        bound_population=bound_population(result.wavefunction, context.projector),
        boundary_population=result.boundary_population,
        valid=result.valid,
        n_steps=result.n_steps,
        wall_time=result.wall_time,
        fingerprint=config.fingerprint,
        metadata={
            **_potential_metadata(config, context.potential, context.grid),
            "keldysh_gamma": gamma,
            "signal_tau": None if signal is None else signal.tau,
            "dt_check": dt_check,
        },
    )
    storage.write_record(record.to_dict())
    logger.info(f"P = {record.probability:.12e}, norm = {record.final_norm:.15f}")
    return EXIT_OK


def cmd_scan(config: RunConfig, storage: ResultStorage, args: argparse.Namespace) -> int:
    """δP over the configured (E₀, τ) grid"""
    grid = config.grid.to_grid()
    potential = resolve_potential(grid, config.potential)
    journal_axes = scan_axes(config)
    journal = ScanJournal(storage.path("scan.journal.jsonl"), config.fingerprint, *journal_axes)
    service = ScanService(config, workers=args.workers, journal=journal, resume=args.resume,
                          progress=args.progress)
    result = asyncio.run(service.run(*journal_axes))
    stats = service.get_stats()
    storage.write_scan(result, "scan.csv", extra={**_potential_metadata(config, potential, grid), "stats": stats})
    if result.succeeded() == 0:
        raise ScanFailedError(f"all {result.delta_p.size} scan cells failed")
    return EXIT_OK


def cmd_adk(config: RunConfig, storage: ResultStorage, args: argparse.Namespace) -> int:
    """ADK reference surface in the scan CSV schema"""
    e0_values, tau_values = scan_axes(config)
    params = AdkParams(ionization_potential=config.potential.target_ip)
    surface = adk_contours(
        e0_values, tau_values, config.pulse.to_pulse(),
        alpha=config.signal.alpha, epsilon=config.signal.epsilon,
        params=params, fingerprint=config.fingerprint,
    )
    storage.write_scan(surface, "adk.csv")
    return EXIT_OK


def cmd_delay(config: RunConfig, storage: ResultStorage, args: argparse.Namespace) -> int:
    """Contour-midpoint delays of an existing scan or ADK surface"""
    source = Path(args.input) if args.input else storage.path("scan.csv")
    fallback = {
        "alpha": config.signal.alpha,
        "epsilon": config.signal.epsilon,
        "omega": config.pulse.omega,
        "n_cycles": config.pulse.n_cycles,
    }
    surface = read_scan(source, fallback)
    levels = _parse_levels(args.levels) if args.levels else list(config.scan.levels)
    report = delay_report(surface, levels)
    storage.write_delay(report, surface.fingerprint)
    logger.info(
        f"Field peak at {report.field_peak_time:.6f} a.u.; max |delay| {report.max_abs_delay():.4g} a.u. "
        f"(tau step {report.tau_step:.4g} a.u.), {len(report.errors())} row/level error(s)"
    )
    return EXIT_OK


def cmd_converge(config: RunConfig, storage: ResultStorage, args: argparse.Namespace) -> int:
    """Observable across values of one numerical parameter"""
    if not args.parameter or not args.values:
        raise ConfigError("--parameter and --values are required", key="--parameter")
    period = config.pulse.period
    try:
        values = [parse_time(item, period) for item in args.values.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError(str(e), key="--values")
    points = convergence_study(config, args.parameter, values, progress=args.progress)
    storage.write_convergence(points, config.fingerprint, name=f"convergence_{args.parameter}.csv")
    return EXIT_OK


COMMANDS = {
    "eigen": cmd_eigen,
    "propagate": cmd_propagate,
    "scan": cmd_scan,
    "adk": cmd_adk,
    "delay": cmd_delay,
    "converge": cmd_converge,
}


def _parse_levels(text: str) -> List[float]:
    try:
        levels = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError(str(e), key="--levels")
    if not levels or any(not 0 < level < 1 for level in levels):
        raise ConfigError("levels must lie in (0, 1)", key="--levels")
    return levels


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Configuration file (dotted key=value lines)")
    common.add_argument("--out", help="Output directory (overrides run.output_dir)")
    common.add_argument("--workers", type=int, help="Worker processes for scans (overrides run.workers)")
    common.add_argument("--resume", action="store_true", help="Resume a scan from its journal")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: LOG_LEVEL or INFO)")
    common.add_argument("--quiet", action="store_true", help="Disable progress bars")

    parser = argparse.ArgumentParser(
        prog="ionization-lab",
        description="Delta-kick first variation of strong-field ionization probabilities",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("eigen", parents=[common], help="Bound-state spectrum per angular channel")
    propagate = subparsers.add_parser("propagate", parents=[common], help="Single propagation and ionization probability")
    propagate.add_argument("--skip-dt-check", action="store_true", help="Do not repeat the run at dt/2")
    subparsers.add_parser("scan", parents=[common], help="First-variation surface over (E0, tau)")
    subparsers.add_parser("adk", parents=[common], help="Quasistatic reference surface")
    delay = subparsers.add_parser("delay", parents=[common], help="Contour-midpoint delays of a surface")
    delay.add_argument("--input", help="Scan CSV (default: <out>/scan.csv)")
    delay.add_argument("--levels", help="Comma-separated relative contour levels")
    converge = subparsers.add_parser("converge", parents=[common], help="Convergence study of one parameter")
    converge.add_argument("--parameter", choices=["dr", "dt", "Lmax", "Lb", "eps", "alpha"])
    converge.add_argument("--values", help="Comma-separated values (time values accept T notation)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function for command-line usage"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    args.progress = not args.quiet and sys.stderr.isatty()

    try:
        config = load_config(args.config)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("must be at least 1", key="--workers")
        storage = ResultStorage(args.out or config.run.output_dir)
        return COMMANDS[args.command](config, storage, args)
    except (ConfigError, StorageError, CalibrationError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_CONFIG
    except PropagationUnstableError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_UNSTABLE
    except ScanFailedError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_SCAN_FAILED
    except IonizationLabError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
