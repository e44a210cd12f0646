#!/usr/bin/env python
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from . import __about__
from .adaptive import AlphaController, exact_alpha_scan
from .config import ModelRegistry, SystemSetup, build_system
from .errors import AlphaVmcError, CheckpointError, ConfigError, OracleOnlyError, SizeMismatchError
from .estimators import reference_distributions
from .infidelity import TargetState, exact_infidelity, quench_target, run_compression
from .logging_config import get_logger, setup_logging
from .operators import ground_state
from .optimizer import exact_energy, run_ground_state
from .samplers import BatchSource
from .schema import RunConfig, ScanConfig, load_config
from .storage import RunStorage, load_checkpoint

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORT = 2

# Configuration-class failures; everything else from the package aborts with 2
CONFIG_ERRORS = (ConfigError, CheckpointError, OracleOnlyError, ValidationError)

SCAN_FIELDS = ("label", "alpha", "L_IS", "ess", "rho0")


def parse_alphas(text: str) -> List[float]:
    try:
        alphas = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"--alphas expects comma separated numbers: {e}") from e
    if not alphas or any(a < 0 for a in alphas):
        raise ConfigError("--alphas needs at least one non-negative value")
    return alphas


def load_model(path, setup: Optional[SystemSetup] = None):
    model = ModelRegistry.from_dict(load_checkpoint(path))
    if setup is not None:
        try:
            setup.check_model(model)
        except SizeMismatchError as e:
            raise CheckpointError(f"checkpoint {path} does not fit the system: {e}") from e
    return model


def _mixture_ess(p: np.ndarray, q: np.ndarray) -> Optional[float]:
    support = p > 0
    if np.any(q[support] <= 0):
        return None
    return float(1.0 / np.sum(p[support] ** 2 / q[support]))


def snr_scan_rows(model, setup: SystemSetup, alphas: Sequence[float], threads: Optional[int] = None):
    """Exact L_IS along q_alpha plus the Born and optimal-distribution reference rows."""
    if not setup.enumerable:
        raise OracleOnlyError(f"snr-scan needs an enumerable system, got {setup.n_sites} sites")
    basis = setup.basis
    op = setup.operator
    rows: List[Dict[str, Any]] = []
    for alpha, report in zip(alphas, exact_alpha_scan(model, op, basis, alphas, threads)):
        rows.append({"label": "q_alpha", "alpha": float(alpha), "L_IS": report.L_IS, "ess": report.ess, "rho0": report.rho0})

    born = exact_alpha_scan(model, op, basis, [2.0], threads)[0]
    rows.append({"label": "born", "alpha": 2.0, "L_IS": born.L_IS, "ess": born.ess, "rho0": born.rho0})

    refs = reference_distributions(model, op, basis, threads)
    for label, q in (("q_opt_is", refs.q_opt_is_mixture), ("q_opt_snis", refs.q_opt_snis_mixture)):
        rows.append({"label": label, "alpha": None, "L_IS": float(np.mean(refs.snr(q))), "ess": _mixture_ess(refs.p, q), "rho0": None})
    envelope = refs.snr(refs.q_opt_per_component)
    rows.append({"label": "q_opt_envelope", "alpha": None, "L_IS": float(np.mean(envelope)), "ess": None, "rho0": None})
    return rows


class AlphaVmcCLI:
    """Batch front-end for ground-state, compression and SNR-scan runs"""

    def __init__(self):
        self.storage: Optional[RunStorage] = None

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        parser = self._create_parser()
        args = parser.parse_args(argv)

        console_logging = bool(args.log_level) and not args.quiet
        setup_logging(level=args.log_level, log_file=args.log_file, console=console_logging)
        logger.debug(f"CLI arguments: {vars(args)}")

        if not hasattr(args, "func"):
            parser.print_help()
            return EXIT_CONFIG
        return args.func(args)

    def _create_parser(self):
        parser = argparse.ArgumentParser(
            prog="alphavmc",
            description="Variational Monte Carlo with adaptive overdispersed sampling",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Examples:
  alphavmc gs --config configs/heisenberg_2x2_exact.json
  alphavmc infid --config configs/tfim_3x3_quench.json --output runs/quench
  alphavmc snr-scan --config configs/tfim_snr_scan.json --alphas 0.5,1.0,1.5,2.0

Exit codes: 0 success, 1 configuration error, 2 runtime abort.
            """,
        )
        parser.add_argument(
            "-v",
            "--version",
            action="version",
            version=f"%(prog)s {__about__.__version__}",
        )
        parser.add_argument(
            "--log-level",
            choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
            default=None,
            help="Set logging level",
        )
        parser.add_argument("--log-file", help="Log to specified file")
        parser.add_argument(
            "--quiet",
            action="store_true",
            help="Suppress console logging (logs to file only if --log-file is set)",
        )

        subparsers = parser.add_subparsers(dest="command", help="Tasks")

        def add_common(sub):
            sub.add_argument("--config", required=True, type=Path, help="Run configuration (JSON)")
            sub.add_argument("--seed", type=int, help="Override the run and sampler seed (u64)")
            sub.add_argument("--threads", type=int, default=None, help="Worker threads (default: all cores)")
            sub.add_argument("--output", type=Path, help="Output directory")

        gs_parser = subparsers.add_parser("gs", help="Ground-state search")
        add_common(gs_parser)
        gs_parser.set_defaults(func=self.cmd_gs)

        infid_parser = subparsers.add_parser("infid", help="Compress a state onto a target")
        add_common(infid_parser)
        infid_parser.set_defaults(func=self.cmd_infid)

        scan_parser = subparsers.add_parser("snr-scan", help="Exact gradient SNR across alpha")
        add_common(scan_parser)
        scan_parser.add_argument("--alphas", help="Comma separated alpha grid")
        scan_parser.add_argument("--checkpoint", type=Path, help="Model checkpoint to scan")
        scan_parser.set_defaults(func=self.cmd_snr_scan)

        return parser

    def _guarded(self, action, args) -> int:
        try:
            return action(args)
        except CONFIG_ERRORS as e:
            logger.error(f"Configuration error: {e}")
            print(f"Error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        except AlphaVmcError as e:
            logger.critical(f"Run aborted: {e}", exc_info=True)
            print(f"Aborted: {e}", file=sys.stderr)
            return EXIT_ABORT

    def _load(self, args, task: str) -> RunConfig:
        config = load_config(args.config)
        if config.task != task:
            raise ConfigError(f"{args.config}: task is '{config.task}', expected '{task}'")
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed must fit in 64 bits, got {args.seed}")
            sampler = config.sampler.model_copy(update={"seed": args.seed})
            config = config.model_copy(update={"seed": args.seed, "sampler": sampler})
        output = args.output or (Path(config.output) if config.output else None)
        self.storage = RunStorage(output, task)
        logger.info(f"Task {task}: output in {self.storage.output_dir}")
        return config

    def _initial_model(self, config: RunConfig, setup: SystemSetup):
        if config.ansatz.checkpoint:
            return load_model(config.ansatz.checkpoint, setup)
        return ModelRegistry.create_model(config.ansatz, setup.lattice, np.random.default_rng(config.seed))

    def _source(self, config: RunConfig, setup: SystemSetup, threads, seed_shift: int = 0) -> BatchSource:
        sampler_cfg = config.sampler
        if seed_shift:
            sampler_cfg = sampler_cfg.model_copy(update={"seed": (sampler_cfg.seed + seed_shift) % 2**64})
        if sampler_cfg.mode == "exact" and not setup.enumerable:
            raise OracleOnlyError(f"exact mode needs an enumerable system, got {setup.n_sites} sites")
        basis = setup.basis if sampler_cfg.mode == "exact" else None
        return BatchSource(sampler_cfg, setup.n_sites, basis, setup.bonds, setup.n_up, threads)

    def cmd_gs(self, args) -> int:
        return self._guarded(self._gs, args)

    def _gs(self, args) -> int:
        config = self._load(args, "gs")
        setup = build_system(config.system)
        model = self._initial_model(config, setup)
        source = self._source(config, setup, args.threads)
        controller = AlphaController.from_config(config.controller)

        result = run_ground_state(
            model, setup.operator, source, config.sr, controller, on_step=self.storage.append_trace
        )
        last = result.trace.last
        summary: Dict[str, Any] = {
            "task": "gs",
            "n_steps": len(result.trace),
            "final_alpha": controller.alpha,
            "final_energy": last["energy"] if last else None,
            "rel_error_if_exact_available": None,
        }
        basis = setup.basis_or_none()
        if basis is not None:
            energy = exact_energy(result.model, setup.operator, basis)
            e0, _ = ground_state(setup.operator, basis)
            summary["final_energy"] = energy
            summary["exact_ground_energy"] = e0
            summary["rel_error_if_exact_available"] = abs(energy - e0) / max(abs(e0), 1e-300)

        self.storage.save_checkpoint(result.model, final_alpha=controller.alpha)
        self.storage.write_summary(summary)
        print(f"✅ E = {summary['final_energy']:.10g} after {len(result.trace)} steps (alpha={controller.alpha:.3f})")
        return EXIT_OK

    def cmd_infid(self, args) -> int:
        return self._guarded(self._infid, args)

    def _target(self, config: RunConfig, setup: SystemSetup) -> TargetState:
        compression = config.compression
        if compression.target_checkpoint:
            return TargetState.from_model(load_model(compression.target_checkpoint, setup))
        if not setup.enumerable:
            raise OracleOnlyError("the quench target is built on an enumerated basis")
        quench = compression.quench
        _, target = quench_target(setup.lattice, quench.J, quench.h, quench.dt, setup.basis)
        return target

    def _infid(self, args) -> int:
        config = self._load(args, "infid")
        setup = build_system(config.system)
        target = self._target(config, setup)
        model = self._initial_model(config, setup)
        x_source = self._source(config, setup, args.threads)
        y_source = self._source(config, setup, args.threads, seed_shift=1)
        controller = AlphaController.from_config(config.controller)

        basis = setup.basis_or_none()
        initial = exact_infidelity(model, target, basis) if basis is not None else None
        result = run_compression(
            model,
            target,
            x_source,
            y_source,
            config.sr,
            controller,
            c=config.compression.c,
            n_steps=config.compression.steps,
            on_step=self.storage.append_trace,
        )
        last = result.trace.last
        summary: Dict[str, Any] = {
            "task": "infid",
            "n_steps": len(result.trace),
            "final_alpha": controller.alpha,
            "initial_infidelity": initial if initial is not None else (result.trace.records[0]["infidelity"] if last else None),
            "final_infidelity": last["infidelity"] if last else initial,
        }
        if basis is not None:
            summary["final_infidelity"] = exact_infidelity(result.model, target, basis)

        self.storage.save_checkpoint(result.model, final_alpha=controller.alpha)
        self.storage.write_summary(summary)
        print(f"✅ I = {summary['final_infidelity']:.3e} after {len(result.trace)} steps (alpha={controller.alpha:.3f})")
        return EXIT_OK

    def cmd_snr_scan(self, args) -> int:
        return self._guarded(self._snr_scan, args)

    def _snr_scan(self, args) -> int:
        config = self._load(args, "snr-scan")
        setup = build_system(config.system)
        scan = config.scan
        checkpoint = args.checkpoint or (scan.checkpoint if scan else None) or config.ansatz.checkpoint
        if checkpoint is None:
            raise ConfigError("snr-scan needs a checkpoint (--checkpoint, scan.checkpoint or ansatz.checkpoint)")
        model = load_model(checkpoint, setup)
        if args.alphas:
            alphas = parse_alphas(args.alphas)
        elif scan is not None:
            alphas = scan.alphas
        else:
            alphas = ScanConfig().alphas

        rows = snr_scan_rows(model, setup, alphas, args.threads)
        self.storage.write_scan(rows, SCAN_FIELDS)
        best = max((r for r in rows if r["label"] == "q_alpha"), key=lambda r: r["L_IS"])
        self.storage.write_summary({"task": "snr-scan", "best_alpha": best["alpha"], "best_L_IS": best["L_IS"]})
        print(f"✅ {len(rows)} rows written to {self.storage.scan_file} (best alpha={best['alpha']})")
        return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point"""
    cli = AlphaVmcCLI()
    try:
        return cli.run(argv)
    except KeyboardInterrupt:
        logger.info("Run interrupted by user")
        print("\nInterrupted")
        return EXIT_ABORT
    except Exception as e:
        logger.critical(f"Application error: {e}", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
