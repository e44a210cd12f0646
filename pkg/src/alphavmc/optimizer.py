#!/usr/bin/env python
"""
Stochastic reconfiguration with reweighted estimators.

One step samples q_alpha, reweights to the Born distribution, estimates the
force F and the geometric tensor S on that same batch, solves the regularized
system and moves the parameters. The overdispersion controller then updates
alpha from the same batch.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .adaptive import AlphaController
from .errors import (
    DegenerateWeightsError,
    OptimizationAborted,
    SamplerStallError,
    SizeMismatchError,
    ZeroAmplitudeError,
)
from .estimators import (
    EstimatorReport,
    WeightSet,
    build_report,
    compute_weights,
    qgt_estimate,
    stability_criterion,
)
from .logging_config import get_logger
from .operators import LocalOperator, local_values, rayleigh_quotient
from .samplers import BatchSource, SampleBatch
from .schema import ScheduleConfig, SrConfig

logger = get_logger(__name__)

# Failures that get one retry with freshly seeded chains
RETRYABLE = (SamplerStallError, DegenerateWeightsError, ZeroAmplitudeError)
RESEED_STRIDE = 104729


def schedule_value(schedule: ScheduleConfig, step: int) -> float:
    """Value of a decay schedule at ``step``; flat at ``final`` after decay_steps."""
    if schedule.decay == "constant":
        return schedule.init
    progress = min(max(step, 0), schedule.decay_steps) / schedule.decay_steps
    if schedule.decay == "cosine":
        factor = 0.5 * (1.0 + math.cos(math.pi * progress))
    else:
        factor = 1.0 - progress
    return schedule.final + (schedule.init - schedule.final) * factor


def sr_solve(S: np.ndarray, F: np.ndarray, diag_shift: float) -> np.ndarray:
    """Solve (S + diag_shift I) u = F.

    Cholesky first; when the shifted matrix is not numerically positive
    definite, fall back to an eigendecomposition with eigenvalues floored at
    diag_shift.
    """
    if diag_shift <= 0:
        raise ValueError(f"diag_shift must be positive, got {diag_shift}")
    S = np.asarray(S, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    if S.shape != (F.size, F.size):
        raise SizeMismatchError(f"S has shape {S.shape}, F has {F.size} entries")
    if F.size == 0:
        return F.copy()

    A = S + diag_shift * np.eye(F.size)
    try:
        factor = cho_factor(A, lower=True, check_finite=True)
        return cho_solve(factor, F)
    except (LinAlgError, ValueError) as e:
        logger.warning(f"Cholesky failed ({e}); solving by eigendecomposition")
    evals, evecs = eigh(0.5 * (A + A.T))
    evals = np.maximum(evals, diag_shift)
    return evecs @ ((evecs.T @ F) / evals)


def momentum_blend(
    u_prev: Optional[np.ndarray],
    S: np.ndarray,
    F: np.ndarray,
    diag_shift: float,
    mu: float,
) -> np.ndarray:
    """u_k = mu u_{k-1} + (S + shift)^{-1} (F - mu S u_{k-1})"""
    if not 0.0 <= mu < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {mu}")
    F = np.asarray(F, dtype=np.float64)
    if u_prev is None or mu == 0.0:
        return sr_solve(S, F, diag_shift)
    u_prev = np.asarray(u_prev, dtype=np.float64)
    if u_prev.shape != F.shape:
        raise SizeMismatchError(f"previous update has shape {u_prev.shape}, F has {F.shape}")
    return mu * u_prev + sr_solve(S, F - mu * (np.asarray(S) @ u_prev), diag_shift)


@dataclass
class OptimizationTrace:
    """Per-step telemetry records, one per executed step"""

    records: List[Dict[str, Any]] = field(default_factory=list)

    def append(self, record: Dict[str, Any]):
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return iter(self.records)

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records], dtype=np.float64)

    @property
    def energies(self) -> np.ndarray:
        return self.column("energy")

    @property
    def last(self) -> Optional[Dict[str, Any]]:
        return self.records[-1] if self.records else None


@dataclass
class StepEstimate:
    """Everything one step needs from its batch"""

    batch: SampleBatch
    jac: Any
    values: Any
    weights: WeightSet
    report: EstimatorReport
    extra: Dict[str, Any] = field(default_factory=dict)
    loss_name: str = "energy"


@dataclass
class OptimizationResult:
    model: Any
    trace: OptimizationTrace
    alpha_trajectory: List[float]


def estimate_energy(model, op: LocalOperator, batch: SampleBatch, threads: Optional[int] = None) -> StepEstimate:
    weights = compute_weights(batch)
    values = local_values(op, model, batch, threads)
    jac = model.jacobian(batch.configs, threads, origin=batch.batch_id)
    report = build_report(batch, jac, values, weights)
    return StepEstimate(batch, jac, values, weights, report)


def run_sr_loop(
    model,
    sr_cfg: SrConfig,
    controller: AlphaController,
    estimate: Callable[[Any, float], StepEstimate],
    sources: List[BatchSource],
    n_steps: Optional[int] = None,
    on_step: Optional[Callable[[Dict[str, Any]], None]] = None,
) -> OptimizationResult:
    """Shared SR driver.

    ``estimate(model, alpha)`` draws from ``sources`` and returns the step
    estimate; ``sources`` are reseeded on retry and resized by the adaptive
    sample-size rule.
    """
    n_steps = sr_cfg.n_steps if n_steps is None else n_steps
    adaptive = sr_cfg.adaptive_samples
    trace = OptimizationTrace()
    u_prev: Optional[np.ndarray] = None
    reseeds = 0

    for step in range(n_steps):
        lr = schedule_value(sr_cfg.learning_rate, step)
        shift = schedule_value(sr_cfg.diag_shift, step)
        alpha = controller.alpha

        try:
            est = estimate(model, alpha)
        except RETRYABLE as first:
            reseeds += 1
            logger.warning(f"Step {step} failed ({first}); retrying with fresh chains")
            for source in sources:
                source.reseed(RESEED_STRIDE * reseeds)
            try:
                est = estimate(model, alpha)
            except RETRYABLE as second:
                raise OptimizationAborted(f"step {step} failed twice: {second}") from second

        report = est.report
        if not np.all(np.isfinite(report.F_hat)):
            raise OptimizationAborted(f"non-finite gradient at step {step}")

        S = qgt_estimate(est.jac, est.weights)
        update = momentum_blend(u_prev, S, report.F_hat, shift, sr_cfg.momentum_mu)
        model = model.perturb(-lr * update)
        u_prev = update
        controller.observe(est.batch, est.jac, est.values, est.weights, report)

        record = report.to_record(step)
        if est.loss_name != "energy":
            record[est.loss_name] = record.pop("energy")
        record["update_norm"] = float(np.linalg.norm(update))
        record.update(est.extra)
        trace.append(record)
        if on_step is not None:
            on_step(record)
        logger.debug(
            f"step {step}: E={report.energy:.10g} L_IS={report.L_IS:.4g} "
            f"alpha={alpha:.4f} |u|={record['update_norm']:.3e}"
        )

        if adaptive.enabled and (step + 1) % adaptive.cadence == 0:
            for source in sources:
                if source.is_exact:
                    continue
                verdict = stability_criterion(report.L_IS, source.n_samples, adaptive.n_min, adaptive.n_max)
                if verdict.recommended_n_samples != source.n_samples:
                    logger.info(
                        f"Step {step}: N_s {source.n_samples} -> {verdict.recommended_n_samples} "
                        f"(reliable={verdict.reliable})"
                    )
                    source.n_samples = verdict.recommended_n_samples

    return OptimizationResult(model, trace, list(controller.trajectory))


def run_ground_state(
    model,
    op: LocalOperator,
    source: BatchSource,
    sr_cfg: SrConfig,
    controller: AlphaController,
    n_steps: Optional[int] = None,
    on_step: Optional[Callable[[Dict[str, Any]], None]] = None,
) -> OptimizationResult:
    """Minimize the energy of ``op`` starting from ``model``."""
    logger.info(
        f"Ground-state SR: {model.KIND} with {model.n_params} parameters, "
        f"{'exact' if source.is_exact else 'mcmc'} sampling, controller "
        f"{'on' if controller.enabled else 'off'}"
    )

    def estimate(current, alpha):
        return estimate_energy(current, op, source.draw(current, alpha), source.threads)

    return run_sr_loop(model, sr_cfg, controller, estimate, [source], n_steps, on_step)


def exact_energy(model, op: LocalOperator, basis) -> float:
    """Rayleigh quotient of the model state on an enumerated basis."""
    log_amps = model.log_amplitudes_of(basis.configurations)
    finite = np.isfinite(log_amps.real)
    shift = np.max(log_amps.real[finite])
    amplitudes = np.where(finite, np.exp(log_amps - shift), 0.0)
    return rayleigh_quotient(op, basis, amplitudes)
