#!/usr/bin/env python
"""
Adaptive overdispersion: tune alpha by clipped gradient ascent on L_IS.

For q_alpha ~ |psi|^alpha the score d/dalpha log q_alpha(x) is log|psi(x)|,
already cached in every batch, so the alpha gradient costs no extra model
evaluations.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .errors import DegenerateWeightsError
from .estimators import (
    EPS_VAR,
    EstimatorReport,
    WeightSet,
    build_report,
    compute_weights,
    local_gradients,
)
from .hilbert import BasisEnumeration
from .logging_config import get_logger
from .operators import LocalOperator, local_values
from .samplers import SampleBatch, sample_exact
from .schema import ControllerConfig

logger = get_logger(__name__)


@dataclass(frozen=True)
class OverdispersionState:
    alpha: float = 2.0
    eta: float = 0.1
    max_step: float = 0.01
    alpha_min: float = 0.05
    alpha_max: float = 2.5
    frozen: bool = False

    def __post_init__(self):
        if not self.alpha_min <= self.alpha <= self.alpha_max:
            raise ValueError(f"alpha={self.alpha} outside [{self.alpha_min}, {self.alpha_max}]")
        if self.eta <= 0 or self.max_step <= 0:
            raise ValueError("eta and max_step must be positive")

    @classmethod
    def from_config(cls, cfg: ControllerConfig) -> "OverdispersionState":
        return cls(
            alpha=cfg.alpha0,
            eta=cfg.eta,
            max_step=cfg.max_step,
            alpha_min=cfg.alpha_min,
            alpha_max=cfg.alpha_max,
        )


def dalpha_variance(
    jac,
    values,
    weights: WeightSet,
    F_hat: np.ndarray,
    batch: SampleBatch,
    f: Optional[np.ndarray] = None,
) -> np.ndarray:
    """d V_i / d alpha = -E_q[(s - E_q s) g_i^2], s = log|psi|, g_i = W |f_i - F_i|."""
    if f is None:
        f = local_gradients(jac, values, weights)
    score = np.real(batch.log_amps)
    measure = weights.measure
    live = np.isfinite(score) & (measure > 0)
    if not np.any(live):
        raise DegenerateWeightsError("no configuration with finite amplitude")
    score = np.where(live, score, 0.0)
    mean_score = np.dot(measure[live], score[live]) / measure[live].sum()
    d_score = np.where(live, score - mean_score, 0.0)

    ratio = weights.ratio
    g2 = (ratio[:, None] ** 2) * (f - np.asarray(F_hat)[None, :]) ** 2
    return -((measure * d_score) @ g2)


def dalpha_objective(report: EstimatorReport, dvar: np.ndarray) -> float:
    """d L_IS / d alpha by the chain rule through each component variance.

    d SNR_i = -(1/2) dV_i |F_i| / V_i^{3/2} = -(1/2) dV_i SNR_i / V_i.
    Components at the variance floor contribute nothing.
    """
    variances = np.asarray(report.component_variance)
    dvar = np.asarray(dvar, dtype=np.float64)
    if dvar.size == 0:
        return 0.0
    active = variances > EPS_VAR
    terms = np.zeros_like(dvar)
    terms[active] = -0.5 * dvar[active] * report.snr[active] / variances[active]
    return float(np.mean(terms))


def update_alpha(state: OverdispersionState, grad: float) -> OverdispersionState:
    """alpha' = clamp(alpha + clamp(eta * grad, +-max_step), bounds)"""
    if not np.isfinite(grad):
        logger.warning(f"Non-finite alpha gradient ({grad}); alpha frozen at {state.alpha:.4f}")
        return replace(state, frozen=True)
    step = float(np.clip(state.eta * grad, -state.max_step, state.max_step))
    alpha = float(np.clip(state.alpha + step, state.alpha_min, state.alpha_max))
    return replace(state, alpha=alpha, frozen=False)


class AlphaController:
    """Owns the overdispersion state across optimization steps"""

    def __init__(self, state: OverdispersionState, enabled: bool = True):
        self.state = state
        self.enabled = enabled
        self.trajectory: List[float] = [state.alpha]

    @classmethod
    def from_config(cls, cfg: ControllerConfig) -> "AlphaController":
        return cls(OverdispersionState.from_config(cfg), cfg.enabled)

    @property
    def alpha(self) -> float:
        return self.state.alpha

    def gradient(self, batch, jac, values, weights, report: EstimatorReport) -> float:
        F_signal = weights.w_tilde @ report.local_f
        dvar = dalpha_variance(jac, values, weights, F_signal, batch, f=report.local_f)
        return dalpha_objective(report, dvar)

    def observe(self, batch, jac, values, weights, report: EstimatorReport) -> float:
        """Update alpha from a batch drawn at the current alpha; returns the new alpha."""
        if not self.enabled:
            return self.state.alpha
        grad = self.gradient(batch, jac, values, weights, report)
        self.state = update_alpha(self.state, grad)
        self.trajectory.append(self.state.alpha)
        logger.debug(f"alpha gradient {grad:+.4e} -> alpha={self.state.alpha:.4f}")
        return self.state.alpha


def tune_alpha_exact(
    model,
    op: LocalOperator,
    basis: BasisEnumeration,
    state: OverdispersionState,
    n_iterations: int = 500,
    threads: Optional[int] = None,
) -> List[float]:
    """Run the controller on a frozen state in exact mode; returns the alpha trajectory."""
    batch0 = sample_exact(model, state.alpha, basis, threads)
    values = local_values(op, model, batch0, threads)
    jac = model.jacobian(batch0.configs, threads)
    controller = AlphaController(state)
    for _ in range(n_iterations):
        batch = sample_exact(model, controller.alpha, basis, threads)
        weights = compute_weights(batch)
        report = build_report(batch, jac, values, weights)
        controller.observe(batch, jac, values, weights, report)
    return controller.trajectory


def exact_alpha_scan(
    model,
    op: LocalOperator,
    basis: BasisEnumeration,
    alphas: Sequence[float],
    threads: Optional[int] = None,
) -> List[EstimatorReport]:
    """Exact-mode estimator reports across a grid of alpha values."""
    batch0 = sample_exact(model, 2.0, basis, threads)
    values = local_values(op, model, batch0, threads)
    jac = model.jacobian(batch0.configs, threads)
    reports = []
    for alpha in alphas:
        batch = sample_exact(model, float(alpha), basis, threads)
        reports.append(build_report(batch, jac, values, compute_weights(batch)))
    return reports
