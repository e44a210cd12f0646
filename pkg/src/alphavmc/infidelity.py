#!/usr/bin/env python
"""
State compression: maximize the fidelity between the variational state psi
and a fixed target phi.

The fidelity factorizes into two expectations,

    F = E_{x ~ |psi|^2}[phi(x)/psi(x)] * E_{y ~ |phi|^2}[psi(y)/phi(y)],

each estimated by SNIS from its own batch drawn at the same alpha. A control
variate built from E_x[|A_x|^2] E_y[|A_y|^2] = 1 reduces the variance of
the x-estimator; its own derivative is carried in the gradient so the
gradient expectation does not depend on the control-variate weight c.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from .adaptive import AlphaController
from .base import WavefunctionModel
from .errors import DegenerateStateError, SizeMismatchError, ZeroAmplitudeError
from .estimators import (
    EPS_VAR,
    WeightSet,
    build_report,
    compute_weights,
    effective_sample_size,
    rows_of,
)
from .hilbert import BasisEnumeration, Lattice, spins_to_bits
from .logging_config import get_logger
from .operators import LocalValueBatch, tfim
from .optimizer import OptimizationResult, StepEstimate, run_sr_loop
from .samplers import BatchSource, SampleBatch
from .schema import SrConfig

logger = get_logger(__name__)


class TargetState:
    """Fixed state phi: an amplitude table on a basis or a frozen model."""

    KIND = "target"

    def __init__(
        self,
        n_sites: int,
        basis: Optional[BasisEnumeration] = None,
        log_table: Optional[np.ndarray] = None,
        model: Optional[WavefunctionModel] = None,
    ):
        if (log_table is None) == (model is None):
            raise ValueError("a target is either an amplitude table or a model")
        if log_table is not None:
            if basis is None or len(log_table) != len(basis):
                raise SizeMismatchError("amplitude table must match the basis")
            if not np.any(np.isfinite(np.real(log_table))):
                raise DegenerateStateError("target amplitudes vanish everywhere")
        self.n_sites = int(n_sites)
        self.basis = basis
        self._log_table = log_table
        self._model = model

    @classmethod
    def from_amplitudes(cls, basis: BasisEnumeration, amplitudes: np.ndarray) -> "TargetState":
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        with np.errstate(divide="ignore"):
            log_table = np.log(amplitudes)
        log_table = np.where(amplitudes == 0, -np.inf + 0j, log_table)
        return cls(basis.n_sites, basis=basis, log_table=log_table)

    @classmethod
    def from_model(
        cls,
        model: WavefunctionModel,
        basis: Optional[BasisEnumeration] = None,
        propagator: Optional[np.ndarray] = None,
    ) -> "TargetState":
        """Frozen model, optionally followed by a dense propagator on ``basis``."""
        if propagator is None:
            return cls(model.n_sites, model=model)
        if basis is None:
            raise ValueError("applying a propagator needs an enumerated basis")
        return cls.from_amplitudes(basis, propagator @ state_vector(model, basis))

    def log_amplitudes(self, spins: np.ndarray) -> np.ndarray:
        if self._model is not None:
            return self._model.log_amplitudes(spins)
        index = self.basis.index_of(spins_to_bits(spins))
        return np.where(index >= 0, self._log_table[index], -np.inf + 0j)

    def log_amplitudes_of(self, bits: np.ndarray, threads: Optional[int] = None) -> np.ndarray:
        if self._model is not None:
            return self._model.log_amplitudes_of(bits, threads)
        index = self.basis.index_of(bits)
        return np.where(index >= 0, self._log_table[index], -np.inf + 0j)


def state_vector(state, basis: BasisEnumeration) -> np.ndarray:
    """Amplitudes on ``basis``, scaled so the largest modulus is 1."""
    log_amps = np.asarray(state.log_amplitudes_of(basis.configurations))
    finite = np.isfinite(log_amps.real)
    if not np.any(finite):
        raise DegenerateStateError("state vanishes on the enumerated basis")
    shift = np.max(log_amps.real[finite])
    out = np.zeros(len(log_amps), dtype=np.complex128)
    out[finite] = np.exp(log_amps[finite] - shift)
    return out


def quench_target(
    lattice: Lattice, J: float, h: float, dt: float, basis: BasisEnumeration
) -> Tuple[TargetState, TargetState]:
    """(psi0, exp(-i dt H) psi0) with psi0 the uniform h = infinity ground state."""
    psi0 = np.ones(len(basis), dtype=np.complex128)
    H = tfim(lattice, J, h).to_dense(basis)
    phi = expm(-1j * dt * H) @ psi0
    logger.info(f"Quench target: TFIM J={J} h={h} dt={dt} on {len(basis)} states")
    return TargetState.from_amplitudes(basis, psi0), TargetState.from_amplitudes(basis, phi)


@dataclass
class FidelityEstimate:
    """Fidelity estimate with per-batch diagnostics"""

    fidelity: float
    infidelity: float
    gradient: np.ndarray
    A_hat: complex
    B_hat: float
    snr_x: float
    ess_x: float
    snr_y: float
    ess_y: float


@dataclass
class _FidelityParts:
    A_x: np.ndarray
    A_y: np.ndarray
    A_hat: complex
    B_hat: float
    values: np.ndarray
    shift: np.ndarray
    fidelity: float


def _ratio_amplitudes(
    log_num: np.ndarray, log_den: np.ndarray, weights: WeightSet, batch: SampleBatch
) -> np.ndarray:
    """num / den on rows carrying weight; a sampled zero denominator is an error."""
    live = weights.w_tilde > 0
    den_ok = np.isfinite(np.real(log_den))
    if not batch.is_exact and not np.all(den_ok):
        raise ZeroAmplitudeError(int(np.flatnonzero(~den_ok)[0]))
    usable = live & den_ok & np.isfinite(np.real(log_num))
    out = np.zeros(len(log_num), dtype=np.complex128)
    out[usable] = np.exp(log_num[usable] - log_den[usable])
    return out


def _fidelity_parts(
    model,
    target: TargetState,
    x_batch: SampleBatch,
    y_batch: SampleBatch,
    x_weights: WeightSet,
    y_weights: WeightSet,
    c: float,
    x_jac=None,
    y_jac=None,
    threads: Optional[int] = None,
) -> _FidelityParts:
    phi_at_x = target.log_amplitudes_of(x_batch.configs, threads)
    psi_at_y = model.log_amplitudes_of(y_batch.configs, threads)
    A_x = _ratio_amplitudes(phi_at_x, x_batch.log_amps, x_weights, x_batch)
    A_y = _ratio_amplitudes(psi_at_y, y_batch.log_amps, y_weights, y_batch)

    A_hat = complex(y_weights.w_tilde @ A_y)
    B_hat = float(y_weights.w_tilde @ np.abs(A_y) ** 2)
    g_x = np.abs(A_x) ** 2
    G_hat = float(x_weights.w_tilde @ g_x)

    fidelity = float(np.real(x_weights.w_tilde @ A_x * A_hat)) + c * (G_hat * B_hat - 1.0)
    values = A_x * A_hat + c * B_hat * g_x

    shift = np.zeros(rows_of(x_jac).shape[1] if x_jac is not None else 0)
    if c != 0.0 and x_jac is not None and y_jac is not None:
        O_x = np.real(rows_of(x_jac))
        O_y = rows_of(y_jac)
        # Parts of the control-variate derivative not captured by the covariance
        own = -2.0 * B_hat * (x_weights.w_tilde * g_x) @ O_x
        cross = 2.0 * G_hat * np.real((y_weights.w_tilde * np.abs(A_y) ** 2) @ O_y)
        shift = c * (own + cross)
    return _FidelityParts(A_x, A_y, A_hat, B_hat, values, shift, fidelity)


def fidelity_local(
    model,
    target: TargetState,
    x_batch: SampleBatch,
    y_batch: SampleBatch,
    c: float = 0.5,
    threads: Optional[int] = None,
) -> LocalValueBatch:
    """f(x) = Re{A_x(x) E_y[A_y]} + c (|A_x(x)|^2 E_y[|A_y|^2] - 1)"""
    parts = _fidelity_parts(
        model, target, x_batch, y_batch, compute_weights(x_batch), compute_weights(y_batch), c, threads=threads
    )
    local = np.real(parts.A_x * parts.A_hat) + c * (np.abs(parts.A_x) ** 2 * parts.B_hat - 1.0)
    return LocalValueBatch(local)


def _y_snr(A_y: np.ndarray, weights: WeightSet) -> float:
    mean = weights.w_tilde @ A_y
    var = float((weights.w_tilde * weights.ratio) @ np.abs(A_y - mean) ** 2)
    if abs(mean) < 1e-15 and var < EPS_VAR:
        return 0.0
    return float(abs(mean) / np.sqrt(max(var, EPS_VAR)))


def _estimate(model, target, x_batch, y_batch, c, threads) -> Tuple[StepEstimate, FidelityEstimate]:
    x_weights = compute_weights(x_batch)
    y_weights = compute_weights(y_batch)
    x_jac = model.jacobian(x_batch.configs, threads, origin=x_batch.batch_id)
    y_jac = model.jacobian(y_batch.configs, threads, origin=y_batch.batch_id)
    parts = _fidelity_parts(model, target, x_batch, y_batch, x_weights, y_weights, c, x_jac, y_jac, threads)

    report = build_report(
        x_batch, x_jac, parts.values, x_weights, gradient_sign=-1.0, gradient_shift=-parts.shift
    )
    local = np.real(parts.A_x * parts.A_hat) + c * (np.abs(parts.A_x) ** 2 * parts.B_hat - 1.0)
    report.energy = 1.0 - parts.fidelity
    report.energy_variance = float(x_weights.w_tilde @ (local - x_weights.w_tilde @ local) ** 2)

    estimate = FidelityEstimate(
        fidelity=parts.fidelity,
        infidelity=1.0 - parts.fidelity,
        gradient=report.F_hat,
        A_hat=parts.A_hat,
        B_hat=parts.B_hat,
        snr_x=report.L_IS,
        ess_x=report.ess,
        snr_y=_y_snr(parts.A_y, y_weights),
        ess_y=effective_sample_size(y_weights),
    )
    step = StepEstimate(
        x_batch,
        x_jac,
        parts.values,
        x_weights,
        report,
        extra={"ess_y": estimate.ess_y, "snr_y": estimate.snr_y},
        loss_name="infidelity",
    )
    return step, estimate


def estimate_fidelity(
    model,
    target: TargetState,
    x_batch: SampleBatch,
    y_batch: SampleBatch,
    c: float = 0.5,
    threads: Optional[int] = None,
) -> FidelityEstimate:
    """Fidelity, its gradient and per-batch diagnostics.

    ``snr_x`` is L_IS of the full gradient, control-variate derivative
    included; ``snr_y`` is the SNR of the y-side ratio mean.
    """
    return _estimate(model, target, x_batch, y_batch, c, threads)[1]


def infidelity_gradient(
    model,
    target: TargetState,
    batches: Tuple[SampleBatch, SampleBatch],
    weights: Optional[Tuple[WeightSet, WeightSet]] = None,
    c: float = 0.5,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Gradient of the estimated infidelity with respect to the real parameters."""
    x_batch, y_batch = batches
    if weights is None:
        weights = (compute_weights(x_batch), compute_weights(y_batch))
    x_weights, y_weights = weights
    x_jac = model.jacobian(x_batch.configs, threads)
    y_jac = model.jacobian(y_batch.configs, threads)
    parts = _fidelity_parts(model, target, x_batch, y_batch, x_weights, y_weights, c, x_jac, y_jac, threads)
    report = build_report(
        x_batch, x_jac, parts.values, x_weights, gradient_sign=-1.0, gradient_shift=-parts.shift
    )
    return report.F_hat


def exact_infidelity(model, target: TargetState, basis: BasisEnumeration) -> float:
    """1 - |<psi|phi>|^2 / (<psi|psi><phi|phi>) by dense inner products"""
    psi = state_vector(model, basis)
    phi = state_vector(target, basis)
    overlap = np.vdot(psi, phi)
    return float(1.0 - np.abs(overlap) ** 2 / (np.vdot(psi, psi).real * np.vdot(phi, phi).real))


def run_compression(
    model,
    target: TargetState,
    x_source: BatchSource,
    y_source: BatchSource,
    sr_cfg: SrConfig,
    controller: AlphaController,
    c: float = 0.5,
    n_steps: Optional[int] = None,
    on_step: Optional[Callable[[Dict[str, Any]], None]] = None,
) -> OptimizationResult:
    """SR on the infidelity; both batches are drawn at the controller's alpha."""
    if target.n_sites != model.n_sites:
        raise SizeMismatchError(f"target has {target.n_sites} sites, model {model.n_sites}")
    logger.info(f"Compression SR: {model.KIND}, c={c}, {'exact' if x_source.is_exact else 'mcmc'} sampling")

    def estimate(current, alpha):
        x_batch = x_source.draw(current, alpha)
        y_batch = y_source.draw(target, alpha)
        return _estimate(current, target, x_batch, y_batch, c, x_source.threads)[0]

    return run_sr_loop(model, sr_cfg, controller, estimate, [x_source, y_source], n_steps, on_step)
