#!/usr/bin/env python
"""
Self-normalized importance sampling (SNIS) estimators.

Every batch row mu carries a sampling measure s_mu (1/N_s for Markov
chains, q(x) for exact enumeration) and a raw log-weight log w_mu with
w = |psi|^2 / q up to a constant. The self-normalized weights

    w~_mu = s_mu w_mu / sum_nu s_nu w_nu

turn any Born average into sum_mu w~_mu A_mu, and the normalized importance
ratio at row mu is W_mu = w~_mu / s_mu. Exact enumeration is therefore just
the special case where s is q itself and no sampling noise remains.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from scipy.special import logsumexp

from .base import JacobianMatrix
from .errors import (
    DegenerateWeightsError,
    InsufficientSamplesError,
    OracleOnlyError,
    Rho0UndefinedError,
    SizeMismatchError,
)
from .hilbert import BasisEnumeration
from .logging_config import get_logger
from .operators import LocalOperator, LocalValueBatch, local_values
from .samplers import SampleBatch, sample_exact

logger = get_logger(__name__)

EPS_VAR = 1e-30
EPS_F = 1e-15

DEFAULT_MIN_SAMPLES = 2
DEFAULT_MAX_SAMPLES = 2**20


@dataclass(frozen=True)
class WeightSet:
    """Raw log-weights, self-normalized weights and the sampling measure"""

    log_w: np.ndarray
    w_tilde: np.ndarray
    measure: np.ndarray

    def __len__(self) -> int:
        return len(self.w_tilde)

    @property
    def ratio(self) -> np.ndarray:
        """W_mu = p(x_mu) / q(x_mu), estimated; 0 where the measure vanishes"""
        out = np.zeros_like(self.w_tilde)
        np.divide(self.w_tilde, self.measure, out=out, where=self.measure > 0)
        return out

    @property
    def n_samples(self) -> int:
        return len(self.w_tilde)


def compute_weights(batch: SampleBatch, alpha: Optional[float] = None) -> WeightSet:
    """Importance weights of a batch drawn from |psi|^alpha towards |psi|^2."""
    alpha = batch.alpha if alpha is None else float(alpha)
    log_mod = np.real(batch.log_amps)
    measure = batch.sample_measure()

    with np.errstate(invalid="ignore", divide="ignore"):
        if batch.is_exact:
            log_p = 2.0 * log_mod
            finite = np.isfinite(log_p)
            if not np.any(finite):
                raise DegenerateWeightsError("all Born weights vanish")
            log_p = log_p - logsumexp(log_p[finite])
            log_w = np.where(finite & (measure > 0), log_p - np.log(measure), -np.inf)
            log_t = np.where(finite, log_p, -np.inf)
        else:
            log_w = np.where(np.isfinite(log_mod), (2.0 - alpha) * log_mod, -np.inf)
            log_t = log_w + np.log(measure)

    if not np.any(np.isfinite(log_t)):
        raise DegenerateWeightsError("all importance weights vanish")
    w_tilde = np.exp(log_t - logsumexp(log_t[np.isfinite(log_t)]))
    return WeightSet(log_w=log_w, w_tilde=w_tilde, measure=measure)


def _check_aligned(n: int, *arrays):
    for a in arrays:
        if len(a) != n:
            raise SizeMismatchError(f"expected {n} rows, got {len(a)}")


def values_of(values) -> np.ndarray:
    return values.values if isinstance(values, LocalValueBatch) else np.asarray(values)


def rows_of(jac) -> np.ndarray:
    return jac.rows if isinstance(jac, JacobianMatrix) else np.asarray(jac)


def snis_mean(values, weights: WeightSet) -> complex:
    v = values_of(values)
    _check_aligned(len(weights), v)
    return complex(np.dot(weights.w_tilde, v))


def centered(rows: np.ndarray, weights: WeightSet) -> np.ndarray:
    """Rows minus their weighted (Born) mean; rows without Born weight are zeroed"""
    live = (weights.w_tilde > 0)[:, None]
    rows = np.where(live, rows, 0.0)
    return np.where(live, rows - weights.w_tilde @ rows, 0.0)


def local_gradients(jac, values, weights: WeightSet) -> np.ndarray:
    """(N_s, N_p) matrix f_i(x_mu) = 2 Re{conj(dO_mu,i) dl_mu}"""
    rows = rows_of(jac)
    v = values_of(values)
    _check_aligned(len(weights), rows, v)
    d_rows = centered(rows, weights)
    d_vals = np.where(weights.w_tilde > 0, v - np.dot(weights.w_tilde, v), 0.0)
    return 2.0 * np.real(np.conj(d_rows) * d_vals[:, None])


def gradient_estimate(jac, values, weights: WeightSet) -> np.ndarray:
    return weights.w_tilde @ local_gradients(jac, values, weights)


def variance_from_local(f: np.ndarray, weights: WeightSet, F_hat: np.ndarray) -> np.ndarray:
    """Per-sample variance E_q[W^2 |f_i - F_i|^2] with F_i replaced by its estimate."""
    if len(weights) < 2:
        raise InsufficientSamplesError("variance needs at least two samples")
    ratio = weights.ratio
    return (weights.w_tilde * ratio) @ (f - F_hat[None, :]) ** 2


def component_variance(jac, values, weights: WeightSet, F_hat: np.ndarray) -> np.ndarray:
    """Delta-method variance per gradient component (Var[F_i] ~ V_i / N_s)."""
    return variance_from_local(local_gradients(jac, values, weights), weights, np.asarray(F_hat))


@dataclass(frozen=True)
class SnrResult:
    snr: np.ndarray
    L_IS: float


def snr_and_objective(F_hat: np.ndarray, variances: np.ndarray) -> SnrResult:
    """Per-sample SNR of each component and its mean over components."""
    F_hat = np.abs(np.asarray(F_hat, dtype=np.float64))
    variances = np.asarray(variances, dtype=np.float64)
    if np.any(variances < 0):
        raise ValueError("variances must be non-negative")
    snr = F_hat / np.sqrt(np.maximum(variances, EPS_VAR))
    snr = np.where((F_hat < EPS_F) & (variances < EPS_VAR), 0.0, snr)
    return SnrResult(snr=snr, L_IS=float(np.mean(snr)) if snr.size else 0.0)


def qgt_estimate(jac, weights: WeightSet) -> np.ndarray:
    """S_ij = Re sum_mu w~_mu conj(dO_mu,i) dO_mu,j"""
    rows = rows_of(jac)
    _check_aligned(len(weights), rows)
    d_rows = centered(rows, weights)
    S = np.real(d_rows.conj().T @ (weights.w_tilde[:, None] * d_rows))
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class EssBias:
    ess: float
    rho0: float


def effective_sample_size(weights: WeightSet) -> float:
    """E_q[w]^2 / E_q[w^2], in (0, 1]"""
    return float(1.0 / np.dot(weights.w_tilde, weights.ratio))


def ess_and_bias(weights: WeightSet, values, mean: complex) -> EssBias:
    """ESS and the sample-size independent SNIS bias coefficient rho0."""
    v = np.real(values_of(values))
    _check_aligned(len(weights), v)
    ess = effective_sample_size(weights)
    mu = float(np.real(mean))
    if mu == 0.0 or not np.isfinite(mu):
        raise Rho0UndefinedError(ess)
    second = weights.w_tilde * weights.ratio
    rho0 = float(np.dot(second, mu - v) / mu)
    return EssBias(ess=ess, rho0=rho0)


@dataclass
class EstimatorReport:
    """Everything one estimation round produces"""

    F_hat: np.ndarray
    component_variance: np.ndarray
    snr: np.ndarray
    L_IS: float
    ess: float
    rho0: Optional[float]
    energy: float
    energy_variance: float
    n_samples: int
    alpha: float
    acceptance_rate: Optional[float] = None
    local_f: Optional[np.ndarray] = field(default=None, repr=False)

    def to_record(self, step: int) -> Dict[str, Any]:
        return {
            "step": int(step),
            "energy": self.energy,
            "variance": self.energy_variance,
            "L_IS": self.L_IS,
            "ess": self.ess,
            "rho0": self.rho0,
            "alpha": self.alpha,
            "acceptance_rate": self.acceptance_rate,
            "N_s": self.n_samples,
        }


def build_report(
    batch: SampleBatch,
    jac,
    values,
    weights: WeightSet,
    gradient_sign: float = 1.0,
    gradient_shift: Optional[np.ndarray] = None,
) -> EstimatorReport:
    """Assemble gradient, variance, SNR and sampling diagnostics for one batch.

    ``gradient_sign`` flips the loss (infidelity descends on -fidelity);
    ``gradient_shift`` adds a sample-independent term to the gradient.
    """
    v = values_of(values)
    f = gradient_sign * local_gradients(jac, v, weights)
    F_local = weights.w_tilde @ f
    variances = variance_from_local(f, weights, F_local)
    F_hat = F_local if gradient_shift is None else F_local + gradient_shift
    # SNR of the full gradient; the shift adds no variance term
    snr = snr_and_objective(F_hat, variances)

    mean = snis_mean(v, weights)
    energy_variance = float(np.dot(weights.w_tilde, np.abs(v - mean) ** 2))
    try:
        bias = ess_and_bias(weights, v, mean)
        ess, rho0 = bias.ess, bias.rho0
    except Rho0UndefinedError as e:
        logger.debug("rho0 undefined for zero mean, reporting ESS only")
        ess, rho0 = e.ess, None

    return EstimatorReport(
        F_hat=F_hat,
        component_variance=variances,
        snr=snr.snr,
        L_IS=snr.L_IS,
        ess=ess,
        rho0=rho0,
        energy=float(np.real(mean)),
        energy_variance=energy_variance,
        n_samples=batch.n_samples,
        alpha=batch.alpha,
        acceptance_rate=batch.acceptance_rate,
        local_f=f,
    )


def kl_divergence(qa: np.ndarray, qb: np.ndarray) -> float:
    """KL(qa || qb) with 0 log 0 = 0; infinite when qb misses support of qa."""
    qa = np.asarray(qa, dtype=np.float64)
    qb = np.asarray(qb, dtype=np.float64)
    support = qa > 0
    if np.any(qb[support] <= 0):
        return float("inf")
    return float(np.sum(qa[support] * (np.log(qa[support]) - np.log(qb[support]))))


def _normalized_rows(mass: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    total = mass.sum(axis=-1, keepdims=True)
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, mass / safe, fallback)


def snr_under_distribution(p: np.ndarray, f: np.ndarray, F: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Exact per-component SNR when sampling from q.

    ``q`` is either one distribution over the basis or one per component
    (shape (N_p, D)).
    """
    dev2 = (f - F[None, :]) ** 2
    q = np.asarray(q, dtype=np.float64)
    q_t = q.T if q.ndim == 2 else np.broadcast_to(q[:, None], dev2.shape)
    needed = (p[:, None] > 0) & (dev2 > 0)
    if np.any(needed & (q_t <= 0)):
        missing = np.any(needed & (q_t <= 0), axis=0)
    else:
        missing = np.zeros(f.shape[1], dtype=bool)
    contrib = np.zeros_like(dev2)
    np.divide(p[:, None] ** 2 * dev2, q_t, out=contrib, where=needed & (q_t > 0))
    variances = contrib.sum(axis=0)
    snr = snr_and_objective(F, variances).snr
    return np.where(missing, 0.0, snr)


@dataclass(frozen=True)
class ReferenceDistributions:
    """Exact optimal-sampling references for one state"""

    p: np.ndarray
    f: np.ndarray
    F: np.ndarray
    q_opt_per_component: np.ndarray
    q_opt_is_mixture: np.ndarray
    q_opt_snis_mixture: np.ndarray

    def kl(self, qa: np.ndarray, qb: np.ndarray) -> float:
        return kl_divergence(qa, qb)

    def snr(self, q: np.ndarray) -> np.ndarray:
        return snr_under_distribution(self.p, self.f, self.F, q)


def reference_distributions(
    model,
    op: LocalOperator,
    basis: Optional[BasisEnumeration],
    threads: Optional[int] = None,
) -> ReferenceDistributions:
    """q_opt^i ~ p |f_i - F_i|, q_opt^IS ~ p sum_i |f_i| and their SNIS average."""
    if basis is None:
        raise OracleOnlyError("reference distributions need an enumerated basis")

    batch = sample_exact(model, 2.0, basis, threads)
    weights = compute_weights(batch)
    values = local_values(op, model, batch, threads)
    jac = model.jacobian(batch.configs, threads)
    f = local_gradients(jac, values, weights)
    F = weights.w_tilde @ f
    p = weights.w_tilde

    per_component = _normalized_rows((p[:, None] * np.abs(f - F[None, :])).T, p[None, :])
    is_mixture = _normalized_rows(p * np.abs(f).sum(axis=1), p)
    snis_mixture = per_component.mean(axis=0)
    return ReferenceDistributions(
        p=p,
        f=f,
        F=F,
        q_opt_per_component=per_component,
        q_opt_is_mixture=is_mixture,
        q_opt_snis_mixture=snis_mixture,
    )


@dataclass(frozen=True)
class StabilityVerdict:
    reliable: bool
    recommended_n_samples: int


def stability_criterion(
    L_IS: float,
    n_samples: int,
    n_min: int = DEFAULT_MIN_SAMPLES,
    n_max: int = DEFAULT_MAX_SAMPLES,
) -> StabilityVerdict:
    """Gradient estimates are trusted once sqrt(N_s) * L_IS >= 1."""
    if L_IS < 0:
        raise ValueError("L_IS must be non-negative")
    reliable = math.sqrt(n_samples) * L_IS >= 1.0
    if L_IS == 0.0:
        recommended = n_max
    else:
        # Relative slack keeps exact squares such as 1/0.01^2 from rounding up
        recommended = math.ceil(1.0 / L_IS**2 * (1.0 - 1e-12))
    return StabilityVerdict(reliable, int(min(max(recommended, n_min), n_max)))
