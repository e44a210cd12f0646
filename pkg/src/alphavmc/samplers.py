#!/usr/bin/env python
"""
Sampling from q_alpha(x) ~ |psi(x)|^alpha.

Two modes produce the same ``SampleBatch`` type: exact enumeration, where the
batch is the whole basis weighted by its exact probabilities, and Metropolis
chains that persist between calls so that consecutive optimization steps
start from already thermalized configurations.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateStateError,
    DiagnosticsNotApplicableError,
    SamplerStallError,
    SizeMismatchError,
)
from .hilbert import BasisEnumeration, bits_to_spins
from .logging_config import get_logger
from .schema import SamplerConfig
from .utils import spawn_generators

logger = get_logger(__name__)

EXACT = "exact-full-summation"
MCMC = "mcmc"


@dataclass(frozen=True)
class SampleBatch:
    """Configurations and cached amplitudes for one estimation round.

    MCMC batches are ordered (chain, step).
    """

    configs: np.ndarray
    log_amps: np.ndarray
    log_q_unnorm: np.ndarray
    mode: str
    alpha: float
    n_sites: int
    exact_probs: Optional[np.ndarray] = None
    acceptance_rate: Optional[float] = None
    n_chains: int = 1
    batch_id: int = 0

    def __post_init__(self):
        if len(self.configs) != len(self.log_amps):
            raise SizeMismatchError("configs and log_amps differ in length")
        if self.mode == EXACT and self.exact_probs is None:
            raise ValueError("exact batches need exact_probs")

    @property
    def is_exact(self) -> bool:
        return self.mode == EXACT

    @property
    def n_samples(self) -> int:
        return len(self.configs)

    @property
    def samples_per_chain(self) -> int:
        return self.n_samples // self.n_chains

    def sample_measure(self) -> np.ndarray:
        """Weight of each row in an average under q: exact probabilities or 1/N_s."""
        if self.is_exact:
            return self.exact_probs
        return np.full(self.n_samples, 1.0 / self.n_samples)

    def spins(self) -> np.ndarray:
        return bits_to_spins(self.configs, self.n_sites)


def log_q_of(log_amps: np.ndarray, alpha: float) -> np.ndarray:
    """alpha * log|psi| with the convention |psi|^0 = 1."""
    if alpha == 0.0:
        return np.zeros(len(log_amps))
    return alpha * np.real(log_amps)


def sample_exact(model, alpha: float, basis: BasisEnumeration, threads: Optional[int] = None) -> SampleBatch:
    """Whole-basis batch carrying q_alpha(x) = |psi(x)|^alpha / Z_alpha."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    if len(basis) == 0:
        raise ValueError("empty basis")

    log_amps = model.log_amplitudes_of(basis.configurations, threads)
    if not np.any(np.isfinite(np.real(log_amps))):
        raise DegenerateStateError("all amplitudes vanish on the enumerated basis")

    log_q = log_q_of(log_amps, alpha)
    probs = np.exp(log_q - logsumexp(log_q))
    return SampleBatch(
        configs=basis.configurations,
        log_amps=log_amps,
        log_q_unnorm=log_q,
        mode=EXACT,
        alpha=float(alpha),
        n_sites=basis.n_sites,
        exact_probs=probs,
    )


class MetropolisSampler:
    """Persistent single-move Metropolis chains for |psi|^alpha.

    All chains advance in lockstep; each owns a generator spawned from the
    configured seed, so the batch does not depend on scheduling.
    """

    def __init__(
        self,
        n_sites: int,
        config: SamplerConfig,
        bonds: Sequence[Tuple[int, int]] = (),
        n_up: Optional[int] = None,
    ):
        self.n_sites = int(n_sites)
        self.config = config
        self.move = config.move or ("exchange" if n_up is not None else "flip")
        self.n_up = n_up
        if self.move == "exchange":
            if not bonds:
                raise ValueError("exchange moves need a bond list")
            pairs = np.array(bonds, dtype=np.int64)
            self._bond_i, self._bond_j = pairs[:, 0], pairs[:, 1]
            self._bond_masks = (np.int64(1) << pairs[:, 0]) | (np.int64(1) << pairs[:, 1])
        self._site_masks = np.int64(1) << np.arange(self.n_sites, dtype=np.int64)
        self.n_samples = config.n_samples
        self._seed_offset = 0
        self._rngs = spawn_generators(config.seed, config.n_chains)
        self._states: Optional[np.ndarray] = None
        self._calls = 0

    @property
    def n_chains(self) -> int:
        return self.config.n_chains

    @property
    def samples_per_chain(self) -> int:
        """Chains run equal lengths, so N_s is n_samples rounded up to a multiple of n_chains."""
        return -(-self.n_samples // self.n_chains)

    @property
    def burn_in_sweeps(self) -> int:
        if self.config.burn_in_sweeps is None:
            return 10 * self.n_sites
        return self.config.burn_in_sweeps

    def reseed(self, offset: int):
        """Restart all chains from a seed shifted by ``offset``."""
        self._seed_offset = int(offset)
        seed = (self.config.seed + self._seed_offset) % 2**64
        self._rngs = spawn_generators(seed, self.n_chains)
        self._states = None
        logger.info(f"Sampler reseeded with offset {offset}")

    def set_states(self, bits: np.ndarray):
        bits = np.asarray(bits, dtype=np.int64)
        if bits.shape != (self.n_chains,):
            raise SizeMismatchError(f"need {self.n_chains} chain states, got {bits.shape}")
        self._states = bits.copy()

    @property
    def states(self) -> Optional[np.ndarray]:
        return None if self._states is None else self._states.copy()

    def _random_state(self, rng: np.random.Generator) -> int:
        if self.n_up is None:
            occupation = rng.integers(0, 2, size=self.n_sites)
        else:
            occupation = np.zeros(self.n_sites, dtype=np.int64)
            occupation[rng.permutation(self.n_sites)[: self.n_sites - self.n_up]] = 1
        return int(np.dot(occupation, self._site_masks))

    def _evaluate(self, model, bits: np.ndarray) -> np.ndarray:
        return model.log_amplitudes(bits_to_spins(bits, self.n_sites))

    def _initialize(self, model) -> Tuple[np.ndarray, np.ndarray]:
        states = self._states
        if states is None:
            states = np.array([self._random_state(rng) for rng in self._rngs], dtype=np.int64)
        logs = self._evaluate(model, states)
        for _ in range(self.config.max_init_attempts):
            dead = ~np.isfinite(np.real(logs))
            if not np.any(dead):
                return states, logs
            for c in np.flatnonzero(dead):
                states[c] = self._random_state(self._rngs[c])
            logs[dead] = self._evaluate(model, states[dead])
        raise SamplerStallError(
            f"no finite-amplitude start found after {self.config.max_init_attempts} attempts"
        )

    def _propose(self, states: np.ndarray, picks: np.ndarray) -> np.ndarray:
        if self.move == "flip":
            return states ^ self._site_masks[picks]
        masks = self._bond_masks[picks]
        # Aligned pairs give the identity move
        differ = ((states >> self._bond_i[picks]) & 1) != ((states >> self._bond_j[picks]) & 1)
        return np.where(differ, states ^ masks, states)

    def _sweep(self, model, alpha, states, logs) -> Tuple[np.ndarray, np.ndarray, int]:
        n_moves = len(self._bond_masks) if self.move == "exchange" else self.n_sites
        picks = np.stack([rng.integers(0, n_moves, size=self.n_sites) for rng in self._rngs], axis=1)
        uniforms = np.stack([rng.random(self.n_sites) for rng in self._rngs], axis=1)
        accepted = 0
        for k in range(self.n_sites):
            proposal = self._propose(states, picks[k])
            new_logs = self._evaluate(model, proposal)
            finite = np.isfinite(np.real(new_logs))
            log_ratio = np.where(
                finite, alpha * (np.real(new_logs) - np.real(logs)), -np.inf
            )
            with np.errstate(over="ignore"):
                accept = finite & (uniforms[k] < np.exp(np.minimum(log_ratio, 0.0)))
            states = np.where(accept, proposal, states)
            logs = np.where(accept, new_logs, logs)
            accepted += int(np.count_nonzero(accept))
        return states, logs, accepted

    def sample(self, model, alpha: float) -> SampleBatch:
        if alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {alpha}")
        if model.n_sites != self.n_sites:
            raise SizeMismatchError(f"model has {model.n_sites} sites, sampler {self.n_sites}")

        states, logs = self._initialize(model)
        if self._calls == 0 or self._states is None:
            for _ in range(self.burn_in_sweeps):
                states, logs, _ = self._sweep(model, alpha, states, logs)

        per_chain = self.samples_per_chain
        configs = np.empty((per_chain, self.n_chains), dtype=np.int64)
        log_amps = np.empty((per_chain, self.n_chains), dtype=np.complex128)
        accepted = 0
        proposals = 0
        for step in range(per_chain):
            for _ in range(self.config.sweeps_per_sample):
                states, logs, acc = self._sweep(model, alpha, states, logs)
                accepted += acc
                proposals += self.n_sites * self.n_chains
            configs[step] = states
            log_amps[step] = logs

        self._states = states
        self._calls += 1
        rate = accepted / proposals if proposals else 1.0
        logger.debug(f"MCMC alpha={alpha:.4f}: {per_chain * self.n_chains} samples, acceptance {rate:.3f}")

        log_amps = log_amps.T.ravel()
        return SampleBatch(
            configs=configs.T.ravel(),
            log_amps=log_amps,
            log_q_unnorm=log_q_of(log_amps, alpha),
            mode=MCMC,
            alpha=float(alpha),
            n_sites=self.n_sites,
            acceptance_rate=rate,
            n_chains=self.n_chains,
            batch_id=self._calls,
        )


def sample_mcmc(
    model,
    alpha: float,
    cfg: SamplerConfig,
    bonds: Sequence[Tuple[int, int]] = (),
    n_up: Optional[int] = None,
) -> SampleBatch:
    """One-shot batch from freshly seeded chains."""
    return MetropolisSampler(model.n_sites, cfg, bonds, n_up).sample(model, alpha)


@dataclass(frozen=True)
class ChainDiagnostics:
    acceptance_rate: float
    split_rhat: float


def split_rhat(draws: np.ndarray) -> float:
    """Split potential scale reduction over a (n_chains, n_draws) array."""
    n_chains, n_draws = draws.shape
    half = n_draws // 2
    if half < 1:
        raise DiagnosticsNotApplicableError("chains too short for split R-hat")
    halves = np.concatenate([draws[:, :half], draws[:, half : 2 * half]], axis=0)
    if np.ptp(halves) == 0:
        return 1.0
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean() if half > 1 else 0.0
    between = half * means.var(ddof=1)
    # Variances below rounding noise of the mean count as frozen chains
    floor = np.finfo(float).eps * max(1.0, float(np.mean(halves)) ** 2)
    if within <= floor:
        return 1.0 if between <= half * floor else float("inf")
    pooled = (half - 1) / half * within + between / half
    return float(np.sqrt(pooled / within))


def chain_diagnostics(batch: SampleBatch) -> ChainDiagnostics:
    if batch.is_exact:
        raise DiagnosticsNotApplicableError("exact batches have no chains")
    if batch.n_chains < 2:
        raise DiagnosticsNotApplicableError("R-hat needs at least two chains")
    draws = np.real(batch.log_amps).reshape(batch.n_chains, batch.samples_per_chain)
    return ChainDiagnostics(
        acceptance_rate=float(batch.acceptance_rate if batch.acceptance_rate is not None else 1.0),
        split_rhat=split_rhat(draws),
    )


def total_variation(counts_bits: np.ndarray, basis: BasisEnumeration, probs: np.ndarray) -> float:
    """TV distance between the empirical law of sampled words and exact probabilities."""
    index = basis.index_of(counts_bits)
    empirical = np.bincount(index[index >= 0], minlength=len(basis)) / len(counts_bits)
    return 0.5 * float(np.abs(empirical - probs).sum())


class BatchSource:
    """Uniform front over exact enumeration and persistent Metropolis chains.

    ``state`` is anything exposing ``n_sites`` and ``log_amplitudes`` /
    ``log_amplitudes_of``: a variational model or a fixed target.
    """

    def __init__(
        self,
        config: SamplerConfig,
        n_sites: int,
        basis: Optional[BasisEnumeration] = None,
        bonds: Sequence[Tuple[int, int]] = (),
        n_up: Optional[int] = None,
        threads: Optional[int] = None,
    ):
        self.config = config
        self.threads = threads
        self.basis = basis
        self._chains: Optional[MetropolisSampler] = None
        if config.mode == "exact":
            if basis is None:
                raise ValueError("exact sampling needs an enumerated basis")
        else:
            self._chains = MetropolisSampler(n_sites, config, bonds, n_up)

    @property
    def is_exact(self) -> bool:
        return self._chains is None

    @property
    def n_samples(self) -> int:
        return len(self.basis) if self.is_exact else self._chains.n_samples

    @n_samples.setter
    def n_samples(self, value: int):
        if not self.is_exact:
            self._chains.n_samples = int(value)

    def draw(self, state, alpha: float) -> SampleBatch:
        if self.is_exact:
            return sample_exact(state, alpha, self.basis, self.threads)
        return self._chains.sample(state, alpha)

    def reseed(self, offset: int):
        if not self.is_exact:
            self._chains.reseed(offset)
