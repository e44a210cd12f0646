#!/usr/bin/env python
"""
Local operators stored as connected-element maps, spin Hamiltonians built
on a Lattice, local estimators and exact-diagonalization oracles.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from .errors import SizeMismatchError, ZeroAmplitudeError
from .hilbert import BasisEnumeration, Lattice, SpinConfiguration, bits_to_spins
from .logging_config import get_logger
from .utils import blocked_map

logger = get_logger(__name__)

# Below this dimension ground states come from dense eigh
DENSE_LIMIT = 4096


@dataclass(frozen=True)
class LocalValueBatch:
    """Local estimator values aligned with a SampleBatch"""

    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


class LocalOperator(ABC):
    """Operator H given by its connected elements <x|H|x'>.

    Every configuration has ``n_connected`` slots: slot 0 is the diagonal
    element (present even when zero), the others are off-diagonal moves whose
    element may be zero, in which case the slot points back to x.
    """

    def __init__(self, kind: str, n_sites: int, couplings: Dict[str, float]):
        self.kind = kind
        self.n_sites = int(n_sites)
        self.couplings = dict(couplings)

    @property
    @abstractmethod
    def n_connected(self) -> int:
        pass

    @abstractmethod
    def connected_batch(self, bits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(n, K) connected words and (n, K) complex matrix elements."""
        pass

    def connected(self, x: SpinConfiguration) -> List[Tuple[SpinConfiguration, complex]]:
        if x.n_sites != self.n_sites:
            raise SizeMismatchError(f"operator acts on {self.n_sites} sites, got {x.n_sites}")
        words, mels = self.connected_batch(np.array([x.bits], dtype=np.int64))
        out = [(x, complex(mels[0, 0]))]
        for w, m in zip(words[0, 1:], mels[0, 1:]):
            if m != 0:
                out.append((SpinConfiguration(int(w), self.n_sites), complex(m)))
        return out

    def to_sparse(self, basis: BasisEnumeration) -> sp.csr_matrix:
        words, mels = self.connected_batch(basis.configurations)
        cols = basis.index_of(words.ravel()).reshape(words.shape)
        rows = np.broadcast_to(np.arange(len(basis))[:, None], words.shape)
        keep = (mels != 0) & (cols >= 0)
        dim = len(basis)
        return sp.csr_matrix((mels[keep], (rows[keep], cols[keep])), shape=(dim, dim))

    def to_dense(self, basis: BasisEnumeration) -> np.ndarray:
        return self.to_sparse(basis).toarray()

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.couplings.items())
        return f"LocalOperator({self.kind}, N={self.n_sites}, {args})"


def _bond_arrays(pairs) -> Tuple[np.ndarray, np.ndarray]:
    i = np.array([p[0] for p in pairs], dtype=np.int64)
    j = np.array([p[1] for p in pairs], dtype=np.int64)
    return i, j


class HeisenbergOperator(LocalOperator):
    """J1 sum_<ij> S_i.S_j + J2 sum_<<ij>> S_i.S_j with S = sigma / 2"""

    def __init__(self, lattice: Lattice, J1: float, J2: float = 0.0):
        super().__init__("heisenberg", lattice.n_sites, {"J1": J1, "J2": J2})
        pairs = list(lattice.nn_pairs)
        strength = [J1] * len(lattice.nn_pairs)
        if J2 != 0.0:
            pairs += list(lattice.nnn_pairs)
            strength += [J2] * len(lattice.nnn_pairs)
        self._i, self._j = _bond_arrays(pairs)
        self._J = np.array(strength, dtype=np.float64)
        self._masks = (np.int64(1) << self._i) | (np.int64(1) << self._j)

    @property
    def n_connected(self) -> int:
        return 1 + len(self._J)

    def connected_batch(self, bits):
        bits = np.asarray(bits, dtype=np.int64)
        bi = (bits[:, None] >> self._i) & 1
        bj = (bits[:, None] >> self._j) & 1
        aligned = bi == bj
        diag = np.where(aligned, 0.25, -0.25) @ self._J
        flipped = np.where(aligned, bits[:, None], bits[:, None] ^ self._masks)
        off = np.where(aligned, 0.0, 0.5 * self._J)
        words = np.concatenate([bits[:, None], flipped], axis=1)
        mels = np.concatenate([diag[:, None], off], axis=1).astype(np.complex128)
        return words, mels


class TransverseIsingOperator(LocalOperator):
    """-4J sum_<ij> S^z_i S^z_j - 2h sum_i S^x_i"""

    def __init__(self, lattice: Lattice, J: float, h: float):
        super().__init__("tfim", lattice.n_sites, {"J": J, "h": h})
        self._i, self._j = _bond_arrays(lattice.nn_pairs)
        self._J = float(J)
        self._h = float(h)
        self._site_masks = np.int64(1) << np.arange(self.n_sites, dtype=np.int64)

    @property
    def n_connected(self) -> int:
        return 1 + self.n_sites

    def connected_batch(self, bits):
        bits = np.asarray(bits, dtype=np.int64)
        n = len(bits)
        if len(self._i):
            spins = bits_to_spins(bits, self.n_sites)
            diag = -self._J * np.sum(spins[:, self._i] * spins[:, self._j], axis=1)
        else:
            diag = np.zeros(n)
        words = np.concatenate([bits[:, None], bits[:, None] ^ self._site_masks], axis=1)
        off = np.full((n, self.n_sites), -self._h)
        mels = np.concatenate([diag[:, None], off], axis=1).astype(np.complex128)
        return words, mels


def heisenberg_j1j2(lattice: Lattice, J1: float, J2: float = 0.0) -> HeisenbergOperator:
    return HeisenbergOperator(lattice, J1, J2)


def tfim(lattice: Lattice, J: float, h: float) -> TransverseIsingOperator:
    return TransverseIsingOperator(lattice, J, h)


def local_values(op: LocalOperator, model, batch, threads: Optional[int] = None) -> LocalValueBatch:
    """values[mu] = sum_x' <x_mu|H|x'> psi(x') / psi(x_mu)

    ``model`` is anything exposing ``log_amplitudes_of(bits)`` (variational
    models and target states alike). Zero-amplitude configurations of an
    exact batch carry no Born weight and get the value 0; in a sampled batch
    they are an error.
    """
    log_amps = np.asarray(batch.log_amps)
    dead = ~np.isfinite(log_amps.real)
    if np.any(dead) and not batch.is_exact:
        index = int(np.flatnonzero(dead)[0])
        raise ZeroAmplitudeError(index)

    def block(idx: np.ndarray) -> np.ndarray:
        words, mels = op.connected_batch(batch.configs[idx])
        own = log_amps[idx]
        active = (mels != 0) & ~dead[idx][:, None]
        out = np.zeros(len(idx), dtype=np.complex128)
        if not np.any(active):
            return out
        rows, cols = np.nonzero(active)
        connected_logs = model.log_amplitudes_of(words[rows, cols], threads=1)
        with np.errstate(under="ignore"):
            terms = mels[rows, cols] * np.exp(connected_logs - own[rows])
        np.add.at(out, rows, terms)
        return out

    values = blocked_map(block, np.arange(len(batch.configs)), threads, block_rows=2048)
    return LocalValueBatch(values)


def ground_state(op: LocalOperator, basis: BasisEnumeration) -> Tuple[float, np.ndarray]:
    """Lowest eigenpair of op restricted to the enumerated basis."""
    H = op.to_sparse(basis)
    if H.shape[0] <= DENSE_LIMIT:
        evals, evecs = eigh(H.toarray(), subset_by_index=[0, 0])
        energy, vector = evals[0], evecs[:, 0]
    else:
        evals, evecs = eigsh(H, k=1, which="SA")
        energy, vector = evals[0], evecs[:, 0]
    logger.info(f"Exact ground state of {op.kind} on {len(basis)} states: E0={energy:.12g}")
    return float(energy), vector


def rayleigh_quotient(op: LocalOperator, basis: BasisEnumeration, amplitudes: np.ndarray) -> float:
    psi = np.asarray(amplitudes, dtype=np.complex128)
    H = op.to_sparse(basis)
    return float(np.real(np.vdot(psi, H @ psi) / np.vdot(psi, psi)))
