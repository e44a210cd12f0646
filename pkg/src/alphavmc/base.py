#!/usr/bin/env python
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from .errors import SizeMismatchError
from .hilbert import SpinConfiguration, bits_to_spins
from .utils import blocked_map


@dataclass(frozen=True)
class JacobianMatrix:
    """Rows of d log psi(x_mu) / d theta_i for one batch"""

    rows: np.ndarray
    origin_batch: Optional[int] = None

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def n_params(self) -> int:
        return self.rows.shape[1]


class WavefunctionModel(ABC):
    """Variational wavefunction with analytic log-derivatives.

    Parameters live in one real vector; complex parameters are stored as
    interleaved (real, imaginary) pairs. Instances are never mutated:
    ``perturb`` and ``with_params`` return new models.
    """

    KIND = "abstract"

    def __init__(self, n_sites: int, params: np.ndarray):
        params = np.array(params, dtype=np.float64).ravel()
        if params.size != self.expected_params(n_sites):
            raise SizeMismatchError(
                f"{self.KIND} on {n_sites} sites needs {self.expected_params(n_sites)} "
                f"parameters, got {params.size}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("parameters must be finite")
        params.setflags(write=False)
        self.n_sites = int(n_sites)
        self._params = params

    @property
    def params(self) -> np.ndarray:
        return self._params

    @property
    def n_params(self) -> int:
        return self._params.size

    @abstractmethod
    def expected_params(self, n_sites: int) -> int:
        """Length of the real parameter vector for this shape - REQUIRED"""
        pass

    @abstractmethod
    def log_amplitudes(self, spins: np.ndarray) -> np.ndarray:
        """log psi for a (n, n_sites) array of sigma = +-1 - REQUIRED"""
        pass

    @abstractmethod
    def jacobian_rows(self, spins: np.ndarray) -> np.ndarray:
        """(n, n_params) complex log-derivatives - REQUIRED"""
        pass

    @abstractmethod
    def shape_fields(self) -> Dict[str, Any]:
        """Kind-specific shape entries stored in checkpoints - REQUIRED"""
        pass

    def with_params(self, params: np.ndarray) -> "WavefunctionModel":
        return type(self)(self.n_sites, params, **self.shape_fields())

    def perturb(self, delta: np.ndarray) -> "WavefunctionModel":
        delta = np.asarray(delta, dtype=np.float64).ravel()
        if delta.size != self.n_params:
            raise SizeMismatchError(f"delta has {delta.size} entries, model has {self.n_params}")
        return self.with_params(self._params + delta)

    def _spins_of(self, x: SpinConfiguration) -> np.ndarray:
        if x.n_sites != self.n_sites:
            raise SizeMismatchError(
                f"configuration has {x.n_sites} sites, model has {self.n_sites}"
            )
        return x.spins()[None, :]

    def log_amplitude(self, x: SpinConfiguration) -> complex:
        return complex(self.log_amplitudes(self._spins_of(x))[0])

    def log_derivatives(self, x: SpinConfiguration) -> np.ndarray:
        return self.jacobian_rows(self._spins_of(x))[0]

    def log_amplitudes_of(self, bits: np.ndarray, threads: Optional[int] = None) -> np.ndarray:
        n = self.n_sites
        return blocked_map(lambda b: self.log_amplitudes(bits_to_spins(b, n)), bits, threads)

    def jacobian(
        self, bits: np.ndarray, threads: Optional[int] = None, origin: Optional[int] = None
    ) -> JacobianMatrix:
        n = self.n_sites
        rows = blocked_map(lambda b: self.jacobian_rows(bits_to_spins(b, n)), bits, threads)
        return JacobianMatrix(rows, origin)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.KIND,
            "n_sites": self.n_sites,
            **self.shape_fields(),
            "params": [float(v) for v in self._params],
        }

    def __repr__(self):
        return f"{type(self).__name__}(n_sites={self.n_sites}, n_params={self.n_params})"


def interleave(z: np.ndarray) -> np.ndarray:
    """Complex vector -> (re, im, re, im, ...) real vector"""
    z = np.asarray(z, dtype=np.complex128).ravel()
    out = np.empty(2 * z.size, dtype=np.float64)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def deinterleave(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return values[0::2] + 1j * values[1::2]


def holomorphic_columns(dlog: np.ndarray) -> np.ndarray:
    """Expand d log psi / dz into derivatives w.r.t. (Re z, Im z) pairs.

    For holomorphic dependence d/da = d/dz and d/db = i d/dz.
    """
    n, k = dlog.shape
    out = np.empty((n, 2 * k), dtype=np.complex128)
    out[:, 0::2] = dlog
    out[:, 1::2] = 1j * dlog
    return out
