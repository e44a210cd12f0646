#!/usr/bin/env python
from typing import Any, Dict

import numpy as np

from ..base import WavefunctionModel, deinterleave, holomorphic_columns, interleave
from ..logging_config import get_logger

logger = get_logger(__name__)

# Beyond this |Re z| the correction log(1 + e^{-2|z|}) is below double precision
LOGCOSH_CUTOFF = 20.0


def log_2cosh(z: np.ndarray) -> np.ndarray:
    """Overflow-safe log(2 cosh z) for complex z."""
    z = np.asarray(z, dtype=np.complex128)
    sign = np.where(z.real >= 0, 1.0, -1.0)
    zs = z * sign
    with np.errstate(divide="ignore"):
        tail = np.where(zs.real > LOGCOSH_CUTOFF, 0.0, np.log1p(np.exp(-2.0 * zs)))
    return zs + tail


class RBMModel(WavefunctionModel):
    """Complex restricted Boltzmann machine.

    log psi(x) = a.sigma + sum_j log 2cosh(b_j + W_j.sigma)

    Real parameter layout (each complex entry interleaved): a (N), b (M),
    W (M x N row-major), so n_params = 2 (N + M + N M).
    """

    KIND = "complex-RBM"

    def __init__(self, n_sites: int, params: np.ndarray, n_hidden: int = 1):
        self.n_hidden = int(n_hidden)
        super().__init__(n_sites, params)
        z = deinterleave(self.params)
        n, m = self.n_sites, self.n_hidden
        self.a = z[:n]
        self.b = z[n : n + m]
        self.W = z[n + m :].reshape(m, n)

    def expected_params(self, n_sites: int) -> int:
        return 2 * (n_sites + self.n_hidden + n_sites * self.n_hidden)

    def shape_fields(self) -> Dict[str, Any]:
        return {"n_hidden": self.n_hidden}

    def _theta(self, spins: np.ndarray) -> np.ndarray:
        return self.b[None, :] + spins @ self.W.T

    def log_amplitudes(self, spins: np.ndarray) -> np.ndarray:
        theta = self._theta(spins)
        return spins @ self.a + log_2cosh(theta).sum(axis=1)

    def jacobian_rows(self, spins: np.ndarray) -> np.ndarray:
        t = np.tanh(self._theta(spins))
        n = spins.shape[0]
        dW = (t[:, :, None] * spins[:, None, :]).reshape(n, -1)
        dz = np.concatenate([spins.astype(np.complex128), t, dW], axis=1)
        return holomorphic_columns(dz)

    @classmethod
    def initialize(
        cls,
        n_sites: int,
        n_hidden: int,
        rng: np.random.Generator,
        scale: float = 0.01,
    ) -> "RBMModel":
        n_complex = n_sites + n_hidden + n_sites * n_hidden
        z = scale * (rng.standard_normal(n_complex) + 1j * rng.standard_normal(n_complex))
        return cls(n_sites, interleave(z), n_hidden=n_hidden)
