#!/usr/bin/env python
from typing import Any, Dict

import numpy as np

from ..base import WavefunctionModel, deinterleave, holomorphic_columns, interleave


class MeanFieldModel(WavefunctionModel):
    """Product state: psi(x) = prod_i exp(z_i n_i), n_i the occupation of site i.

    One complex parameter per site, so the spin-up amplitude of every site is
    1 and the spin-down amplitude is exp(z_i).
    """

    KIND = "mean-field-product"

    def expected_params(self, n_sites: int) -> int:
        return 2 * n_sites

    def shape_fields(self) -> Dict[str, Any]:
        return {}

    @staticmethod
    def _occupations(spins: np.ndarray) -> np.ndarray:
        return (1.0 - spins) / 2.0

    def log_amplitudes(self, spins: np.ndarray) -> np.ndarray:
        return self._occupations(spins) @ deinterleave(self.params)

    def jacobian_rows(self, spins: np.ndarray) -> np.ndarray:
        return holomorphic_columns(self._occupations(spins).astype(np.complex128))

    @classmethod
    def initialize(cls, n_sites: int, rng: np.random.Generator, scale: float = 0.01):
        z = scale * (rng.standard_normal(n_sites) + 1j * rng.standard_normal(n_sites))
        return cls(n_sites, interleave(z))
