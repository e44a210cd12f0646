#!/usr/bin/env python
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..base import WavefunctionModel
from ..logging_config import get_logger

logger = get_logger(__name__)


class LogLinearModel(WavefunctionModel):
    """Real Jastrow-style log-linear state.

    log psi(x) = sum_i c_i sigma_i + sum_(i,j) K_ij sigma_i sigma_j, with the
    pair terms present only for the bonds given at construction.
    """

    KIND = "log-linear"

    def __init__(
        self,
        n_sites: int,
        params: np.ndarray,
        pairs: Optional[Sequence[Tuple[int, int]]] = None,
    ):
        self.pairs = tuple((int(i), int(j)) for i, j in (pairs or ()))
        super().__init__(n_sites, params)
        if self.pairs:
            self._left = np.array([i for i, _ in self.pairs])
            self._right = np.array([j for _, j in self.pairs])

    def expected_params(self, n_sites: int) -> int:
        return n_sites + len(self.pairs)

    def shape_fields(self) -> Dict[str, Any]:
        return {"pairs": [list(p) for p in self.pairs]}

    def _features(self, spins: np.ndarray) -> np.ndarray:
        if not self.pairs:
            return spins
        return np.concatenate([spins, spins[:, self._left] * spins[:, self._right]], axis=1)

    def log_amplitudes(self, spins: np.ndarray) -> np.ndarray:
        return (self._features(spins) @ self.params).astype(np.complex128)

    def jacobian_rows(self, spins: np.ndarray) -> np.ndarray:
        return self._features(spins).astype(np.complex128)

    @classmethod
    def initialize(cls, n_sites: int, rng: np.random.Generator, scale: float = 0.01, pairs=None):
        n_params = n_sites + len(pairs or ())
        return cls(n_sites, scale * rng.standard_normal(n_params), pairs)
