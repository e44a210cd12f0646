#!/usr/bin/env python
"""
Spin-1/2 configurations, lattice geometry and basis enumeration.

A configuration is an integer word whose bit ``i`` is the occupation of
site ``i``. Spins follow the qubit convention: a clear bit is spin up
(sigma = +1), a set bit is spin down (sigma = -1).
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import comb

from .errors import EnumerationTooLargeError, InvalidGeometryError, SiteIndexError
from .logging_config import get_logger

logger = get_logger(__name__)

MAX_SITES = 62
MAX_ENUMERATION_SITES = 24

Pair = Tuple[int, int]


@dataclass(frozen=True)
class SpinConfiguration:
    """Packed basis state |x>"""

    bits: int
    n_sites: int

    def __post_init__(self):
        if not 1 <= self.n_sites <= MAX_SITES:
            raise InvalidGeometryError(f"n_sites must be in [1, {MAX_SITES}], got {self.n_sites}")
        if self.bits < 0 or self.bits >> self.n_sites:
            raise ValueError(f"bits {self.bits:#x} do not fit in {self.n_sites} sites")

    def spins(self) -> np.ndarray:
        """sigma_i in {+1, -1} for every site"""
        return bits_to_spins(np.array([self.bits], dtype=np.int64), self.n_sites)[0]

    @property
    def n_up(self) -> int:
        return self.n_sites - bin(self.bits).count("1")

    def __str__(self):
        return "".join("↑" if s > 0 else "↓" for s in self.spins())


def _check_site(site: int, n_sites: int):
    if not 0 <= site < n_sites:
        raise SiteIndexError(f"site {site} out of range for {n_sites} sites")


def flip(x: SpinConfiguration, site: int) -> SpinConfiguration:
    _check_site(site, x.n_sites)
    return SpinConfiguration(x.bits ^ (1 << site), x.n_sites)


def exchange(x: SpinConfiguration, i: int, j: int) -> SpinConfiguration:
    """Swap the occupations of sites i and j (identity when they agree)."""
    _check_site(i, x.n_sites)
    _check_site(j, x.n_sites)
    if ((x.bits >> i) & 1) == ((x.bits >> j) & 1):
        return x
    return SpinConfiguration(x.bits ^ ((1 << i) | (1 << j)), x.n_sites)


def bits_to_spins(bits: np.ndarray, n_sites: int) -> np.ndarray:
    """Unpack an array of words into a (n, n_sites) array of sigma = +-1."""
    bits = np.asarray(bits, dtype=np.int64)
    occupation = (bits[:, None] >> np.arange(n_sites, dtype=np.int64)) & 1
    return (1 - 2 * occupation).astype(np.float64)


def spins_to_bits(spins: np.ndarray) -> np.ndarray:
    occupation = (np.asarray(spins) < 0).astype(np.int64)
    weights = np.left_shift(np.int64(1), np.arange(occupation.shape[1], dtype=np.int64))
    return occupation @ weights


@dataclass(frozen=True)
class Lattice:
    """Site graph with nearest and next-nearest neighbour bonds.

    ``side`` is the linear size; ``dims`` is 2 for the square lattice and 1
    for chains.
    """

    side: int
    periodic: bool
    dims: int
    nn_pairs: Tuple[Pair, ...] = field(default_factory=tuple)
    nnn_pairs: Tuple[Pair, ...] = field(default_factory=tuple)

    @property
    def n_sites(self) -> int:
        return self.side**self.dims


def _dedup(pairs: List[Pair]) -> Tuple[Pair, ...]:
    unique = {(min(i, j), max(i, j)) for i, j in pairs if i != j}
    return tuple(sorted(unique))


def build_square_lattice(L: int, periodic: bool) -> Lattice:
    """Square L x L lattice with row-major site indices."""
    if L < 2:
        raise InvalidGeometryError(f"square lattice needs L >= 2, got {L}")

    def site(r: int, c: int) -> Optional[int]:
        if periodic:
            return (r % L) * L + (c % L)
        if 0 <= r < L and 0 <= c < L:
            return r * L + c
        return None

    nn: List[Pair] = []
    nnn: List[Pair] = []
    for r in range(L):
        for c in range(L):
            here = site(r, c)
            for dr, dc, bucket in ((0, 1, nn), (1, 0, nn), (1, 1, nnn), (1, -1, nnn)):
                there = site(r + dr, c + dc)
                if there is not None:
                    bucket.append((here, there))

    lattice = Lattice(L, periodic, 2, _dedup(nn), _dedup(nnn))
    logger.debug(
        f"Square lattice L={L} periodic={periodic}: "
        f"{len(lattice.nn_pairs)} nn, {len(lattice.nnn_pairs)} nnn bonds"
    )
    return lattice


def build_chain(n: int, periodic: bool) -> Lattice:
    """Open or closed chain of n sites (no next-nearest bonds)."""
    if n < 1:
        raise InvalidGeometryError(f"chain needs at least one site, got {n}")
    nn = [(i, i + 1) for i in range(n - 1)]
    if periodic and n > 2:
        nn.append((0, n - 1))
    return Lattice(n, periodic, 1, _dedup(nn), ())


@dataclass(frozen=True)
class BasisEnumeration:
    """All configurations of a system, optionally restricted to n_up up spins"""

    configurations: np.ndarray
    n_sites: int
    sector: Optional[int] = None

    def __len__(self) -> int:
        return len(self.configurations)

    def spins(self) -> np.ndarray:
        return bits_to_spins(self.configurations, self.n_sites)

    def index_of(self, bits: np.ndarray) -> np.ndarray:
        """Position of each word in the enumeration, -1 when absent."""
        bits = np.asarray(bits, dtype=np.int64)
        pos = np.searchsorted(self.configurations, bits)
        pos = np.clip(pos, 0, len(self.configurations) - 1)
        found = self.configurations[pos] == bits
        return np.where(found, pos, -1)

    def __iter__(self):
        for bits in self.configurations:
            yield SpinConfiguration(int(bits), self.n_sites)


def sector_size(n_sites: int, n_up: Optional[int]) -> int:
    if n_up is None:
        return 2**n_sites
    return int(comb(n_sites, n_up, exact=True))


def enumerate_basis(n_sites: int, sector: Optional[int] = None) -> BasisEnumeration:
    """Enumerate the basis in ascending word order.

    ``sector`` fixes the number of up spins.
    """
    if n_sites > MAX_ENUMERATION_SITES:
        raise EnumerationTooLargeError(
            f"cannot enumerate {n_sites} sites (limit {MAX_ENUMERATION_SITES})"
        )
    if n_sites < 1:
        raise InvalidGeometryError(f"n_sites must be positive, got {n_sites}")

    if sector is None:
        configs = np.arange(2**n_sites, dtype=np.int64)
    else:
        if not 0 <= sector <= n_sites:
            raise ValueError(f"sector n_up={sector} impossible for {n_sites} sites")
        n_down = n_sites - sector
        words = [sum(1 << s for s in chosen) for chosen in combinations(range(n_sites), n_down)]
        configs = np.array(sorted(words), dtype=np.int64)

    logger.debug(f"Enumerated {len(configs)} configurations (N={n_sites}, sector={sector})")
    return BasisEnumeration(configs, n_sites, sector)
