#!/usr/bin/env python
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Tuple, Type

import numpy as np

from .base import WavefunctionModel
from .errors import ConfigError, EnumerationTooLargeError, SizeMismatchError
from .hilbert import (
    MAX_ENUMERATION_SITES,
    BasisEnumeration,
    Lattice,
    build_chain,
    build_square_lattice,
    enumerate_basis,
    sector_size,
)
from .logging_config import get_logger
from .models.loglinear import LogLinearModel
from .models.meanfield import MeanFieldModel
from .models.rbm import RBMModel
from .operators import LocalOperator, heisenberg_j1j2, tfim
from .schema import AnsatzConfig, HeisenbergSystem

logger = get_logger(__name__)


class ModelRegistry:
    """Registry for all wavefunction kinds"""

    _models: Dict[str, Type[WavefunctionModel]] = {}

    @classmethod
    def register(cls, name: str, model_class: Type[WavefunctionModel]):
        cls._models[name.lower()] = model_class
        kind = getattr(model_class, "KIND", "").lower()
        if kind and kind != name.lower():
            cls._models[kind] = model_class

    @classmethod
    def get_model(cls, name: str) -> Optional[Type[WavefunctionModel]]:
        return cls._models.get(name.lower())

    @classmethod
    def list_models(cls) -> List[str]:
        return sorted({m.KIND for m in cls._models.values()})

    @classmethod
    def create_model(
        cls, cfg: AnsatzConfig, lattice: Lattice, rng: np.random.Generator
    ) -> WavefunctionModel:
        """Fresh model with small random parameters."""
        model_class = cls.get_model(cfg.kind)
        if model_class is None:
            raise ConfigError(f"Unknown ansatz kind: {cfg.kind} (known: {', '.join(cls.list_models())})")
        n_sites = lattice.n_sites
        if model_class is RBMModel:
            n_hidden = cfg.n_hidden or max(1, int(round(cfg.hidden_density * n_sites)))
            model = RBMModel.initialize(n_sites, n_hidden, rng, cfg.init_scale)
        elif model_class is LogLinearModel:
            pairs = lattice.nn_pairs if cfg.jastrow_pairs else None
            model = LogLinearModel.initialize(n_sites, rng, cfg.init_scale, pairs)
        else:
            model = model_class.initialize(n_sites, rng, cfg.init_scale)
        logger.info(f"Initialized {model.KIND} on {n_sites} sites with {model.n_params} parameters")
        return model

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> WavefunctionModel:
        """Rebuild a model from its ``to_dict`` form."""
        data = dict(data)
        try:
            kind = data.pop("kind")
            n_sites = data.pop("n_sites")
            params = np.array(data.pop("params"), dtype=np.float64)
        except KeyError as e:
            raise ConfigError(f"model record lacks field {e}") from e
        model_class = cls.get_model(kind)
        if model_class is None:
            raise ConfigError(f"Unknown ansatz kind: {kind} (known: {', '.join(cls.list_models())})")
        return model_class(n_sites, params, **data)


ModelRegistry.register("log-linear", LogLinearModel)
ModelRegistry.register("rbm", RBMModel)
ModelRegistry.register("mean-field", MeanFieldModel)


class OperatorRegistry:
    """Registry for Hamiltonian builders, keyed by the system ``type``"""

    _builders: Dict[str, Callable[[Any, Lattice], LocalOperator]] = {}

    @classmethod
    def register(cls, name: str, builder: Callable[[Any, Lattice], LocalOperator]):
        cls._builders[name.lower()] = builder

    @classmethod
    def create_operator(cls, system, lattice: Lattice) -> LocalOperator:
        builder = cls._builders.get(system.type.lower())
        if builder is None:
            raise ConfigError(f"Unknown system type: {system.type} (known: {', '.join(cls.list_operators())})")
        return builder(system, lattice)

    @classmethod
    def list_operators(cls) -> List[str]:
        return sorted(cls._builders)


OperatorRegistry.register("heisenberg", lambda s, lat: heisenberg_j1j2(lat, s.J1, s.J2))
OperatorRegistry.register("tfim", lambda s, lat: tfim(lat, s.J, s.h))


@dataclass
class SystemSetup:
    """Lattice, Hamiltonian and symmetry sector of one run"""

    lattice: Lattice
    operator: LocalOperator
    n_up: Optional[int]
    bonds: Tuple[Tuple[int, int], ...]

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def enumerable(self) -> bool:
        return self.n_sites <= MAX_ENUMERATION_SITES

    @cached_property
    def basis(self) -> BasisEnumeration:
        return enumerate_basis(self.n_sites, self.n_up)

    def basis_or_none(self) -> Optional[BasisEnumeration]:
        try:
            return self.basis
        except EnumerationTooLargeError:
            return None

    def check_model(self, model: WavefunctionModel):
        if model.n_sites != self.n_sites:
            raise SizeMismatchError(f"model has {model.n_sites} sites, system {self.n_sites}")


def _sector(system, n_sites: int) -> Optional[int]:
    if not isinstance(system, HeisenbergSystem) or system.sector is None:
        return None
    if system.sector == "auto":
        return n_sites // 2 if n_sites % 2 == 0 else None
    if not 0 <= system.sector <= n_sites:
        raise ConfigError(f"sector {system.sector} impossible for {n_sites} sites")
    return system.sector


def build_system(system) -> SystemSetup:
    if system.geometry == "square":
        lattice = build_square_lattice(system.L, system.periodic)
    else:
        lattice = build_chain(system.L, system.periodic)
    operator = OperatorRegistry.create_operator(system, lattice)
    bonds = lattice.nn_pairs
    if isinstance(system, HeisenbergSystem) and system.J2 != 0.0:
        bonds = bonds + lattice.nnn_pairs
    n_up = _sector(system, lattice.n_sites)
    logger.info(f"System {operator!r}, sector n_up={n_up}, dimension {sector_size(lattice.n_sites, n_up)}")
    return SystemSetup(lattice, operator, n_up, tuple(bonds))
