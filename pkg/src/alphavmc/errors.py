#!/usr/bin/env python
"""Exception hierarchy shared by every alphavmc module."""

from typing import Optional


class AlphaVmcError(Exception):
    """Base class for all alphavmc errors"""


class InvalidGeometryError(AlphaVmcError, ValueError):
    """Lattice parameters do not describe a valid geometry"""


class EnumerationTooLargeError(AlphaVmcError, ValueError):
    """Full basis enumeration requested beyond the supported size"""


class SiteIndexError(AlphaVmcError, IndexError):
    """Site index outside [0, n_sites)"""


class SizeMismatchError(AlphaVmcError, ValueError):
    """Two objects disagree on a dimension (sites, parameters, samples)"""


class ZeroAmplitudeError(AlphaVmcError):
    """A sampled configuration has a vanishing amplitude"""

    def __init__(self, index: int, message: Optional[str] = None):
        self.index = int(index)
        super().__init__(message or f"zero amplitude at sample index {self.index}")


class DegenerateStateError(AlphaVmcError):
    """Every amplitude of the state vanishes on the enumerated basis"""


class SamplerStallError(AlphaVmcError):
    """Markov chains could not find or keep a configuration with finite amplitude"""


class DiagnosticsNotApplicableError(AlphaVmcError):
    """Chain diagnostics requested for a batch without chains"""


class DegenerateWeightsError(AlphaVmcError):
    """All importance weights vanish"""


class Rho0UndefinedError(AlphaVmcError):
    """Bias shrinkage factor undefined because the estimated mean is zero"""

    def __init__(self, ess: float):
        self.ess = float(ess)
        super().__init__(f"rho0 undefined for zero mean (ess={self.ess:.6g})")


class OracleOnlyError(AlphaVmcError):
    """Operation requires an exactly enumerable system"""


class InsufficientSamplesError(AlphaVmcError, ValueError):
    """Estimator needs at least two samples"""


class OptimizationAborted(AlphaVmcError):
    """An optimization step failed twice in a row"""


class ConfigError(AlphaVmcError, ValueError):
    """Run configuration could not be loaded or validated"""


class CheckpointError(AlphaVmcError):
    """Checkpoint file missing, unreadable or of an unknown format"""
