#!/usr/bin/env python
"""
Variational Monte Carlo for spin-1/2 lattices with adaptive overdispersed
importance sampling.

Samples are drawn from q_alpha ~ |psi|^alpha instead of the Born
distribution, reweighted with self-normalized importance weights, and alpha
is tuned on the fly to maximize the signal-to-noise ratio of the gradient.

Usage:
    alphavmc gs --config run.json          # ground-state search
    alphavmc infid --config run.json       # state compression
    alphavmc snr-scan --config run.json    # exact SNR profile over alpha
"""

from .__about__ import __version__
from .adaptive import AlphaController, OverdispersionState, update_alpha
from .base import WavefunctionModel
from .cli import main
from .config import ModelRegistry, OperatorRegistry, build_system
from .estimators import build_report, compute_weights
from .infidelity import TargetState, run_compression
from .logging_config import get_logger, setup_logging
from .optimizer import run_ground_state, sr_solve
from .samplers import BatchSource, MetropolisSampler, sample_exact
from .storage import RunStorage

__all__ = [
    "__version__",
    "main",
    "AlphaController",
    "OverdispersionState",
    "update_alpha",
    "WavefunctionModel",
    "ModelRegistry",
    "OperatorRegistry",
    "build_system",
    "build_report",
    "compute_weights",
    "TargetState",
    "run_compression",
    "run_ground_state",
    "sr_solve",
    "BatchSource",
    "MetropolisSampler",
    "sample_exact",
    "RunStorage",
    "setup_logging",
    "get_logger",
]
