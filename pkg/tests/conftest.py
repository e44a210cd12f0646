import numpy as np
import pytest

from alphavmc.hilbert import build_chain, build_square_lattice, enumerate_basis
from alphavmc.models.loglinear import LogLinearModel
from alphavmc.models.meanfield import MeanFieldModel
from alphavmc.models.rbm import RBMModel
from alphavmc.operators import heisenberg_j1j2, tfim
from alphavmc.samplers import MCMC, SampleBatch, log_q_of, sample_exact


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def chain6():
    return build_chain(6, periodic=True)


@pytest.fixture
def tfim6(chain6):
    return tfim(chain6, J=1.0, h=1.0)


@pytest.fixture
def basis6():
    return enumerate_basis(6)


@pytest.fixture
def ring4():
    return build_square_lattice(2, periodic=True)


@pytest.fixture
def heisenberg_ring4(ring4):
    return heisenberg_j1j2(ring4, 1.0)


@pytest.fixture
def rbm6(rng):
    return RBMModel.initialize(6, 6, rng, scale=0.3)


def make_model(kind: str, n_sites: int, rng: np.random.Generator, scale: float = 0.3):
    if kind == "rbm":
        return RBMModel.initialize(n_sites, n_sites, rng, scale)
    if kind == "log-linear":
        pairs = build_chain(n_sites, periodic=True).nn_pairs
        return LogLinearModel.initialize(n_sites, rng, scale, pairs)
    return MeanFieldModel.initialize(n_sites, rng, scale)


@pytest.fixture(params=["rbm", "log-linear", "mean-field"])
def any_model(request, rng):
    return make_model(request.param, 6, rng)


@pytest.fixture
def iid_batch():
    """Markov-style batch built from independent draws of the exact q_alpha."""

    def draw(model, alpha, basis, n_samples, rng):
        exact = sample_exact(model, alpha, basis)
        index = rng.choice(len(basis), size=n_samples, p=exact.exact_probs)
        log_amps = exact.log_amps[index]
        return SampleBatch(
            configs=basis.configurations[index],
            log_amps=log_amps,
            log_q_unnorm=log_q_of(log_amps, alpha),
            mode=MCMC,
            alpha=float(alpha),
            n_sites=basis.n_sites,
        )

    return draw


@pytest.fixture
def model_factory():
    return make_model


@pytest.fixture
def peaked6():
    """Product state whose all-up configuration carries nearly all of the Born weight."""
    return LogLinearModel(6, np.linspace(3.8, 4.2, 6))
