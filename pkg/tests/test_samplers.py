import numpy as np
import pytest

from alphavmc.errors import (
    DegenerateStateError,
    DiagnosticsNotApplicableError,
    SamplerStallError,
    SizeMismatchError,
)
from alphavmc.hilbert import build_chain, enumerate_basis
from alphavmc.infidelity import TargetState
from alphavmc.models.loglinear import LogLinearModel
from alphavmc.models.meanfield import MeanFieldModel
from alphavmc.models.rbm import RBMModel
from alphavmc.samplers import (
    BatchSource,
    MetropolisSampler,
    chain_diagnostics,
    sample_exact,
    sample_mcmc,
    split_rhat,
    total_variation,
)
from alphavmc.schema import SamplerConfig


def mcmc_config(**overrides):
    settings = {"mode": "mcmc", "n_samples": 256, "n_chains": 8, "seed": 11}
    settings.update(overrides)
    return SamplerConfig(**settings)


class TestExactSampling:
    def test_born_probabilities_of_amplitude_table(self):
        basis = enumerate_basis(2)
        state = TargetState.from_amplitudes(basis, np.array([2.0, 1.0, 1.0, 0.0]))
        batch = sample_exact(state, 2.0, basis)
        np.testing.assert_allclose(batch.exact_probs, [4 / 6, 1 / 6, 1 / 6, 0.0], atol=1e-15)

    def test_alpha_zero_is_uniform_even_on_zeros(self):
        basis = enumerate_basis(2)
        state = TargetState.from_amplitudes(basis, np.array([2.0, 1.0, 1.0, 0.0]))
        np.testing.assert_allclose(sample_exact(state, 0.0, basis).exact_probs, 0.25)

    def test_uniform_state_is_uniform_at_any_alpha(self, basis6):
        model = MeanFieldModel(6, np.zeros(12))
        for alpha in (0.3, 1.0, 2.0):
            np.testing.assert_allclose(sample_exact(model, alpha, basis6).exact_probs, 1 / 64, rtol=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 0.05, 0.7, 2.0, 2.5])
    def test_probabilities_are_normalized(self, rbm6, basis6, alpha):
        probs = sample_exact(rbm6, alpha, basis6).exact_probs
        assert np.all(probs >= 0)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_state_vanishing_on_basis(self):
        target = TargetState.from_amplitudes(enumerate_basis(2, sector=0), np.array([1.0]))
        with pytest.raises(DegenerateStateError):
            sample_exact(target, 2.0, enumerate_basis(2, sector=2))

    def test_negative_alpha(self, rbm6, basis6):
        with pytest.raises(ValueError):
            sample_exact(rbm6, -0.1, basis6)


class TestMetropolis:
    def test_alpha_zero_accepts_every_flip(self, rbm6):
        batch = sample_mcmc(rbm6, 0.0, mcmc_config())
        assert batch.acceptance_rate == 1.0

    def test_uniform_state_accepts_every_flip(self):
        model = MeanFieldModel(6, np.zeros(12))
        for alpha in (0.5, 2.0):
            assert sample_mcmc(model, alpha, mcmc_config()).acceptance_rate == 1.0

    def test_batch_layout(self, rbm6):
        batch = sample_mcmc(rbm6, 1.0, mcmc_config(n_samples=100, n_chains=16))
        assert batch.n_chains == 16
        assert batch.n_samples == batch.n_chains * batch.samples_per_chain == 112
        np.testing.assert_allclose(batch.log_q_unnorm, batch.log_amps.real)

    @pytest.mark.parametrize("requested,per_chain", [(96, 6), (97, 7), (100, 7), (112, 7)])
    def test_requested_size_rounds_up_to_whole_chains(self, requested, per_chain):
        sampler = MetropolisSampler(6, mcmc_config(n_samples=requested, n_chains=16))
        assert sampler.samples_per_chain == per_chain

    def test_same_seed_same_batch(self, rbm6):
        a = sample_mcmc(rbm6, 1.3, mcmc_config())
        b = sample_mcmc(rbm6, 1.3, mcmc_config())
        np.testing.assert_array_equal(a.configs, b.configs)
        np.testing.assert_array_equal(a.log_amps, b.log_amps)

    def test_reseed_changes_the_batch(self, rbm6):
        sampler = MetropolisSampler(6, mcmc_config())
        first = sampler.sample(rbm6, 1.0)
        sampler.reseed(104729)
        second = sampler.sample(rbm6, 1.0)
        assert not np.array_equal(first.configs, second.configs)

    def test_chains_persist_between_calls(self, rbm6):
        sampler = MetropolisSampler(6, mcmc_config(burn_in_sweeps=5))
        sampler.sample(rbm6, 1.0)
        states = sampler.states
        assert states is not None and states.shape == (8,)
        second = sampler.sample(rbm6, 1.0)
        assert second.batch_id == 2

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_matches_exact_distribution(self, alpha):
        rng = np.random.default_rng(5)
        model = RBMModel.initialize(4, 4, rng, scale=0.5)
        basis = enumerate_basis(4)
        cfg = mcmc_config(n_samples=40000, n_chains=16, burn_in_sweeps=20, seed=3)
        batch = sample_mcmc(model, alpha, cfg)
        exact = sample_exact(model, alpha, basis).exact_probs
        assert total_variation(batch.configs, basis, exact) <= 0.03

    def test_exchange_moves_stay_in_sector(self, ring4):
        rng = np.random.default_rng(9)
        model = RBMModel.initialize(4, 4, rng, scale=0.5)
        cfg = mcmc_config(move="exchange")
        batch = sample_mcmc(model, 1.0, cfg, bonds=ring4.nn_pairs, n_up=2)
        sector = enumerate_basis(4, sector=2)
        assert np.all(sector.index_of(batch.configs) >= 0)

    def test_stall_without_finite_start(self):
        target = TargetState.from_amplitudes(enumerate_basis(20, sector=0), np.array([1.0]))
        sampler = MetropolisSampler(20, mcmc_config(n_chains=1, max_init_attempts=2))
        with pytest.raises(SamplerStallError):
            sampler.sample(target, 2.0)

    def test_model_size_mismatch(self, rbm6):
        with pytest.raises(SizeMismatchError):
            MetropolisSampler(5, mcmc_config()).sample(rbm6, 1.0)

    def test_exchange_needs_bonds(self):
        with pytest.raises(ValueError):
            MetropolisSampler(4, mcmc_config(move="exchange"))


class TestDiagnostics:
    def test_frozen_identical_chains(self):
        assert split_rhat(np.full((4, 50), 0.7)) == 1.0

    @pytest.mark.parametrize("value", [0.1, 1.0 / 3.0, -2.7182818, 1e3 / 7.0])
    def test_constant_chains_ignore_rounding_noise(self, value):
        assert split_rhat(np.full((3, 41), value)) == 1.0

    def test_distinct_frozen_chains(self):
        draws = np.stack([np.zeros(20), np.ones(20)])
        assert split_rhat(draws) == float("inf")

    def test_separated_chains(self):
        rng = np.random.default_rng(0)
        draws = np.stack([rng.normal(0.0, 0.1, 200), rng.normal(10.0, 0.1, 200)])
        assert split_rhat(draws) > 1.1

    def test_chains_trapped_in_separate_modes(self):
        # Strong ferromagnetic pairs with a weak field: the two modes differ in log|psi|
        chain = build_chain(6, periodic=True)
        params = np.concatenate([np.full(6, 0.1), np.full(6, 3.0)])
        model = LogLinearModel(6, params, chain.nn_pairs)
        sampler = MetropolisSampler(6, mcmc_config(n_chains=2, n_samples=200, burn_in_sweeps=0))
        sampler.set_states(np.array([0, 63]))
        batch = sampler.sample(model, 2.0)
        assert chain_diagnostics(batch).split_rhat > 1.1

    def test_exact_batch_has_no_chains(self, rbm6, basis6):
        with pytest.raises(DiagnosticsNotApplicableError):
            chain_diagnostics(sample_exact(rbm6, 2.0, basis6))


class TestBatchSource:
    def test_exact_source_needs_basis(self):
        with pytest.raises(ValueError):
            BatchSource(SamplerConfig(mode="exact"), 6)

    def test_exact_source(self, rbm6, basis6):
        source = BatchSource(SamplerConfig(mode="exact"), 6, basis6)
        assert source.is_exact
        assert source.n_samples == 64
        assert source.draw(rbm6, 1.0).is_exact

    def test_mcmc_source_resizes(self, rbm6):
        source = BatchSource(mcmc_config(), 6)
        source.n_samples = 64
        assert source.draw(rbm6, 1.0).n_samples == 64
