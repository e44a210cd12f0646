import numpy as np
import pytest

from alphavmc.config import ModelRegistry, OperatorRegistry, build_system
from alphavmc.errors import ConfigError, SizeMismatchError
from alphavmc.hilbert import build_chain
from alphavmc.models.meanfield import MeanFieldModel
from alphavmc.models.rbm import RBMModel
from alphavmc.operators import HeisenbergOperator, TransverseIsingOperator
from alphavmc.schema import AnsatzConfig, HeisenbergSystem, TfimSystem


class TestModelRegistry:
    def test_lists_every_kind(self):
        assert ModelRegistry.list_models() == ["complex-RBM", "log-linear", "mean-field-product"]

    @pytest.mark.parametrize("name", ["rbm", "complex-RBM", "COMPLEX-rbm"])
    def test_lookup_is_case_insensitive(self, name):
        assert ModelRegistry.get_model(name) is RBMModel

    def test_rbm_hidden_units_from_density(self):
        cfg = AnsatzConfig(kind="complex-RBM", hidden_density=2.0)
        model = ModelRegistry.create_model(cfg, build_chain(4, True), np.random.default_rng(0))
        assert model.n_hidden == 8
        assert model.n_params == 2 * (4 + 8 + 32)

    def test_log_linear_with_pair_terms(self):
        cfg = AnsatzConfig(kind="log-linear", jastrow_pairs=True)
        lattice = build_chain(5, True)
        model = ModelRegistry.create_model(cfg, lattice, np.random.default_rng(0))
        assert model.n_params == 5 + len(lattice.nn_pairs)

    def test_zero_scale_gives_zero_parameters(self):
        cfg = AnsatzConfig(kind="mean-field-product", init_scale=0.0)
        model = ModelRegistry.create_model(cfg, build_chain(3, False), np.random.default_rng(0))
        assert isinstance(model, MeanFieldModel)
        np.testing.assert_array_equal(model.params, 0.0)

    @pytest.mark.parametrize("kind", ["complex-RBM", "log-linear", "mean-field-product"])
    def test_dict_roundtrip(self, kind):
        cfg = AnsatzConfig(kind=kind, jastrow_pairs=True, init_scale=0.2)
        model = ModelRegistry.create_model(cfg, build_chain(4, True), np.random.default_rng(1))
        rebuilt = ModelRegistry.from_dict(model.to_dict())
        assert type(rebuilt) is type(model)
        np.testing.assert_array_equal(rebuilt.params, model.params)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="known: complex-RBM, log-linear, mean-field-product"):
            ModelRegistry.from_dict({"kind": "transformer", "n_sites": 2, "params": []})

    def test_incomplete_record(self):
        with pytest.raises(ConfigError):
            ModelRegistry.from_dict({"kind": "mean-field-product", "params": [0.0, 0.0]})


class TestSystems:
    def test_heisenberg_square_defaults_to_zero_magnetization(self):
        setup = build_system(HeisenbergSystem(type="heisenberg", L=2))
        assert isinstance(setup.operator, HeisenbergOperator)
        assert setup.n_up == 2
        assert len(setup.basis) == 6
        assert setup.enumerable

    def test_odd_chain_has_no_auto_sector(self):
        setup = build_system(HeisenbergSystem(type="heisenberg", geometry="chain", L=3))
        assert setup.n_up is None

    def test_impossible_sector(self):
        with pytest.raises(ConfigError):
            build_system(HeisenbergSystem(type="heisenberg", L=2, sector=5))

    def test_next_nearest_bonds_join_the_move_set(self):
        setup = build_system(HeisenbergSystem(type="heisenberg", L=3, J2=0.5))
        assert len(setup.bonds) == len(setup.lattice.nn_pairs) + len(setup.lattice.nnn_pairs)

    def test_tfim_uses_full_basis(self):
        setup = build_system(TfimSystem(type="tfim", L=3, h=0.3))
        assert isinstance(setup.operator, TransverseIsingOperator)
        assert setup.n_up is None
        assert len(setup.basis) == 512

    def test_large_lattice_is_not_enumerable(self):
        setup = build_system(TfimSystem(type="tfim", L=5))
        assert not setup.enumerable
        assert setup.basis_or_none() is None

    def test_model_size_check(self):
        setup = build_system(TfimSystem(type="tfim", geometry="chain", L=4))
        with pytest.raises(SizeMismatchError):
            setup.check_model(MeanFieldModel(5, np.zeros(10)))

    def test_operator_registry(self):
        assert OperatorRegistry.list_operators() == ["heisenberg", "tfim"]
