import numpy as np
import pytest

from alphavmc.adaptive import (
    AlphaController,
    OverdispersionState,
    dalpha_objective,
    dalpha_variance,
    exact_alpha_scan,
    tune_alpha_exact,
    update_alpha,
)
from alphavmc.estimators import EstimatorReport, build_report, compute_weights
from alphavmc.models.meanfield import MeanFieldModel
from alphavmc.operators import local_values
from alphavmc.samplers import sample_exact
from alphavmc.schema import ControllerConfig


def exact_pieces(model, op, basis, alpha):
    batch = sample_exact(model, alpha, basis)
    weights = compute_weights(batch)
    values = local_values(op, model, batch)
    jac = model.jacobian(batch.configs)
    report = build_report(batch, jac, values, weights)
    return batch, jac, values, weights, report


def variance_slope(model, op, basis, alpha):
    batch, jac, values, weights, report = exact_pieces(model, op, basis, alpha)
    return dalpha_variance(jac, values, weights, report.F_hat, batch, f=report.local_f), report


class TestAlphaDerivatives:
    def test_uniform_state_has_flat_variance(self, tfim6, basis6):
        model = MeanFieldModel(6, np.zeros(12))
        dvar, _ = variance_slope(model, tfim6, basis6, 1.0)
        np.testing.assert_array_equal(dvar, 0.0)

    @pytest.mark.parametrize("alpha", [0.6, 1.4, 2.2])
    def test_variance_slope_matches_finite_difference(self, rbm6, tfim6, basis6, alpha):
        dvar, _ = variance_slope(rbm6, tfim6, basis6, alpha)
        h = 1e-4
        up = exact_pieces(rbm6, tfim6, basis6, alpha + h)[-1].component_variance
        down = exact_pieces(rbm6, tfim6, basis6, alpha - h)[-1].component_variance
        numeric = (up - down) / (2 * h)
        np.testing.assert_allclose(dvar, numeric, rtol=1e-5, atol=1e-9 * np.abs(numeric).max())

    @pytest.mark.parametrize("alpha", [0.8, 1.9])
    def test_objective_slope_matches_finite_difference(self, rbm6, tfim6, basis6, alpha):
        dvar, report = variance_slope(rbm6, tfim6, basis6, alpha)
        analytic = dalpha_objective(report, dvar)
        h = 1e-4
        up, down = exact_alpha_scan(rbm6, tfim6, basis6, [alpha + h, alpha - h])
        numeric = (up.L_IS - down.L_IS) / (2 * h)
        assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-9)

    def test_objective_slope_of_single_component(self):
        report = EstimatorReport(
            F_hat=np.array([1.0]),
            component_variance=np.array([1.0]),
            snr=np.array([1.0]),
            L_IS=1.0,
            ess=1.0,
            rho0=0.0,
            energy=0.0,
            energy_variance=0.0,
            n_samples=10,
            alpha=2.0,
        )
        assert dalpha_objective(report, np.array([-2.0])) == pytest.approx(1.0)
        assert dalpha_objective(report, np.array([0.0])) == 0.0


class TestUpdateRule:
    def test_step_is_clipped(self):
        assert update_alpha(OverdispersionState(alpha=2.0), -5.0).alpha == pytest.approx(1.99)

    def test_small_gradient_step(self):
        assert update_alpha(OverdispersionState(alpha=1.0), 0.05).alpha == pytest.approx(1.005)

    def test_upper_bound(self):
        assert update_alpha(OverdispersionState(alpha=2.495), 1.0).alpha == 2.5

    def test_lower_bound(self):
        assert update_alpha(OverdispersionState(alpha=0.05), -1.0).alpha == 0.05

    @pytest.mark.parametrize("grad", [np.nan, np.inf, -np.inf])
    def test_non_finite_gradient_freezes(self, grad):
        state = update_alpha(OverdispersionState(alpha=1.3), grad)
        assert state.frozen
        assert state.alpha == 1.3

    def test_step_never_exceeds_max(self, rng):
        state = OverdispersionState(alpha=1.0, max_step=0.02)
        for grad in 10.0 * rng.standard_normal(200):
            new = update_alpha(state, grad)
            assert abs(new.alpha - state.alpha) <= 0.02 + 1e-15
            assert 0.05 <= new.alpha <= 2.5
            state = new

    def test_invalid_state(self):
        with pytest.raises(ValueError):
            OverdispersionState(alpha=3.0)
        with pytest.raises(ValueError):
            OverdispersionState(eta=0.0)


class TestController:
    def test_from_config(self):
        controller = AlphaController.from_config(ControllerConfig(alpha0=1.5, eta=0.2, enabled=False))
        assert controller.alpha == 1.5
        assert controller.state.eta == 0.2
        assert not controller.enabled

    def test_disabled_controller_keeps_alpha(self, rbm6, tfim6, basis6):
        controller = AlphaController(OverdispersionState(alpha=1.7), enabled=False)
        batch, jac, values, weights, report = exact_pieces(rbm6, tfim6, basis6, 1.7)
        assert controller.observe(batch, jac, values, weights, report) == 1.7
        assert controller.trajectory == [1.7]

    def test_observe_moves_uphill(self, rbm6, tfim6, basis6):
        controller = AlphaController(OverdispersionState(alpha=2.0))
        pieces = exact_pieces(rbm6, tfim6, basis6, 2.0)
        grad = controller.gradient(*pieces)
        new_alpha = controller.observe(*pieces)
        assert np.sign(new_alpha - 2.0) == np.sign(grad)
        assert len(controller.trajectory) == 2

    def test_converges_to_local_maximum(self, rbm6, tfim6, basis6):
        grid = np.round(np.arange(0.05, 2.5 + 1e-9, 0.01), 2)
        objective = np.array([r.L_IS for r in exact_alpha_scan(rbm6, tfim6, basis6, grid)])
        # Climb the grid from the start point to the maximum gradient ascent can reach
        k = int(np.argmin(np.abs(grid - 2.0)))
        direction = 1 if k + 1 < len(grid) and objective[k + 1] > objective[k] else -1
        while 0 <= k + direction < len(grid) and objective[k + direction] > objective[k]:
            k += direction

        trajectory = tune_alpha_exact(rbm6, tfim6, basis6, OverdispersionState(alpha=2.0), n_iterations=500)
        assert len(trajectory) == 501
        assert abs(trajectory[-1] - grid[k]) <= 0.05


class TestPeakedState:
    def test_born_weight_is_concentrated(self, peaked6, basis6):
        assert sample_exact(peaked6, 2.0, basis6).exact_probs.max() >= 0.999

    def test_overdispersion_widens_the_snr_gap(self, peaked6, tfim6, basis6):
        grid = np.round(np.arange(0.05, 2.5 + 1e-9, 0.05), 2)
        objective = np.array([r.L_IS for r in exact_alpha_scan(peaked6, tfim6, basis6, grid)])
        (born,) = exact_alpha_scan(peaked6, tfim6, basis6, [2.0])
        assert grid[int(np.argmax(objective))] < 2.0
        assert objective.max() >= 10 * born.L_IS

    def test_controller_heads_below_born(self, peaked6, tfim6, basis6):
        dvar, report = variance_slope(peaked6, tfim6, basis6, 2.0)
        assert dalpha_objective(report, dvar) < 0
