import numpy as np
import pytest
import scipy.optimize

from conftest import exact_model
from warpband import (
    BasisSpec,
    ConfigurationError,
    Objective,
    OptimizerSettings,
    ScaledDomain,
    VariableSpec,
    decision_ensemble,
    eval_gradient,
    eval_objective,
    fit,
    minimize,
    point_optimum,
    posterior_draw,
    synth_example1,
)
from warpband.optimizer import _single_start, projected_gradient_norm, start_points, summarize
from warpband.plotting import plot_realizations

UNIT_BOX_3 = ScaledDomain(tuple(VariableSpec(f"x{k + 1}", -1.0, 1.0) for k in range(3)))


def shifted_identity(center) -> np.ndarray:
    """Degree one betas with y_k = x_k - center_k, so G = |x - center|^2."""
    d = len(center)
    betas = np.zeros((d, d + 1))
    betas[:, 0] = -np.asarray(center)
    betas[:, 1:] = np.eye(d)
    return betas


def test_gradient_matches_finite_differences():
    basis = BasisSpec(d=3, degree=2)
    rng = np.random.default_rng(21)
    betas = rng.normal(size=(2, basis.p))
    objective = Objective.weighted([1.0, 0.5])
    h = 1e-6

    for x in rng.uniform(-1, 1, (100, 3)):
        numeric = np.array(
            [
                (
                    eval_objective(basis, betas, objective, x + h * e)
                    - eval_objective(basis, betas, objective, x - h * e)
                )
                / (2 * h)
                for e in np.eye(3)
            ]
        )
        np.testing.assert_allclose(eval_gradient(basis, betas, objective, x), numeric, atol=1e-5)


def test_separable_convex_quadratic():
    center = np.array([0.3, -0.45, 0.1])
    basis = BasisSpec(d=3, degree=1)
    objective = Objective.sum_of_squares(3)
    result = minimize(basis, shifted_identity(center), objective, UNIT_BOX_3)

    np.testing.assert_allclose(result.x_star_coded, center, atol=1e-6)
    assert result.converged
    assert result.objective_value == pytest.approx(0.0, abs=1e-12)
    grad = eval_gradient(basis, shifted_identity(center), objective, result.x_star_coded)
    assert np.linalg.norm(grad) <= 1e-6


def test_minimum_clamped_to_face():
    center = np.array([2.0, 0.2, -0.4])
    basis = BasisSpec(d=3, degree=1)
    objective = Objective.sum_of_squares(3)
    result = minimize(basis, shifted_identity(center), objective, UNIT_BOX_3)

    assert result.x_star_coded[0] == 1.0
    np.testing.assert_allclose(result.x_star_coded[1:], center[1:], atol=1e-6)
    grad = eval_gradient(basis, shifted_identity(center), objective, result.x_star_coded)
    assert projected_gradient_norm(result.x_star_coded, grad) <= 1e-6


def test_weight_scaling_keeps_minimizer():
    basis = BasisSpec(d=3, degree=1)
    betas = shifted_identity([0.2, 0.3, -0.6])
    a = minimize(basis, betas, Objective.weighted([1.0, 2.0, 3.0]), UNIT_BOX_3)
    b = minimize(basis, betas, Objective.weighted([10.0, 20.0, 30.0]), UNIT_BOX_3)
    np.testing.assert_allclose(a.x_star_coded, b.x_star_coded, atol=1e-6)


def test_result_in_physical_units():
    domain = ScaledDomain((VariableSpec("T", 100.0, 200.0),))
    result = minimize(BasisSpec(d=1, degree=1), [[-0.4, 1.0]], Objective.sum_of_squares(1), domain)
    assert result.x_star[0] == pytest.approx(170.0, abs=1e-4)


def test_start_points():
    settings = OptimizerSettings(starts=20)
    points = start_points(3, settings, 0)

    assert points.shape == (20, 3)
    assert np.all(np.abs(points[:8]) == 0.75)
    assert np.all(np.abs(points) <= 1.0)
    np.testing.assert_array_equal(points, start_points(3, settings, 0))


@pytest.mark.parametrize("weights", [[-1.0, 1.0], [0.0, 0.0], []])
def test_invalid_weights(weights):
    with pytest.raises(ConfigurationError):
        Objective.weighted(weights)


def test_cure_demo_optimum(cure_model):
    result = point_optimum(cure_model, Objective.sum_of_squares(1))
    assert 133.0 <= result.x_star[0] <= 135.0


def test_cure_demo_ensemble(cure_model):
    ensemble = decision_ensemble(cure_model, Objective.sum_of_squares(1), R=50, seed=4)

    assert ensemble.R == 50
    assert 133.0 <= ensemble.median[0] <= 135.0
    assert ensemble.q25[0] <= ensemble.median[0] <= ensemble.q75[0]
    summary = ensemble.summaries[0]
    assert summary.interval_lower <= summary.q25
    assert summary.q75 <= summary.interval_upper
    assert 120.0 <= summary.mode <= 150.0

    frame = ensemble.to_frame()
    assert list(frame.columns) == ["draw_index", "converged", "temperature", "objective_value"]
    record = ensemble.summary_record()
    assert record["R"] == 50
    assert record["dimensions"][0]["name"] == "temperature"


def test_ensemble_independent_of_threads(cure_model):
    objective = Objective.sum_of_squares(1)
    settings = OptimizerSettings(starts=4)
    serial = decision_ensemble(cure_model, objective, 12, 8, settings, threads=1)
    parallel = decision_ensemble(cure_model, objective, 12, 8, settings, threads=4)

    np.testing.assert_array_equal(serial.decisions, parallel.decisions)
    np.testing.assert_array_equal(serial.objective_values, parallel.objective_values)


def test_zero_noise_ensemble_collapses_to_point():
    model = exact_model([[-0.3, 1.0]], (VariableSpec("x", 0.0, 10.0),))
    ensemble = decision_ensemble(model, Objective.sum_of_squares(1), R=10, seed=1)

    assert ensemble.point.x_star[0] == pytest.approx(6.5, abs=1e-5)
    np.testing.assert_allclose(ensemble.decisions[:, 0], ensemble.point.x_star[0], atol=1e-5)


def test_ensemble_argument_checks(cure_model):
    with pytest.raises(ConfigurationError):
        decision_ensemble(cure_model, Objective.sum_of_squares(1), R=0, seed=1)
    with pytest.raises(ConfigurationError):
        decision_ensemble(cure_model, Objective.sum_of_squares(2), R=5, seed=1)


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_scaling_coefficients_scales_objective(c):
    center = np.array([1.5, 0.3, -0.6])
    basis = BasisSpec(d=3, degree=1)
    objective = Objective.sum_of_squares(3)
    base = minimize(basis, shifted_identity(center), objective, UNIT_BOX_3)
    scaled = minimize(basis, c * shifted_identity(center), objective, UNIT_BOX_3)

    np.testing.assert_allclose(base.x_star_coded, [1.0, 0.3, -0.6], atol=1e-6)
    np.testing.assert_allclose(scaled.x_star_coded, base.x_star_coded, atol=1e-6)
    assert base.objective_value == pytest.approx(0.25, rel=1e-8)
    assert scaled.objective_value == pytest.approx(c**2 * base.objective_value, rel=1e-6)


def test_objective_kind_follows_weights():
    assert Objective.sum_of_squares(2).kind == "sum-of-squares"
    assert Objective(weights=(1.0, 1.0)).kind == "sum-of-squares"
    assert Objective(weights=(1.0, 2.0)).kind == "weighted-sum-of-squares"
    assert Objective.weighted([0.5, 1.0]).kind == "weighted-sum-of-squares"


def test_start_kept_when_solver_ends_worse(monkeypatch):
    basis = BasisSpec(d=3, degree=1)
    betas = shifted_identity(np.zeros(3))
    objective = Objective.sum_of_squares(3)
    x0 = np.array([0.5, 0.5, 0.5])

    def worse(*args, **kwargs):
        return scipy.optimize.OptimizeResult(x=np.array([0.9, 0.9, 0.9]), success=True)

    monkeypatch.setattr(scipy.optimize, "minimize", worse)
    outcome = _single_start(basis, betas, objective, x0, OptimizerSettings())

    assert outcome.x == (0.5, 0.5, 0.5)
    assert outcome.value == pytest.approx(0.75)
    assert outcome.projected_gradient == pytest.approx(1.0)
    assert not outcome.converged


def test_summaries_are_observed_decisions():
    domain = ScaledDomain((VariableSpec("x", 0.0, 10.0),))
    decisions = np.array([[1.0], [2.0], [4.0], [8.0]])
    (summary,) = summarize(decisions, np.ones(4, dtype=bool), domain)

    observed = {1.0, 2.0, 4.0, 8.0}
    for value in (summary.median, summary.q25, summary.q75):
        assert value in observed
    assert summary.interval_lower in observed
    assert summary.interval_upper in observed
    assert summary.median == 2.0
    assert (summary.q25, summary.q75) == (1.0, 4.0)


def test_hierarchical_ensemble_keeps_its_draws(cure_model, tmp_path):
    objective = Objective.sum_of_squares(1)
    ensemble = decision_ensemble(
        cure_model, objective, 5, 3, OptimizerSettings(starts=4), hierarchical=True
    )

    assert ensemble.hierarchical
    assert ensemble.summary_record()["hierarchical"] is True
    for i in range(ensemble.R):
        draw = posterior_draw(cure_model, 3, i, hierarchical=True)
        value = eval_objective(cure_model.basis, draw.betas, objective, ensemble.decisions_coded[i])
        assert ensemble.objective_values[i] == pytest.approx(value, rel=1e-12, abs=1e-15)

    path = plot_realizations(cure_model, ensemble, tmp_path / "realizations.svg")
    assert path.is_file()


def test_decision_spread_shrinks_with_more_runs():
    spreads = []
    for n in (125, 2000):
        data = synth_example1(n, 9)
        model = fit(data.dataset, BasisSpec(d=1, degree=2))
        ensemble = decision_ensemble(
            model, Objective.sum_of_squares(1), 100, 9, OptimizerSettings(starts=4)
        )
        spreads.append(float(ensemble.q75[0] - ensemble.q25[0]))

    assert spreads[0] > 0
    assert spreads[1] < 0.5 * spreads[0]
