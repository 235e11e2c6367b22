"""Variance-based sensitivity estimation and convergence studies."""
from __future__ import annotations

import numpy as np
import pytest

from robmpc.analysis import (
    CAR_SENSITIVITY_NAMES,
    SensitivityReport,
    car_sensitivity_model,
    default_car_sensitivity_box,
    delta2_convergence,
    sobol_first_order,
    witting_convergence,
)
from robmpc.bench import witting_reference_front
from robmpc.moo import DecisionBox, RealizationSet


# ---------------------------------------------------------------------------
# first-order indices


def test_additive_model_recovers_analytic_indices():
    """f1 = y1 (all variance from y1), f2 = y1 + y2 with equal ranges
    (variance split evenly)."""

    def model(y):
        return np.stack([y[:, 0], y[:, 0] + y[:, 1]], axis=-1)

    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    report = sobol_first_order(model, box, n_samples=8192, seed=0)
    assert report.indices[:, 0] == pytest.approx([1.0, 0.0], abs=0.05)
    assert report.indices[:, 1] == pytest.approx([0.5, 0.5], abs=0.05)


def test_indices_of_an_additive_model_sum_to_about_one():
    def model(y):
        return 2.0 * y[:, 0] - y[:, 1] + 0.5 * y[:, 2]

    box = np.tile([[-1.0, 1.0]], (3, 1))
    report = sobol_first_order(model, box, n_samples=8192, seed=1)
    assert report.indices[:, 0].sum() == pytest.approx(1.0, abs=0.1)
    assert np.all(report.indices >= -0.1)
    assert np.all(report.indices <= 1.1)


def test_zero_variance_outputs_yield_nan_indices():
    def model(y):
        return np.stack([np.ones(len(y)), y[:, 0]], axis=-1)

    box = np.array([[-1.0, 1.0], [0.0, 1.0]])
    report = sobol_first_order(model, box, n_samples=256, seed=0)
    assert np.all(np.isnan(report.indices[:, 0]))
    assert np.all(np.isfinite(report.indices[:, 1]))


def test_sample_floor_is_enforced():
    with pytest.raises(ValueError):
        sobol_first_order(lambda y: y[:, 0], np.array([[0.0, 1.0]]),
                          n_samples=32, seed=0)


def test_estimator_is_deterministic_for_a_seed():
    def model(y):
        return np.sin(y[:, 0]) + y[:, 1] ** 2

    box = np.array([[-2.0, 2.0], [-1.0, 3.0]])
    a = sobol_first_order(model, box, 512, seed=9)
    b = sobol_first_order(model, box, 512, seed=9)
    assert np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.half_widths, b.half_widths)


def test_bootstrap_half_widths_shrink_with_more_samples():
    def model(y):
        return y[:, 0] + 0.3 * y[:, 1]

    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    small = sobol_first_order(model, box, 128, seed=2)
    large = sobol_first_order(model, box, 8192, seed=2)
    assert np.nanmean(large.half_widths) < np.nanmean(small.half_widths)


def test_report_ranking_orders_by_index():
    report = SensitivityReport(
        parameter_names=("a", "b", "c"),
        indices=np.array([[0.2, 0.0], [0.7, 0.1], [0.1, 0.9]]),
        half_widths=np.zeros((3, 2)),
        n_samples=64,
        seed=0,
    )
    assert report.ranking(0) == ["b", "a", "c"]
    assert report.ranking(1) == ["c", "b", "a"]


# ---------------------------------------------------------------------------
# the car sensitivity study


def test_car_model_output_shape_and_baseline():
    model = car_sensitivity_model()
    base = np.array([[0.0, 0.0, 0.0, 0.0, 0.0, 1275.0, 1.0]])
    out = model(base)
    assert out.shape == (1, 2)
    assert out[0, 0] == pytest.approx(0.0, abs=1e-9)
    assert out[0, 1] == pytest.approx(-15.0, abs=1e-6)


def test_car_offset_objective_is_dominated_by_the_initial_offset():
    report = sobol_first_order(
        car_sensitivity_model(), default_car_sensitivity_box(),
        n_samples=2048, seed=0, parameter_names=CAR_SENSITIVITY_NAMES,
    )
    assert report.ranking(0)[0] == "d"
    assert report.ranking(1)[0] == "kappa"


def test_car_objectives_are_insensitive_to_small_parameter_changes():
    """Mass and front axle distance at +-10% contribute almost nothing."""
    report = sobol_first_order(
        car_sensitivity_model(), default_car_sensitivity_box(),
        n_samples=2048, seed=0, parameter_names=CAR_SENSITIVITY_NAMES,
    )
    for name in ("m", "l_f"):
        i = CAR_SENSITIVITY_NAMES.index(name)
        assert np.all(np.abs(report.indices[i]) < 0.05)


# ---------------------------------------------------------------------------
# convergence studies


def test_budgets_must_be_strictly_ascending():
    box = DecisionBox(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    ref = np.zeros((2, 2))

    def evaluate(u):
        return RealizationSet(np.atleast_2d(u)), True

    with pytest.raises(ValueError):
        delta2_convergence(evaluate, box, ref, ref, [200, 100], 1, 0)
    with pytest.raises(ValueError):
        delta2_convergence(evaluate, box, ref, ref, [100, 100], 1, 0)


def test_single_budget_produces_a_single_row():
    rows = witting_convergence(0.5, [300], runs=2, seed=0, reference_grid=60)
    assert len(rows) == 1
    assert rows[0]["budget"] == 300
    assert rows[0]["runs"] == 2
    assert rows[0]["median_decision_delta2"] >= 0.0


def test_witting_convergence_improves_with_budget():
    rows = witting_convergence(0.5, [100, 2000], runs=3, seed=1,
                               reference_grid=100)
    assert (rows[1]["median_objective_delta2"]
            < rows[0]["median_objective_delta2"])


def test_convergence_study_is_deterministic():
    a = witting_convergence(0.5, [200, 400], runs=2, seed=3, reference_grid=60)
    b = witting_convergence(0.5, [200, 400], runs=2, seed=3, reference_grid=60)
    assert a == b


def test_convergence_reference_matches_the_front_dimensions():
    ref_dec, ref_obj = witting_reference_front(0.5, 60)
    assert ref_dec.shape == ref_obj.shape
    assert ref_dec.shape[1] == 2
