"""Time grids, RK4 integration, uncertainty sampling and robust evaluation."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robmpc.bench import make_witting_instance, witting_eval
from robmpc.moo import sup_vector
from robmpc.ocp import (
    FEASIBILITY_TOL,
    ControlTrajectory,
    IntegrationError,
    TimeGrid,
    UMocpInstance,
    UncertaintyBox,
    evaluate,
    evaluate_batch,
    evaluate_controls,
    evaluate_realizations,
    evaluate_robust,
    integrate_flow,
    robust_feasible,
)


def scalar_instance(dynamics, running=None, terminal=None, constraints=(),
                    x0=0.0):
    zero_run = lambda states, u: np.zeros(states.shape[:-1])
    zero_term = lambda xf, u: np.zeros(xf.shape[:-1])
    return UMocpInstance(
        n_x=1,
        k=1,
        dynamics=dynamics,
        running_costs=(running or zero_run,),
        terminal_costs=(terminal or zero_term,),
        constraints=constraints,
        x0=np.array([x0]),
    )


def zero_control(grid, lo=-1.0, hi=1.0):
    return ControlTrajectory(grid, np.zeros(grid.n_nodes), lo, hi)


# ---------------------------------------------------------------------------
# time grid and control trajectories


def test_time_grid_counts():
    grid = TimeGrid(0.0, 0.5, 0.05)
    assert grid.n_steps == 10
    assert grid.n_nodes == 11
    assert np.allclose(grid.times(), np.arange(11) * 0.05)


def test_time_grid_rejects_non_integral_spans():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0.3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, -0.1)


def test_control_trajectory_validates_shape_and_bounds():
    grid = TimeGrid(0.0, 0.2, 0.1)
    with pytest.raises(ValueError):
        ControlTrajectory(grid, np.zeros(5), -1.0, 1.0)
    with pytest.raises(ValueError):
        ControlTrajectory(grid, np.array([0.0, 2.0, 0.0]), -1.0, 1.0)
    ControlTrajectory(grid, np.array([-1.0, 0.0, 1.0]), -1.0, 1.0)


# ---------------------------------------------------------------------------
# uncertainty sampling


def test_uncertainty_box_must_contain_zero():
    with pytest.raises(ValueError):
        UncertaintyBox(np.array([[0.1, 0.2]]))
    with pytest.raises(ValueError):
        UncertaintyBox(np.array([[-0.2, -0.1]]))


def test_uncertainty_box_needs_odd_sample_count():
    with pytest.raises(ValueError):
        UncertaintyBox(np.array([[-1.0, 1.0]]), samples_per_dim=4)
    with pytest.raises(ValueError):
        UncertaintyBox(np.array([[-1.0, 1.0]]), samples_per_dim=0)


def test_symmetric_interval_samples_hit_zero_exactly():
    box = UncertaintyBox(np.array([[-0.25, 0.25]]), 21)
    pts = box.axis_samples(0)
    assert pts.shape == (21,)
    assert np.count_nonzero(pts == 0.0) == 1
    assert pts[0] == -0.25 and pts[-1] == 0.25


def test_asymmetric_interval_still_contains_zero_sample():
    box = UncertaintyBox(np.array([[-0.1, 0.5]]), 5)
    pts = box.axis_samples(0)
    assert np.any(pts == 0.0)


def test_tensor_grid_is_lexicographic_and_complete():
    box = UncertaintyBox(np.array([[-1.0, 1.0], [-2.0, 2.0]]), 3)
    s = box.samples()
    assert s.shape == (9, 2)
    expect = np.array(
        [[a, b] for a in (-1.0, 0.0, 1.0) for b in (-2.0, 0.0, 2.0)]
    )
    assert np.array_equal(s, expect)


def test_nominal_box_is_the_single_zero_scenario():
    s = UncertaintyBox.nominal().samples()
    assert s.shape == (1, 1)
    assert s[0, 0] == 0.0


# ---------------------------------------------------------------------------
# integration


def test_constant_dynamics_integrate_exactly():
    grid = TimeGrid(0.0, 0.5, 0.05)
    inst = scalar_instance(lambda x, u: np.ones_like(x))
    states = integrate_flow(inst, np.array([0.0]), zero_control(grid))
    assert states.shape == (11, 1)
    assert states[-1, 0] == pytest.approx(0.5, abs=1e-15)


def test_zero_dynamics_keep_the_state():
    grid = TimeGrid(0.0, 1.0, 0.25)
    inst = scalar_instance(lambda x, u: np.zeros_like(x), x0=3.0)
    states = integrate_flow(inst, np.array([3.0]), zero_control(grid))
    assert np.all(states == 3.0)


def test_exponential_growth_matches_rk4_accuracy():
    grid = TimeGrid(0.0, 0.5, 0.05)
    inst = scalar_instance(lambda x, u: x)
    states = integrate_flow(inst, np.array([1.0]), zero_control(grid))
    assert states[-1, 0] == pytest.approx(np.exp(0.5), abs=1e-6)


def test_blow_up_raises_integration_error_with_step():
    grid = TimeGrid(0.0, 1.0, 0.1)
    inst = scalar_instance(lambda x, u: x**3 * 1e6)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(IntegrationError) as err:
            integrate_flow(inst, np.array([10.0]), zero_control(grid))
    assert 0 <= err.value.step < grid.n_steps


def test_refining_the_step_converges():
    """Halving h changes a smooth trajectory endpoint by < 1e-3 relative."""
    inst = scalar_instance(lambda x, u: np.sin(x) + 0.5)
    ends = []
    for h in (0.1, 0.05):
        grid = TimeGrid(0.0, 1.0, h)
        states = integrate_flow(inst, np.array([0.2]), zero_control(grid))
        ends.append(states[-1, 0])
    assert abs(ends[1] - ends[0]) / abs(ends[1]) < 1e-3


# ---------------------------------------------------------------------------
# evaluation


def test_zero_costs_give_zero_objectives():
    grid = TimeGrid(0.0, 0.5, 0.1)
    inst = scalar_instance(lambda x, u: np.ones_like(x))
    j, g = evaluate(inst, np.array([0.0]), zero_control(grid))
    assert np.array_equal(j, np.zeros(1))
    assert g.shape == (0,)


def test_trapezoid_running_cost_of_linear_state():
    # x(t) = t, running cost x -> integral over [0,1] is 1/2 (trapezoid exact)
    grid = TimeGrid(0.0, 1.0, 0.25)
    inst = scalar_instance(
        lambda x, u: np.ones_like(x),
        running=lambda states, u: states[..., 0],
    )
    j, _ = evaluate(inst, np.array([0.0]), zero_control(grid))
    assert j[0] == pytest.approx(0.5, abs=1e-12)


def test_witting_instance_matches_direct_evaluation():
    inst = make_witting_instance(alpha_center=0.8, alpha_halfwidth=0.7)
    grid = TimeGrid(0.0, 0.05, 0.05)
    for u_vec, alpha in [((0.0, 0.0), -0.3), ((1.0, -1.0), 0.7),
                         ((-1.8, -1.6), 0.0)]:
        u = ControlTrajectory(grid, np.array(u_vec), -2.0, 2.0)
        j, _ = evaluate(inst, np.array([alpha]), u)
        assert np.allclose(j, witting_eval(np.array(u_vec), 0.8 + alpha),
                           atol=1e-12)


def test_witting_instance_zero_control_value():
    inst = make_witting_instance()
    grid = TimeGrid(0.0, 0.05, 0.05)
    u = ControlTrajectory(grid, np.zeros(2), -2.0, 2.0)
    j, _ = evaluate(inst, np.array([-0.3]), u)  # effective parameter 0.5
    assert np.allclose(j, [1.5, 1.5], atol=1e-12)


def test_evaluate_batch_agrees_with_scalar_calls():
    inst = make_witting_instance()
    grid = TimeGrid(0.0, 0.05, 0.05)
    u = ControlTrajectory(grid, np.array([0.3, -0.8]), -2.0, 2.0)
    alphas = np.linspace(-0.7, 0.7, 9)[:, None]
    jb, _ = evaluate_batch(inst, alphas, u)
    for row, alpha in zip(jb, alphas):
        js, _ = evaluate(inst, alpha, u)
        assert np.array_equal(row, js)


def test_evaluate_controls_agrees_with_evaluate_batch():
    inst = make_witting_instance()
    grid = TimeGrid(0.0, 0.05, 0.05)
    rng = np.random.default_rng(0)
    u_matrix = rng.uniform(-2.0, 2.0, size=(6, 2))
    alphas = np.linspace(-0.7, 0.7, 5)[:, None]
    jc, gc = evaluate_controls(inst, alphas, u_matrix, grid)
    assert jc.shape == (6, 5, 2)
    for c in range(6):
        u = ControlTrajectory(grid, u_matrix[c], -2.0, 2.0)
        jb, gb = evaluate_batch(inst, alphas, u)
        assert np.allclose(jc[c], jb, atol=1e-12)
        assert gc[c].shape == gb.shape


def test_realizations_follow_lexicographic_sample_order():
    inst = make_witting_instance()
    grid = TimeGrid(0.0, 0.05, 0.05)
    u = ControlTrajectory(grid, np.array([0.5, 0.1]), -2.0, 2.0)
    box = UncertaintyBox(np.array([[-0.7, 0.7]]), 5)
    rs = evaluate_realizations(inst, u, box)
    alphas = box.axis_samples(0)
    expect = witting_eval(np.array([0.5, 0.1]), 0.8 + alphas)
    assert np.allclose(rs.points, expect, atol=1e-12)


def test_nominal_realization_is_included_in_the_sup():
    """The componentwise supremum weakly dominates the nominal objectives."""
    inst = make_witting_instance()
    grid = TimeGrid(0.0, 0.05, 0.05)
    u = ControlTrajectory(grid, np.array([-0.4, 1.2]), -2.0, 2.0)
    box = UncertaintyBox(np.array([[-0.7, 0.7]]), 21)
    rs = evaluate_realizations(inst, u, box)
    j_nom, _ = evaluate(inst, np.array([0.0]), u)
    assert np.any(np.all(rs.points == j_nom, axis=1))
    assert np.all(j_nom <= sup_vector(rs) + 1e-12)


@settings(max_examples=20, deadline=None)
@given(u1=st.floats(-2.0, 2.0), u2=st.floats(-2.0, 2.0),
       coarse=st.sampled_from([3, 5, 9]))
def test_sup_is_monotone_in_sampling_density(u1, u2, coarse):
    """A denser tensor grid can only increase the componentwise supremum."""
    inst = make_witting_instance()
    grid = TimeGrid(0.0, 0.05, 0.05)
    u = ControlTrajectory(grid, np.array([u1, u2]), -2.0, 2.0)
    fine = coarse * 2 - 1  # coarse grid points are a subset of the fine grid
    sup_c = sup_vector(evaluate_realizations(
        inst, u, UncertaintyBox(np.array([[-0.7, 0.7]]), coarse)))
    sup_f = sup_vector(evaluate_realizations(
        inst, u, UncertaintyBox(np.array([[-0.7, 0.7]]), fine)))
    assert np.all(sup_c <= sup_f + 1e-12)


# ---------------------------------------------------------------------------
# robust feasibility


def _constrained_instance(limit):
    # state x(t) = x0 + t must stay below limit at every node
    return UMocpInstance(
        n_x=1,
        k=1,
        dynamics=lambda x, u: np.ones_like(x),
        running_costs=(lambda states, u: np.zeros(states.shape[:-1]),),
        terminal_costs=(lambda xf, u: np.zeros(xf.shape[:-1]),),
        constraints=(lambda states, u: states[..., 0] - limit,),
        x0=np.array([0.0]),
    )


def test_robust_feasible_checks_every_scenario():
    grid = TimeGrid(0.0, 1.0, 0.5)
    u = zero_control(grid)
    box = UncertaintyBox(np.array([[-0.5, 0.5]]), 3)
    # final state is 1 + alpha; feasible iff 1 + 0.5 <= limit
    assert robust_feasible(_constrained_instance(1.6), u, box)
    assert not robust_feasible(_constrained_instance(1.4), u, box)
    # nominal-only check passes where the robust one fails
    assert robust_feasible(_constrained_instance(1.4), u, UncertaintyBox.nominal())


def test_feasibility_tolerance_admits_boundary_activity():
    grid = TimeGrid(0.0, 1.0, 0.5)
    u = zero_control(grid)
    box = UncertaintyBox.nominal()
    assert robust_feasible(_constrained_instance(1.0), u, box)
    assert not robust_feasible(_constrained_instance(1.0 - 10 * FEASIBILITY_TOL),
                               u, box)


def test_unconstrained_instances_are_always_feasible():
    grid = TimeGrid(0.0, 0.5, 0.1)
    inst = scalar_instance(lambda x, u: np.zeros_like(x))
    assert robust_feasible(inst, zero_control(grid),
                           UncertaintyBox(np.array([[-1.0, 1.0]]), 5))


def test_evaluate_robust_packages_realizations_and_feasibility():
    grid = TimeGrid(0.0, 1.0, 0.5)
    u = zero_control(grid)
    box = UncertaintyBox(np.array([[-0.5, 0.5]]), 3)
    rs, feasible = evaluate_robust(_constrained_instance(1.6), u, box)
    assert feasible
    assert len(rs) == 3
    _, infeasible = evaluate_robust(_constrained_instance(1.4), u, box)
    assert not infeasible


def test_evaluation_is_deterministic():
    inst = make_witting_instance()
    grid = TimeGrid(0.0, 0.05, 0.05)
    u = ControlTrajectory(grid, np.array([0.123, -0.456]), -2.0, 2.0)
    box = UncertaintyBox(np.array([[-0.7, 0.7]]), 21)
    a = evaluate_realizations(inst, u, box).points
    b = evaluate_realizations(inst, u, box).points
    assert np.array_equal(a, b)
