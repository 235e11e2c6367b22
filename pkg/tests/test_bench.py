"""Analytic benchmark problems and their brute-force oracles."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robmpc.bench import (
    LSS25_CANDIDATES,
    lss25_eval,
    lss25_efficient_set,
    lss25_realizations,
    make_witting_instance,
    pareto_filter_2d,
    witting_eval,
    witting_eval_grid,
    witting_reference_front,
)
from robmpc.moo import pareto_dominates, set_dominates

u_coord = st.floats(-2.0, 2.0, allow_nan=False)


# ---------------------------------------------------------------------------
# four-candidate robust selection problem


def test_lss25_corner_values():
    assert np.allclose(lss25_eval(np.zeros(2), np.zeros(2)), [0.0, 1.0],
                       atol=1e-12)
    assert np.allclose(lss25_eval(np.ones(2), np.zeros(2)), [1.0, 0.0],
                       atol=1e-12)


@given(u=st.lists(u_coord, min_size=2, max_size=2),
       a=st.lists(st.floats(-0.2, 0.2), min_size=2, max_size=2))
def test_lss25_objectives_are_nonnegative(u, a):
    j = lss25_eval(np.array(u), np.array(a))
    assert np.all(j >= 0.0)


def test_lss25_realizations_contain_the_nominal_scenario():
    u = LSS25_CANDIDATES["u_I"]
    rs = lss25_realizations(u, samples_per_dim=5)
    assert len(rs) == 25
    j_nom = lss25_eval(u, np.zeros(2))
    assert np.any(np.all(rs.points == j_nom, axis=1))


def test_lss25_robust_efficient_candidates():
    _, kept = lss25_efficient_set(samples_per_dim=21)
    assert kept == ["u_II", "u_IV"]


def test_lss25_efficient_set_is_stable_under_coarse_sampling():
    _, kept = lss25_efficient_set(samples_per_dim=3)
    assert kept == ["u_II", "u_IV"]


def test_lss25_nominal_filter_differs_from_the_robust_one():
    """With only the nominal scenario the comparison degenerates to plain
    Pareto dominance among four points."""
    _, kept = lss25_efficient_set(samples_per_dim=1)
    nominal = {name: lss25_eval(u, np.zeros(2))
               for name, u in LSS25_CANDIDATES.items()}
    expect = [
        n for n, j in nominal.items()
        if not any(pareto_dominates(j2, j) for j2 in nominal.values())
    ]
    assert kept == expect


def test_lss25_dominated_candidates_are_set_dominated():
    sets = {name: lss25_realizations(u, 21)
            for name, u in LSS25_CANDIDATES.items()}
    for loser in ("u_I", "u_III"):
        assert any(
            set_dominates(sets[w], sets[loser]) for w in ("u_II", "u_IV")
        )
    assert not set_dominates(sets["u_II"], sets["u_IV"])
    assert not set_dominates(sets["u_IV"], sets["u_II"])


# ---------------------------------------------------------------------------
# two-variable surrogate


def test_witting_center_value():
    assert np.allclose(witting_eval(np.zeros(2), 0.5), [1.5, 1.5], atol=1e-12)


@given(u1=u_coord, u2=u_coord, alpha=st.floats(0.1, 1.5))
def test_witting_swap_symmetry(u1, u2, alpha):
    """Swapping u1 and u2 swaps the two objectives exactly."""
    j = witting_eval(np.array([u1, u2]), alpha)
    j_swapped = witting_eval(np.array([u2, u1]), alpha)
    assert j[0] == pytest.approx(j_swapped[1], abs=1e-12)
    assert j[1] == pytest.approx(j_swapped[0], abs=1e-12)


@given(t=st.floats(-2.0, 2.0), alpha=st.floats(0.1, 1.5))
def test_witting_anti_diagonal_objective_difference(t, alpha):
    """Along u1 = -u2 the objective gap equals u1 - u2 = 2t."""
    j = witting_eval(np.array([t, -t]), alpha)
    assert j[0] - j[1] == pytest.approx(2.0 * t, abs=1e-9)


def test_witting_reference_front_lies_near_the_anti_diagonal():
    grid_n = 200
    dec, obj = witting_reference_front(0.5, grid_n)
    cell = 4.0 / (grid_n - 1)
    assert np.all(np.abs(dec[:, 0] + dec[:, 1]) <= 2.0 * cell + 1e-12)
    assert obj.shape == dec.shape


def test_witting_front_is_invariant_below_the_threshold():
    """Any parameter below 1 shifts both objectives equally, leaving the
    efficient set unchanged up to grid resolution."""
    grid_n = 120
    cell = 4.0 / (grid_n - 1)
    dec_a, _ = witting_reference_front(0.1, grid_n)
    dec_b, _ = witting_reference_front(0.9, grid_n)
    diff = np.abs(dec_a[:, None, :] - dec_b[None, :, :]).max(axis=-1)
    assert diff.min(axis=1).max() <= cell + 1e-12
    assert diff.min(axis=0).max() <= cell + 1e-12


def test_witting_front_breaks_above_the_threshold():
    """At a large parameter the exponential bump reshapes the front: a clear
    fraction of the baseline efficient set disappears."""
    grid_n = 120
    cell = 4.0 / (grid_n - 1)
    dec_base, _ = witting_reference_front(0.5, grid_n)
    dec_hot, _ = witting_reference_front(1.5, grid_n)
    diff = np.abs(dec_base[:, None, :] - dec_hot[None, :, :]).max(axis=-1)
    retained = np.mean(diff.min(axis=1) <= cell + 1e-12)
    assert retained < 0.9


def test_pareto_filter_matches_quadratic_brute_force(rng):
    for _ in range(20):
        pts = rng.uniform(0.0, 1.0, size=(rng.integers(1, 60), 2)).round(2)
        idx = set(pareto_filter_2d(pts).tolist())
        brute = set()
        seen = set()
        for i, p in enumerate(pts):
            if any(pareto_dominates(q, p) for q in pts):
                continue
            key = (p[0], p[1])
            if key in seen:
                continue
            seen.add(key)
            brute.add(i)
        assert idx == brute


def test_pareto_filter_input_validation():
    with pytest.raises(ValueError):
        pareto_filter_2d(np.zeros((3, 3)))


def test_witting_eval_grid_shape():
    dec, obj = witting_eval_grid(7, 0.5)
    assert dec.shape == (49, 2)
    assert obj.shape == (49, 2)
    assert dec[0, 0] == -2.0 and dec[-1, 1] == 2.0


def test_witting_instance_wraps_the_surrogate():
    from robmpc.ocp import ControlTrajectory, TimeGrid, evaluate

    inst = make_witting_instance(alpha_center=0.8, alpha_halfwidth=0.7)
    grid = TimeGrid(0.0, 0.05, 0.05)
    rng = np.random.default_rng(4)
    for _ in range(10):
        u_vec = rng.uniform(-2.0, 2.0, size=2)
        alpha = rng.uniform(-0.7, 0.7)
        u = ControlTrajectory(grid, u_vec, -2.0, 2.0)
        j, g = evaluate(inst, np.array([alpha]), u)
        assert np.allclose(j, witting_eval(u_vec, 0.8 + alpha), atol=1e-12)
        assert g.shape == (0,)
