"""Variance-based first-order sensitivity (pick-freeze estimator) and
archive convergence studies against brute-force references."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .moo import Archive, DecisionBox, SearchConfig, delta_p, stochastic_search
from .bench import witting_eval, witting_reference_front, WITTING_BOUNDS

__all__ = [
    "SensitivityReport",
    "sobol_first_order",
    "car_sensitivity_model",
    "CAR_SENSITIVITY_NAMES",
    "delta2_convergence",
    "witting_convergence",
]


@dataclass
class SensitivityReport:
    """First-order variance-based indices per parameter and objective.

    indices has shape (n_params, n_objectives); NaN marks an undefined index
    (zero output variance).  half_widths are bootstrap confidence half-widths
    at the same shape.
    """

    parameter_names: tuple[str, ...]
    indices: np.ndarray
    half_widths: np.ndarray
    n_samples: int
    seed: int
    notes: dict = field(default_factory=dict)

    def ranking(self, objective: int) -> list[str]:
        order = np.argsort(-np.nan_to_num(self.indices[:, objective], nan=-np.inf))
        return [self.parameter_names[i] for i in order]


def sobol_first_order(
    model,
    box,
    n_samples: int,
    seed: int,
    parameter_names=None,
    bootstrap: int = 200,
) -> SensitivityReport:
    """Pick-freeze Monte Carlo estimate of the first-order indices.

    model maps a (batch, n_params) array of parameter vectors to a
    (batch, n_objectives) array of outputs.  box is an (n_params, 2) array of
    uniform sampling intervals.  Zero output variance yields NaN indices
    rather than a 0/0 artifact.
    """
    if n_samples < 64:
        raise ValueError("need at least 64 base samples")
    box = np.asarray(box, dtype=float)
    n_params = box.shape[0]
    if parameter_names is None:
        parameter_names = tuple(f"y{i + 1}" for i in range(n_params))
    rng = np.random.default_rng(seed)
    a = rng.uniform(box[:, 0], box[:, 1], size=(n_samples, n_params))
    b = rng.uniform(box[:, 0], box[:, 1], size=(n_samples, n_params))
    fa = np.asarray(model(a), dtype=float)
    fb = np.asarray(model(b), dtype=float)
    if fa.ndim == 1:
        fa, fb = fa[:, None], fb[:, None]
    n_obj = fa.shape[1]
    var = fa.var(axis=0, ddof=1)
    mean = fa.mean(axis=0)

    # per-parameter hybrid matrices: column i frozen from A, rest from B
    prods = np.empty((n_params, n_samples, n_obj))
    for i in range(n_params):
        ab_i = b.copy()
        ab_i[:, i] = a[:, i]
        fab = np.asarray(model(ab_i), dtype=float)
        if fab.ndim == 1:
            fab = fab[:, None]
        prods[i] = fa * (fab - fb)

    with np.errstate(invalid="ignore", divide="ignore"):
        indices = prods.mean(axis=1) / var
    indices[:, var <= 0.0] = np.nan

    half = np.zeros_like(indices)
    if bootstrap > 0:
        boot = np.empty((bootstrap, n_params, n_obj))
        for r in range(bootstrap):
            idx = rng.integers(0, n_samples, size=n_samples)
            v = fa[idx].var(axis=0, ddof=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                boot[r] = prods[:, idx, :].mean(axis=1) / v
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            lo, hi = np.nanpercentile(boot, [2.5, 97.5], axis=0)
        half = 0.5 * (hi - lo)
        half[:, var <= 0.0] = np.nan

    return SensitivityReport(
        parameter_names=tuple(parameter_names),
        indices=indices,
        half_widths=half,
        n_samples=n_samples,
        seed=seed,
        notes={"estimator": "pick-freeze", "bootstrap": bootstrap,
               "output_mean": mean.tolist()},
    )


CAR_SENSITIVITY_NAMES = ("v_y", "r", "xi", "d", "kappa", "m", "l_f")


def car_sensitivity_model(grid=None, u_value: float = 0.0):
    """Open-loop car objectives as a function of the reduced state plus the
    mass and front axle distance, sampled at a fixed control (u identically
    equal to u_value, the mid-box choice)."""
    from dataclasses import replace

    from .ocp import TimeGrid, integrate_flow, ControlTrajectory, UMocpInstance
    from .vehicle import VehicleParams, arc_coordinates, dynamics_rhs

    if grid is None:
        grid = TimeGrid(0.0, 0.5, 0.05)
    base = VehicleParams()

    def model(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        v_y, r, xi, d, kappa, m, l_f = (y[:, i] for i in range(7))
        params = replace(base, m=m, l_f=l_f)  # array-valued, broadcasts
        # local frame: position from (s=0, d), heading xi
        x = np.stack([np.zeros_like(d), d, xi, v_y, r], axis=-1)
        h = grid.h
        states = np.empty(x.shape[:-1] + (grid.n_nodes, 5))
        states[..., 0, :] = x
        for i in range(grid.n_steps):
            k1 = dynamics_rhs(params, x, u_value)
            k2 = dynamics_rhs(params, x + 0.5 * h * k1, u_value)
            k3 = dynamics_rhs(params, x + 0.5 * h * k2, u_value)
            k4 = dynamics_rhs(params, x + h * k3, u_value)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            states[..., i + 1, :] = x
        # per-sample curvature: offsets relative to each sample's own arc
        offs = np.empty(states.shape[:-1])
        s_fin = np.empty(states.shape[0])
        for b in range(states.shape[0]):
            s_b, d_b = arc_coordinates(float(kappa[b]), states[b, :, 0:2])
            offs[b] = d_b
            s_fin[b] = s_b[-1]
        j1 = h * 0.5 * (offs[:, :-1] ** 2 + offs[:, 1:] ** 2).sum(axis=1)
        j2 = -s_fin
        return np.stack([j1, j2], axis=-1)

    return model


def default_car_sensitivity_box() -> np.ndarray:
    """Sampling ranges for the sensitivity study: moderate reduced-state
    excursions (half the corridor width, half the grid's heading range, so
    the offset/curvature arc coordinates stay well conditioned); mass and
    front axle distance vary +-10% about their nominal values."""
    from .vehicle import VehicleParams

    p = VehicleParams()
    return np.array(
        [
            [-3.0, 3.0],       # v_y
            [-6.0, 6.0],       # r
            [-np.pi / 8, np.pi / 8],  # xi
            [-5.0, 5.0],       # d
            [-0.1, 0.1],       # kappa
            [0.9 * p.m, 1.1 * p.m],
            [0.9 * p.l_f, 1.1 * p.l_f],
        ]
    )


def delta2_convergence(
    evaluate,
    box: DecisionBox,
    reference_decisions: np.ndarray,
    reference_objectives: np.ndarray,
    budgets,
    runs: int,
    seed: int,
    population_size: int = 50,
    mutation_scale: float = 0.1,
    evaluate_population=None,
):
    """Median averaged-Hausdorff distance to a reference, per search budget.

    For each budget and run a fresh seeded stochastic search executes with
    exactly that many candidate evaluations; the distance is measured in both
    the decision and the objective space.  Returns a list of dicts, one per
    budget, in ascending budget order.
    """
    budgets = list(budgets)
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("budgets must be strictly ascending")
    rows = []
    for budget in budgets:
        iterations = max(1, round(budget / population_size) - 1)
        dec_d, obj_d = [], []
        for run in range(runs):
            cfg = SearchConfig(
                population_size=population_size,
                iterations=iterations,
                mutation_scale=mutation_scale,
                seed=seed + 1000 * run + budget,
            )
            archive = stochastic_search(
                evaluate, box, cfg, evaluate_population=evaluate_population
            )
            decisions = np.array([e.decision for e in archive.entries])
            objectives = np.concatenate([e.worst_case for e in archive.entries])
            dec_d.append(delta_p(decisions, reference_decisions))
            obj_d.append(delta_p(objectives, reference_objectives))
        rows.append(
            {
                "budget": budget,
                "runs": runs,
                "median_decision_delta2": float(np.median(dec_d)),
                "median_objective_delta2": float(np.median(obj_d)),
            }
        )
    return rows


def witting_convergence(
    alpha: float,
    budgets,
    runs: int,
    seed: int,
    reference_grid: int = 200,
):
    """Convergence study on the two-variable surrogate at a fixed parameter."""
    from .moo import RealizationSet

    ref_dec, ref_obj = witting_reference_front(alpha, reference_grid)
    lo, hi = WITTING_BOUNDS
    box = DecisionBox(np.array([lo, lo]), np.array([hi, hi]))

    def evaluate(u):
        return RealizationSet(witting_eval(u, alpha)[None, :]), True

    def evaluate_population(pop):
        j = witting_eval(np.asarray(pop, dtype=float), alpha)
        return [(RealizationSet(row[None, :]), True) for row in j]

    return delta2_convergence(
        evaluate, box, ref_dec, ref_obj, budgets, runs, seed,
        evaluate_population=evaluate_population,
    )
