"""Parametric uncertain optimal control: time discretization, RK4 flow
integration, tensor-grid uncertainty sampling and robust evaluation.

Dynamics and cost callbacks are vectorized: they accept state arrays with an
arbitrary batch of leading axes, which lets a whole uncertainty grid be
integrated in one sweep.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .moo import RealizationSet

__all__ = [
    "TimeGrid",
    "ControlTrajectory",
    "UncertaintyBox",
    "UMocpInstance",
    "IntegrationError",
    "integrate_flow",
    "evaluate",
    "evaluate_batch",
    "evaluate_controls",
    "evaluate_robust",
    "evaluate_realizations",
    "robust_feasible",
    "FEASIBILITY_TOL",
]

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant time grid; controls live on the nodes, zero-order hold."""

    t0: float
    te: float
    h: float

    def __post_init__(self):
        if self.te <= self.t0:
            raise ValueError("te must exceed t0")
        if self.h <= 0:
            raise ValueError("step size must be positive")
        steps = (self.te - self.t0) / self.h
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"(te - t0) / h = {steps} is not integral")

    @property
    def n_steps(self) -> int:
        return int(round((self.te - self.t0) / self.h))

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_nodes)


@dataclass(frozen=True)
class ControlTrajectory:
    grid: TimeGrid
    values: np.ndarray
    u_min: float
    u_max: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"expected {self.grid.n_nodes} control values, got shape {v.shape}"
            )
        if np.any(v < self.u_min - 1e-12) or np.any(v > self.u_max + 1e-12):
            raise ValueError("control values violate the box bounds")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class UncertaintyBox:
    """Per-dimension intervals on the uncertain parameter; zero is always a
    sample point so the nominal realization is included."""

    intervals: np.ndarray  # (n_alpha, 2)
    samples_per_dim: int = 21

    def __post_init__(self):
        iv = np.atleast_2d(np.asarray(self.intervals, dtype=float))
        if iv.shape[1] != 2:
            raise ValueError("intervals must have shape (n_alpha, 2)")
        if np.any(iv[:, 0] > 0) or np.any(iv[:, 1] < 0):
            raise ValueError("each interval must contain 0")
        if self.samples_per_dim < 1 or self.samples_per_dim % 2 == 0:
            raise ValueError("samples_per_dim must be a positive odd integer")
        object.__setattr__(self, "intervals", iv)

    @property
    def n_dims(self) -> int:
        return self.intervals.shape[0]

    @staticmethod
    def nominal() -> "UncertaintyBox":
        return UncertaintyBox(intervals=np.array([[0.0, 0.0]]), samples_per_dim=1)

    def axis_samples(self, j: int) -> np.ndarray:
        lo, hi = self.intervals[j]
        pts = np.linspace(lo, hi, self.samples_per_dim)
        # snap the closest point to exactly zero; insert if the grid misses it
        i = int(np.argmin(np.abs(pts)))
        if abs(pts[i]) < 0.5 * (hi - lo) / max(self.samples_per_dim - 1, 1) + 1e-15:
            pts[i] = 0.0
        if not np.any(pts == 0.0):
            pts = np.sort(np.append(pts, 0.0))
        return pts

    def samples(self) -> np.ndarray:
        """Full tensor grid, lexicographic in the per-axis sample index."""
        axes = [self.axis_samples(j) for j in range(self.n_dims)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)


def _default_perturb(x0: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    out = np.broadcast_to(x0, alpha.shape[:-1] + x0.shape).copy()
    out[..., : alpha.shape[-1]] += alpha
    return out


@dataclass(frozen=True)
class UMocpInstance:
    """Finite-dimensional uncertain multi-objective optimal control instance.

    dynamics(x, u_value) -> dx/dt, vectorized over leading axes of x.
    running_costs[i](states, u_values) -> per-node integrand values.
    terminal_costs[i](x_final, u_values) -> scalar terminal term.
    constraints[i](states, u_values) -> per-node constraint values (<= 0 ok).
    perturb(x0, alpha) -> initial state for scenario alpha, vectorized.
    """

    n_x: int
    k: int
    dynamics: Callable
    running_costs: Sequence[Callable]
    terminal_costs: Sequence[Callable]
    x0: np.ndarray
    constraints: Sequence[Callable] = ()
    perturb: Callable = _default_perturb

    def __post_init__(self):
        if len(self.running_costs) != self.k or len(self.terminal_costs) != self.k:
            raise ValueError("need one running and one terminal cost per objective")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))


class IntegrationError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"state became non-finite at integration step {step}")
        self.step = step


def integrate_flow(instance: UMocpInstance, x_start, u: ControlTrajectory) -> np.ndarray:
    """Fixed-step RK4 with zero-order-hold control per interval.

    x_start may carry leading batch axes; returns states of shape
    (..., n_nodes, n_x) including the initial state.
    """
    x = np.asarray(x_start, dtype=float)
    h = u.grid.h
    f = instance.dynamics
    states = np.empty(x.shape[:-1] + (u.grid.n_nodes, instance.n_x))
    states[..., 0, :] = x
    for i in range(u.grid.n_steps):
        ui = u.values[i]
        k1 = f(x, ui)
        k2 = f(x + 0.5 * h * k1, ui)
        k3 = f(x + 0.5 * h * k2, ui)
        k4 = f(x + h * k3, ui)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(i)
        states[..., i + 1, :] = x
    return states


def _trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    return h * (values[..., :-1].sum(axis=-1) + values[..., 1:].sum(axis=-1)) / 2.0


def _evaluate_states(instance: UMocpInstance, states: np.ndarray, u: ControlTrajectory):
    h = u.grid.h
    uv = u.values
    objectives = []
    for cost, terminal in zip(instance.running_costs, instance.terminal_costs):
        running = _trapezoid(np.asarray(cost(states, uv), dtype=float), h)
        objectives.append(running + np.asarray(terminal(states[..., -1, :], uv), dtype=float))
    j = np.stack(objectives, axis=-1)
    if instance.constraints:
        g = np.stack(
            [np.asarray(g_i(states, uv), dtype=float).max(axis=-1) for g_i in instance.constraints],
            axis=-1,
        )
    else:
        g = np.zeros(states.shape[:-2] + (0,))
    return j, g


def evaluate(instance: UMocpInstance, alpha, u: ControlTrajectory):
    """Objectives and per-constraint maxima for a single uncertainty scenario."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    x_init = instance.perturb(instance.x0, alpha)
    states = integrate_flow(instance, x_init, u)
    j, g = _evaluate_states(instance, states, u)
    return j, g


def evaluate_batch(instance: UMocpInstance, alphas: np.ndarray, u: ControlTrajectory):
    """Vectorized evaluation over a batch of scenarios, shape (m, n_alpha)."""
    x_init = instance.perturb(instance.x0, np.asarray(alphas, dtype=float))
    states = integrate_flow(instance, x_init, u)
    return _evaluate_states(instance, states, u)


def evaluate_controls(instance: UMocpInstance, alphas, u_matrix, grid: TimeGrid):
    """Evaluate many control trajectories against many scenarios in one sweep.

    u_matrix has shape (c, n_nodes); returns (j, g) of shapes (c, m, k) and
    (c, m, n_constraints).  Cost/constraint callbacks receive the control
    values with shape (c, 1, n_nodes) so per-candidate terms broadcast.
    """
    alphas = np.asarray(alphas, dtype=float)
    u_matrix = np.asarray(u_matrix, dtype=float)
    c = u_matrix.shape[0]
    x_init = instance.perturb(instance.x0, alphas)  # (m, n_x)
    x = np.broadcast_to(x_init, (c,) + x_init.shape).copy()
    h = grid.h
    f = instance.dynamics
    states = np.empty(x.shape[:-1] + (grid.n_nodes, instance.n_x))
    states[..., 0, :] = x
    for i in range(grid.n_steps):
        ui = u_matrix[:, i][:, None]
        k1 = f(x, ui)
        k2 = f(x + 0.5 * h * k1, ui)
        k3 = f(x + 0.5 * h * k2, ui)
        k4 = f(x + h * k3, ui)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(i)
        states[..., i + 1, :] = x
    uv = u_matrix[:, None, :]
    objectives = []
    for cost, terminal in zip(instance.running_costs, instance.terminal_costs):
        running = _trapezoid(np.asarray(cost(states, uv), dtype=float), h)
        objectives.append(
            running + np.asarray(terminal(states[..., -1, :], uv), dtype=float)
        )
    j = np.stack(objectives, axis=-1)
    if instance.constraints:
        g = np.stack(
            [np.asarray(g_i(states, uv), dtype=float).max(axis=-1)
             for g_i in instance.constraints],
            axis=-1,
        )
    else:
        g = np.zeros(states.shape[:-2] + (0,))
    return j, g


def evaluate_realizations(
    instance: UMocpInstance, u: ControlTrajectory, box: UncertaintyBox
) -> RealizationSet:
    """All objective vectors on the tensor sample grid, lexicographic order."""
    j, _ = evaluate_batch(instance, box.samples(), u)
    return RealizationSet(j)


def robust_feasible(
    instance: UMocpInstance, u: ControlTrajectory, box: UncertaintyBox
) -> bool:
    """True iff every constraint stays <= 0 over all scenarios and nodes."""
    if not instance.constraints:
        return True
    _, g = evaluate_batch(instance, box.samples(), u)
    return bool(g.max() <= FEASIBILITY_TOL)


def evaluate_robust(instance: UMocpInstance, u: ControlTrajectory, box: UncertaintyBox):
    """One-pass (RealizationSet, feasible) evaluation for search callbacks."""
    j, g = evaluate_batch(instance, box.samples(), u)
    feasible = bool(g.size == 0 or g.max() <= FEASIBILITY_TOL)
    return RealizationSet(j), feasible
