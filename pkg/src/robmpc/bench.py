"""Analytic benchmark problems with brute-force oracles.

Two problems: a four-candidate robust selection problem on a planar box of
uncertainty, and a two-variable surrogate whose Pareto set is the segment
u1 = -u2 and is invariant under shifts of its scalar parameter below 1.
"""
from __future__ import annotations

import math

import numpy as np

from .moo import Archive, RealizationSet, archive_update, make_entry
from .ocp import TimeGrid, UMocpInstance

__all__ = [
    "LSS25_CANDIDATES",
    "LSS25_ALPHA_BOX",
    "lss25_eval",
    "lss25_realizations",
    "lss25_efficient_set",
    "WITTING_BOUNDS",
    "WITTING_ALPHA_RANGE",
    "witting_eval",
    "witting_eval_grid",
    "witting_reference_front",
    "make_witting_instance",
]

LSS25_CANDIDATES = {
    "u_I": np.array([-0.3545, 1.3044]),
    "u_II": np.array([0.6445, 0.2392]),
    "u_III": np.array([0.3760, -0.7945]),
    "u_IV": np.array([1.7017, 0.6869]),
}
LSS25_ALPHA_BOX = (-0.2, 0.2)
_LSS25_N = 2.0

WITTING_BOUNDS = (-2.0, 2.0)
WITTING_ALPHA_RANGE = (0.1, 1.5)


def lss25_eval(u, alpha) -> np.ndarray:
    """Objectives of the four-candidate problem; vectorized over leading axes."""
    u = np.asarray(u, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    w1 = u[..., 0] + alpha[..., 0]
    w2 = u[..., 1] + alpha[..., 1]
    scale = 1.0 / _LSS25_N**0.25
    j1 = scale * (w1**2 + w2**2) ** 0.25
    j2 = scale * ((1.0 - w1) ** 2 + (1.0 - w2) ** 2) ** 0.25
    return np.stack([j1, j2], axis=-1)


def _lss25_alpha_grid(samples_per_dim: int) -> np.ndarray:
    lo, hi = LSS25_ALPHA_BOX
    axis = np.linspace(lo, hi, samples_per_dim)
    axis[np.argmin(np.abs(axis))] = 0.0
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([g1.ravel(), g2.ravel()], axis=-1)


def lss25_realizations(u, samples_per_dim: int = 21) -> RealizationSet:
    grid = _lss25_alpha_grid(samples_per_dim)
    return RealizationSet(lss25_eval(np.asarray(u, dtype=float), grid))


def lss25_efficient_set(samples_per_dim: int = 21) -> tuple[Archive, list[str]]:
    """Robust efficient subset of the four printed candidates; returns the
    archive plus the names of the surviving candidates."""
    entries = {
        name: make_entry(u, lss25_realizations(u, samples_per_dim))
        for name, u in LSS25_CANDIDATES.items()
    }
    archive = archive_update(list(entries.values()), Archive())
    kept = [
        name
        for name, e in entries.items()
        if any(e is a for a in archive.entries)
    ]
    return archive, kept


def witting_eval(u, alpha) -> np.ndarray:
    """Objectives of the two-variable surrogate; vectorized over leading axes
    of u, with scalar (or broadcastable) alpha."""
    u = np.asarray(u, dtype=float)
    u1, u2 = u[..., 0], u[..., 1]
    splus = np.sqrt(1.0 + (u1 + u2) ** 2)
    sminus = np.sqrt(1.0 + (u1 - u2) ** 2)
    bump = np.asarray(alpha, dtype=float) * np.exp(-((u1 - u2) ** 2))
    j1 = 0.5 * (splus + sminus + u1 - u2) + bump
    j2 = 0.5 * (splus + sminus - u1 + u2) + bump
    return np.stack([j1, j2], axis=-1)


def witting_eval_grid(grid_n: int, alpha: float):
    """Decision grid over the box plus its objective image."""
    lo, hi = WITTING_BOUNDS
    axis = np.linspace(lo, hi, grid_n)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    decisions = np.stack([g1.ravel(), g2.ravel()], axis=-1)
    return decisions, witting_eval(decisions, alpha)


def pareto_filter_2d(objectives: np.ndarray) -> np.ndarray:
    """Indices of the nondominated points of a 2-objective point cloud,
    O(n log n); exact duplicates keep their first occurrence."""
    obj = np.asarray(objectives, dtype=float)
    if obj.ndim != 2 or obj.shape[1] != 2:
        raise ValueError("expected an (n, 2) objective array")
    order = np.lexsort((np.arange(len(obj)), obj[:, 1], obj[:, 0]))
    keep = []
    best_j2 = math.inf
    seen = set()
    for i in order:
        j1, j2 = obj[i]
        if j2 < best_j2:
            key = (j1, j2)
            if key not in seen:
                seen.add(key)
                keep.append(i)
            best_j2 = j2
    return np.array(sorted(keep), dtype=int)


def witting_reference_front(alpha: float, grid_n: int = 200):
    """Brute-force reference: Pareto filter of a grid_n x grid_n decision grid.

    Returns (decision set, objective front), both (m, 2).
    """
    if grid_n < 2:
        raise ValueError("grid_n too small")
    decisions, objectives = witting_eval_grid(grid_n, alpha)
    idx = pareto_filter_2d(objectives)
    return decisions[idx], objectives[idx]


def make_witting_instance(
    alpha_center: float = 0.8, alpha_halfwidth: float = 0.7
) -> UMocpInstance:
    """The surrogate wrapped as a trivial (zero-dynamics) control instance:
    two control nodes act as the two decision variables, the scalar state
    carries the uncertain parameter."""
    grid = TimeGrid(t0=0.0, te=0.05, h=0.05)

    def dynamics(x, u):
        return np.zeros_like(x)

    def terminal(i):
        def phi(x_final, u_values):
            j = witting_eval(np.broadcast_to(u_values, x_final.shape[:-1] + (2,)),
                             x_final[..., 0])
            return j[..., i]

        return phi

    zero_running = lambda states, u_values: np.zeros(states.shape[:-1])
    return UMocpInstance(
        n_x=1,
        k=2,
        dynamics=dynamics,
        running_costs=(zero_running, zero_running),
        terminal_costs=(terminal(0), terminal(1)),
        x0=np.array([alpha_center]),
    )
