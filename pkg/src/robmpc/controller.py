"""Online phase: library lookup with inverse-distance interpolation,
preference selection, reference-point refinement and the receding-horizon
loop with its four method variants.

Variants: OPT_OFF_ON (nominal library, no refinement), SBR_OFF_ON (robust
library, no refinement), SBR_RPM (refinement only, no library), HYBRID
(robust library + refinement).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .moo import DecisionBox, d_inf, worst_case_set
from .ocp import (
    FEASIBILITY_TOL,
    ControlTrajectory,
    TimeGrid,
    UMocpInstance,
    UncertaintyBox,
    evaluate_batch,
    evaluate_controls,
)
from .library import Library, LibraryEntry, CarNodeFactory, neighbors
from .vehicle import (
    ReducedState,
    Track,
    VehicleParams,
    VehicleState,
    build_car_umocp,
    make_dynamics,
    mirror_reduce,
    project_to_track,
    symmetry_reduce,
    wrap_angle,
)

__all__ = [
    "MethodVariant",
    "Preference",
    "MpcConfig",
    "StepRecord",
    "SimulationLog",
    "Instrumentation",
    "MpcSimulation",
    "select_by_preference",
    "interpolate_controls",
    "rpm_refine",
    "RpmResult",
    "RpmInfeasibleError",
    "mpc_run",
]

log = logging.getLogger(__name__)


class MethodVariant(enum.Enum):
    OPT_OFF_ON = "opt"
    SBR_OFF_ON = "sbr"
    SBR_RPM = "rpm"
    HYBRID = "hybrid"

    @property
    def uses_library(self) -> bool:
        return self in (MethodVariant.OPT_OFF_ON, MethodVariant.SBR_OFF_ON,
                        MethodVariant.HYBRID)

    @property
    def uses_rpm(self) -> bool:
        return self in (MethodVariant.SBR_RPM, MethodVariant.HYBRID)

    @property
    def uses_uncertainty(self) -> bool:
        return self is not MethodVariant.OPT_OFF_ON


@dataclass(frozen=True)
class Preference:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim != 1 or rho.shape[0] < 1:
            raise ValueError("preference must be a 1-d weight vector")
        if np.any(rho < 0):
            raise ValueError("preference weights must be nonnegative")
        if abs(rho.sum() - 1.0) > 1e-12:
            raise ValueError("preference weights must sum to 1")
        object.__setattr__(self, "rho", rho)


@dataclass(frozen=True)
class MpcConfig:
    t_p: float = 0.5
    h: float = 0.05
    applied_steps: int = 3
    v_x: float = 30.0
    d_uncertainty: tuple[float, float] = (-0.25, 0.25)
    uncertainty_samples: int = 21
    z: tuple[float, float] = (0.0, 0.7125)
    d_max: float = 10.0
    u_min: float = -0.5
    u_max: float = 0.5
    rpm_budget: int = 600
    rpm_initial_step_frac: float = 0.1
    neighbor_strategy: str = "cell-corners"
    selection_rule: str = "chebyshev"  # or "weighted-sum"
    seed: int = 0

    def __post_init__(self):
        if self.applied_steps < 1 or self.applied_steps > self.time_grid.n_nodes:
            raise ValueError("applied_steps must be within the prediction grid")

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.t_p, self.h)

    @property
    def n_u(self) -> int:
        return self.time_grid.n_nodes

    def uncertainty_box(self) -> UncertaintyBox:
        lo, hi = self.d_uncertainty
        return UncertaintyBox(np.array([[lo, hi]]), self.uncertainty_samples)

    def control_box(self) -> DecisionBox:
        return DecisionBox(np.full(self.n_u, self.u_min), np.full(self.n_u, self.u_max))


def select_by_preference(entries, preference: Preference, rule: str = "chebyshev") -> int:
    """Index of the entry whose supremum point best matches the preference.

    Default rule: weighted Chebyshev over sup points normalized by the
    ideal/nadir of the presented set; ties break to the lowest index.
    """
    if len(entries) == 0:
        raise ValueError("cannot select from an empty efficient set")
    sup = np.array([np.asarray(e.sup_point, dtype=float) for e in entries])
    rho = preference.rho
    if sup.shape[1] != rho.shape[0]:
        raise ValueError("preference dimension does not match the objectives")
    ideal = sup.min(axis=0)
    nadir = sup.max(axis=0)
    scaled = (sup - ideal) / (nadir - ideal + 1e-12)
    if rule == "chebyshev":
        scores = np.max(rho * scaled, axis=1)
    elif rule == "weighted-sum":
        scores = scaled @ rho
    else:
        raise ValueError(f"unknown selection rule {rule!r}")
    return int(np.argmin(scores))


def interpolate_controls(controls, distances, box: DecisionBox) -> np.ndarray:
    """Inverse-distance weighted control average; an exact grid hit returns
    that control verbatim."""
    controls = [np.asarray(c, dtype=float) for c in controls]
    distances = np.asarray(distances, dtype=float)
    if len(controls) == 0 or len(controls) != distances.shape[0]:
        raise ValueError("need one distance per control")
    for j, d in enumerate(distances):
        if d == 0.0:
            return controls[j].copy()
    weights = 1.0 / distances
    stacked = np.array(controls)
    u = (weights[:, None] * stacked).sum(axis=0) / weights.sum()
    return box.clip(u)


@dataclass
class RpmResult:
    values: np.ndarray
    phi: float
    evaluations: int
    feasible: bool
    converged: bool
    z_utopic: bool


class RpmInfeasibleError(RuntimeError):
    pass


def rpm_refine(
    instance: UMocpInstance,
    u_init: np.ndarray,
    z,
    box: DecisionBox,
    unc: UncertaintyBox,
    grid: TimeGrid,
    u_min: float,
    u_max: float,
    budget: int = 600,
    initial_step_frac: float = 0.1,
) -> RpmResult:
    """Minimize the Hausdorff distance of the worst-case objective set to the
    reference point over the control box, subject to robust feasibility.

    Coordinate pattern search with a shrinking step (the objective is a
    non-smooth max composite).  An infeasible start triggers a restoration
    pre-phase on the aggregate constraint violation.  Never returns a point
    worse than the best feasible iterate seen.
    """
    z = np.asarray(z, dtype=float)
    samples = unc.samples()
    evals = 0

    def measure_block(u_block):
        """Evaluate a (c, n_u) block: per-candidate phi, violation and
        worst-case set.  All candidates integrate in one numpy sweep."""
        nonlocal evals
        u_block = np.atleast_2d(np.asarray(u_block, dtype=float))
        evals += u_block.shape[0]
        j, g = evaluate_controls(instance, samples, u_block, grid)
        phis, viols, wcs = [], [], []
        for c in range(u_block.shape[0]):
            wc = worst_case_set(j[c])
            wcs.append(wc)
            phis.append(max(d_inf(row, z) for row in wc))
            viols.append(float(g[c].max()) if g[c].size else 0.0)
        return phis, viols, wcs

    def measure(u_vec):
        phis, viols, wcs = measure_block(u_vec[None, :])
        return phis[0], viols[0], wcs[0]

    def pattern_search(u0, objective, stop_when=None):
        """Minimize objective(measurement) by coordinate moves; objective is a
        function (phi, viol) -> score or None for rejected candidates."""
        u = np.asarray(u0, dtype=float).copy()
        phi, viol, wc = measure(u)
        best = (objective(phi, viol), u.copy(), phi, viol, wc)
        step = initial_step_frac * box.width
        while evals < budget and np.max(step / np.maximum(box.width, 1e-300)) > 1e-8:
            if stop_when is not None and stop_when(best[0]):
                break
            candidates = []
            for i in range(box.dim):
                for sgn in (-1.0, 1.0):
                    cand = best[1].copy()
                    cand[i] = np.clip(cand[i] + sgn * step[i], box.lower[i], box.upper[i])
                    candidates.append(cand)
            room = budget - evals
            candidates = candidates[:room]
            phis, viols, wcs = measure_block(np.array(candidates))
            scored = [
                (objective(p, v), c, p, v, w)
                for c, p, v, w in zip(candidates, phis, viols, wcs)
                if objective(p, v) is not None
            ]
            improved = [s for s in scored if s[0] < best[0] - 1e-15]
            if improved:
                best = min(improved, key=lambda s: s[0])
            else:
                step = step / 2.0
        return best

    phi0, viol0, wc0 = measure(u_init)
    start = np.asarray(u_init, dtype=float).copy()
    if viol0 > FEASIBILITY_TOL:
        restored = pattern_search(
            start,
            objective=lambda phi, viol: viol,
            stop_when=lambda v: v <= FEASIBILITY_TOL,
        )
        if restored[3] > FEASIBILITY_TOL:
            raise RpmInfeasibleError(
                f"no robust-feasible control found (violation {restored[3]:.3g})"
            )
        start = restored[1]

    best = pattern_search(
        start,
        objective=lambda phi, viol: phi if viol <= FEASIBILITY_TOL else None,
    )
    if best[0] is None:  # start itself infeasible despite restoration
        raise RpmInfeasibleError("restoration produced an infeasible start")
    z_utopic = bool(np.all(z <= best[4] + 1e-9))
    if not z_utopic:
        log.warning("reference point %s is not utopic for the attained worst case", z)
    converged = evals < budget
    return RpmResult(
        values=best[1],
        phi=float(best[2]),
        evaluations=evals,
        feasible=True,
        converged=converged,
        z_utopic=z_utopic,
    )


@dataclass
class Instrumentation:
    library_lookups: int = 0
    rpm_calls: int = 0
    robust_scenarios: int = 0  # max scenario count seen in any online evaluation
    warnings: list[str] = field(default_factory=list)


@dataclass
class StepRecord:
    step: int
    t: float
    state: VehicleState
    reduced: ReducedState
    mirrored: bool
    control: np.ndarray  # full horizon control, world frame
    applied: np.ndarray  # first applied_steps entries, world frame
    objectives: np.ndarray  # nominal (J1, J2) of the chosen control
    worst_case_front: np.ndarray  # worst-case points of the selected entry/refined control
    rho: np.ndarray
    z: np.ndarray
    violation: bool
    warnings: tuple[str, ...] = ()


@dataclass
class SimulationLog:
    records: list[StepRecord] = field(default_factory=list)
    accumulated_sq_distance: float = 0.0
    accumulated_abs_distance: float = 0.0
    max_abs_distance: float = 0.0
    progress: float = 0.0
    lap_time: float | None = None
    violations: int = 0

    def summary(self) -> dict:
        return {
            "steps": len(self.records),
            "accumulated_sq_distance": self.accumulated_sq_distance,
            "accumulated_abs_distance": self.accumulated_abs_distance,
            "max_abs_distance": self.max_abs_distance,
            "progress": self.progress,
            "lap_time": self.lap_time,
            "violations": self.violations,
        }


CSV_HEADER = (
    ["t", "p1", "p2", "theta", "vy", "r", "xi", "d", "kappa"]
    + [f"u{i}" for i in range(1, 12)]
    + [f"applied{i}" for i in range(1, 4)]
    + ["J1", "J2", "violation"]
)


def record_to_row(rec: StepRecord) -> list[float]:
    s, x = rec.state, rec.reduced
    return (
        [rec.t, s.p1, s.p2, s.theta, s.v_y, s.r, x.xi, x.d, x.kappa]
        + list(rec.control)
        + list(rec.applied)
        + list(rec.objectives)
        + [1.0 if rec.violation else 0.0]
    )


class MpcSimulation:
    """Receding-horizon simulation: one object drives both the CLI runner and
    the interactive service, so their logs agree bit for bit."""

    def __init__(
        self,
        method: MethodVariant,
        track: Track,
        config: MpcConfig,
        library: Library | None = None,
        nominal_library: Library | None = None,
        initial_state: VehicleState | None = None,
        preference: Preference | None = None,
    ):
        if method is MethodVariant.OPT_OFF_ON and nominal_library is None:
            raise ValueError("OPT_OFF_ON requires a nominal library")
        if method in (MethodVariant.SBR_OFF_ON, MethodVariant.HYBRID) and library is None:
            raise ValueError(f"{method.value} requires a robust library")
        self.method = method
        self.track = track
        self.config = config
        self.library = library
        self.nominal_library = nominal_library
        self.preference = preference or Preference(np.array([0.5, 0.5]))
        self.z = np.asarray(config.z, dtype=float)
        self.state = initial_state or VehicleState(0.0, 0.0, 0.0, 0.0, 0.0)
        self.rng = np.random.default_rng(config.seed)
        self.params = VehicleParams(v_x=config.v_x)
        self.dynamics = make_dynamics(self.params)
        self.grid = config.time_grid
        self.box = config.control_box()
        self.robust_box = config.uncertainty_box()
        self.nominal_box = UncertaintyBox.nominal()
        self.counters = Instrumentation()
        self.log = SimulationLog()
        self.step_index = 0
        self.time = 0.0
        self.prev_u_world: np.ndarray | None = None
        _, s0, _ = project_to_track(track, (self.state.p1, self.state.p2))
        self._last_s = s0
        self._progress = 0.0

    # -- lookup -------------------------------------------------------------

    def _lookup(self, library: Library, reduced: ReducedState, warnings: list[str]):
        self.counters.library_lookups += 1
        idx, dists, clamped = neighbors(library, reduced, self.config.neighbor_strategy)
        if clamped:
            warnings.append("reduced state outside the library hull; clamped")
        controls, sel_entries, used_d = [], [], []
        for i, d in zip(idx, dists):
            node = library.nodes.get(int(i))
            if node is None or not node.feasible or not node.entries:
                continue
            j = select_by_preference(node.entries, self.preference,
                                     self.config.selection_rule)
            controls.append(node.entries[j].values)
            sel_entries.append(node.entries[j])
            used_d.append(d)
        if not controls:
            warnings.append("no feasible library node near the state; steering 0")
            zero = np.zeros(self.config.n_u)
            return zero, LibraryEntry(zero, np.zeros(2), np.zeros((1, 2)))
        u = interpolate_controls(controls, used_d, self.box)
        nearest = int(np.argmin(used_d))
        return u, sel_entries[nearest]

    # -- one receding-horizon step ------------------------------------------

    def step(self) -> StepRecord:
        cfg = self.config
        warnings: list[str] = []
        reduced_world = symmetry_reduce(self.track, self.state)
        reduced, mirrored = mirror_reduce(reduced_world)

        unc = self.robust_box if self.method.uses_uncertainty else self.nominal_box
        self.counters.robust_scenarios = max(
            self.counters.robust_scenarios, unc.samples().shape[0]
        )
        instance = build_car_umocp(
            self.params, reduced, self.grid, unc,
            d_max=self.track.d_max, u_min=cfg.u_min, u_max=cfg.u_max,
        )

        front = None
        if self.method is MethodVariant.OPT_OFF_ON:
            u_problem, entry = self._lookup(self.nominal_library, reduced, warnings)
            front = entry.worst_case
        elif self.method is MethodVariant.SBR_OFF_ON:
            u_problem, entry = self._lookup(self.library, reduced, warnings)
            front = entry.worst_case
        else:
            if self.method is MethodVariant.HYBRID:
                u_init, entry = self._lookup(self.library, reduced, warnings)
            else:  # SBR_RPM
                u_init = self._rpm_start(instance, mirrored, warnings)
                entry = None
            try:
                self.counters.rpm_calls += 1
                result = rpm_refine(
                    instance, u_init, self.z, self.box, unc, self.grid,
                    cfg.u_min, cfg.u_max,
                    budget=cfg.rpm_budget,
                    initial_step_frac=cfg.rpm_initial_step_frac,
                )
                u_problem = result.values
                front = result_front = worst_case_set(
                    evaluate_batch(instance, unc.samples(),
                                   ControlTrajectory(self.grid, u_problem,
                                                     cfg.u_min, cfg.u_max))[0]
                )
                if not result.z_utopic:
                    warnings.append("reference point not utopic for this step")
            except RpmInfeasibleError:
                warnings.append("refinement found no feasible point; using fallback")
                u_problem = u_init
                front = entry.worst_case if entry is not None else np.zeros((1, 2))

        u_world = -u_problem if mirrored else u_problem

        j_nominal, _ = evaluate_batch(
            instance, np.zeros((1, unc.n_dims)),
            ControlTrajectory(self.grid, u_problem, cfg.u_min, cfg.u_max),
        )
        objectives = j_nominal[0]

        applied = u_world[: cfg.applied_steps].copy()
        violation = self._advance_plant(applied)

        record = StepRecord(
            step=self.step_index,
            t=self.time,
            state=self.state,
            reduced=reduced_world,
            mirrored=mirrored,
            control=u_world.copy(),
            applied=applied,
            objectives=objectives,
            worst_case_front=np.asarray(front, dtype=float),
            rho=self.preference.rho.copy(),
            z=self.z.copy(),
            violation=violation,
            warnings=tuple(warnings),
        )
        self.counters.warnings.extend(warnings)
        self.log.records.append(record)
        self.prev_u_world = u_world
        self.step_index += 1
        return record

    def _rpm_start(self, instance, mirrored: bool, warnings: list[str]) -> np.ndarray:
        if self.prev_u_world is not None:
            return -self.prev_u_world if mirrored else self.prev_u_world.copy()
        # first iteration: random feasible start, seeded
        from .ocp import robust_feasible

        unc = self.robust_box
        for _ in range(200):
            cand = self.rng.uniform(self.box.lower, self.box.upper)
            ct = ControlTrajectory(self.grid, cand, self.config.u_min, self.config.u_max)
            if robust_feasible(instance, ct, unc):
                return cand
        warnings.append("no random feasible start found; starting from zero")
        return np.zeros(self.config.n_u)

    def _advance_plant(self, applied: np.ndarray) -> bool:
        """Integrate the true plant over the control horizon, accumulating
        centerline metrics at every plant step."""
        h = self.config.h
        x = self.state.as_array()
        _, _, d_prev = project_to_track(self.track, x[0:2])
        violation = False
        for u_i in applied:
            k1 = self.dynamics(x, u_i)
            k2 = self.dynamics(x + 0.5 * h * k1, u_i)
            k3 = self.dynamics(x + 0.5 * h * k2, u_i)
            k4 = self.dynamics(x + h * k3, u_i)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _, s, d = project_to_track(self.track, x[0:2])
            self.log.accumulated_sq_distance += 0.5 * h * (d_prev**2 + d**2)
            self.log.accumulated_abs_distance += 0.5 * h * (abs(d_prev) + abs(d))
            self.log.max_abs_distance = max(self.log.max_abs_distance, abs(d))
            if abs(d) > self.track.d_max:
                violation = True
            d_prev = d
            self.time += h
            # unwrapped arclength progress
            ds = s - self._last_s
            if self.track.closed:
                half = 0.5 * self.track.length
                if ds > half:
                    ds -= self.track.length
                elif ds < -half:
                    ds += self.track.length
            self._progress += ds
            self._last_s = s
            if self.log.lap_time is None and self._progress >= self.track.length - 1e-6:
                self.log.lap_time = self.time
        self.state = VehicleState.from_array(x)
        self.log.progress = self._progress
        if violation:
            self.log.violations += 1
        return violation

    def run(self, steps: int) -> SimulationLog:
        for _ in range(steps):
            self.step()
        return self.log


def mpc_run(
    method: MethodVariant,
    track: Track,
    steps: int,
    config: MpcConfig,
    library: Library | None = None,
    nominal_library: Library | None = None,
    initial_state: VehicleState | None = None,
    preference: Preference | None = None,
) -> SimulationLog:
    sim = MpcSimulation(
        method, track, config,
        library=library, nominal_library=nominal_library,
        initial_state=initial_state, preference=preference,
    )
    return sim.run(steps)
