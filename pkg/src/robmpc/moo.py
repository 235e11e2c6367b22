"""Set-based minmax robust dominance, archiving, stochastic search and set metrics.

Objective vectors are plain float64 arrays of shape (k,), realization sets are
(m, k) arrays holding one objective vector per uncertainty scenario.  All
comparisons follow the minimization convention: smaller is better.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "RealizationSet",
    "DecisionBox",
    "ArchiveEntry",
    "Archive",
    "SearchConfig",
    "pareto_dominates",
    "set_dominates",
    "worst_case_set",
    "sup_vector",
    "make_entry",
    "archive_update",
    "stochastic_search",
    "d_inf",
    "hausdorff",
    "delta_p",
    "export_archive",
]


def _as_points(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError(f"expected a point set of shape (m, k), got {a.shape}")
    return a


@dataclass(frozen=True)
class RealizationSet:
    """Objective vectors of one control under all sampled uncertainty scenarios."""

    points: np.ndarray  # (m, k)

    def __post_init__(self):
        pts = _as_points(self.points)
        if pts.shape[0] == 0:
            raise ValueError("realization set must be nonempty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("realization set contains non-finite values")
        object.__setattr__(self, "points", pts)

    @property
    def k(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class DecisionBox:
    """Box bounds for the decision variables."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))


@dataclass(frozen=True)
class ArchiveEntry:
    decision: np.ndarray
    realizations: RealizationSet
    worst_case: np.ndarray  # maximal subset of realizations, (w, k)
    sup_point: np.ndarray  # componentwise supremum, (k,)


@dataclass
class Archive:
    """Mutually non-dominated entries in the set-based minmax sense."""

    entries: list[ArchiveEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def decisions(self) -> np.ndarray:
        return np.array([e.decision for e in self.entries])

    def sup_points(self) -> np.ndarray:
        return np.array([e.sup_point for e in self.entries])


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 50
    iterations: int = 100
    mutation_scale: float = 0.1
    seed: int = 0
    include_midpoint: bool = True

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 < self.mutation_scale <= 1.0:
            raise ValueError("mutation_scale must be in (0, 1]")

    @property
    def total_samples(self) -> int:
        return self.population_size * (self.iterations + 1)


def _check_dims(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def pareto_dominates(a, b) -> bool:
    """True iff a <= b componentwise with at least one strict inequality."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_dims(a, b)
    return bool(np.all(a <= b) and np.any(a < b))


def set_dominates(a, b) -> bool:
    """Set dominance A subset of B - R^k_>=: every point of A lies weakly below
    some point of B, with at least one strictly smaller component."""
    if isinstance(a, RealizationSet):
        a = a.points
    if isinstance(b, RealizationSet):
        b = b.points
    a = _as_points(a)
    b = _as_points(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("set dominance is undefined for empty sets")
    _check_dims(a, b)
    le = np.all(a[:, None, :] <= b[None, :, :], axis=-1)
    lt = np.any(a[:, None, :] < b[None, :, :], axis=-1)
    return bool(np.all(np.any(le & lt, axis=1)))


def worst_case_set(a) -> np.ndarray:
    """Maximal (upper-nondominated) elements of a point set; exact duplicates
    are collapsed to their first occurrence."""
    if isinstance(a, RealizationSet):
        a = a.points
    pts = _as_points(a)
    if pts.shape[0] == 0:
        raise ValueError("worst-case set of an empty set")
    # a is kept if no other point a' has a <= a' with a != a'
    le = np.all(pts[:, None, :] <= pts[None, :, :], axis=-1)
    lt = np.any(pts[:, None, :] < pts[None, :, :], axis=-1)
    dominated = np.any(le & lt, axis=1)
    keep = ~dominated
    out, seen = [], set()
    for i in np.nonzero(keep)[0]:
        key = pts[i].tobytes()
        if key not in seen:
            seen.add(key)
            out.append(pts[i])
    return np.array(out)


def sup_vector(a) -> np.ndarray:
    """Componentwise supremum over a finite realization set."""
    if isinstance(a, RealizationSet):
        a = a.points
    pts = _as_points(a)
    if pts.shape[0] == 0:
        raise ValueError("supremum of an empty set")
    return pts.max(axis=0)


def make_entry(decision, realizations) -> ArchiveEntry:
    if not isinstance(realizations, RealizationSet):
        realizations = RealizationSet(np.asarray(realizations, dtype=float))
    wc = worst_case_set(realizations)
    return ArchiveEntry(
        decision=np.asarray(decision, dtype=float),
        realizations=realizations,
        worst_case=wc,
        sup_point=sup_vector(realizations),
    )


def _wc_dominates(a: np.ndarray, b: np.ndarray) -> bool:
    # set_dominates(A, B) depends only on the maximal elements of both sets,
    # so archive comparisons run on the cached worst-case subsets.
    le = np.all(a[:, None, :] <= b[None, :, :], axis=-1)
    lt = np.any(a[:, None, :] < b[None, :, :], axis=-1)
    return bool(np.all(np.any(le & lt, axis=1)))


class _ArchiveState:
    """Incremental archiver with a vectorized fast path for singleton
    worst-case sets (the nominal / deterministic case)."""

    def __init__(self, entries: Sequence[ArchiveEntry] = ()):
        self.entries: list[ArchiveEntry] = list(entries)
        self._rebuild_cache()

    def _rebuild_cache(self):
        if self.entries and all(e.worst_case.shape[0] == 1 for e in self.entries):
            self._mat = np.array([e.worst_case[0] for e in self.entries])
        elif not self.entries:
            self._mat = None  # empty archive: fast path decided on first add
        else:
            self._mat = False  # sentinel: general path

    def add(self, p: ArchiveEntry):
        singleton = p.worst_case.shape[0] == 1
        if self._mat is None and singleton:
            self.entries.append(p)
            self._mat = p.worst_case.copy()
            return
        if isinstance(self._mat, np.ndarray) and singleton:
            w = p.worst_case[0]
            le = np.all(self._mat <= w, axis=1)
            lt = np.any(self._mat < w, axis=1)
            if np.any(le & ~lt) or np.any(le & lt):
                # an identical or dominating entry is already archived
                return
            ge = np.all(w <= self._mat, axis=1)
            gt = np.any(w < self._mat, axis=1)
            removed = ge & gt
            if np.any(removed):
                keep = ~removed
                self.entries = [e for e, k in zip(self.entries, keep) if k]
                self._mat = self._mat[keep]
            self.entries.append(p)
            self._mat = np.vstack([self._mat, p.worst_case])
            return
        # general path
        key = np.sort(p.worst_case, axis=0).tobytes()
        for a in self.entries:
            if _wc_dominates(a.worst_case, p.worst_case):
                return
            if (a.worst_case.shape == p.worst_case.shape
                    and np.sort(a.worst_case, axis=0).tobytes() == key):
                return  # exact duplicate of an archived worst-case set
        self.entries = [
            a for a in self.entries if not _wc_dominates(p.worst_case, a.worst_case)
        ]
        self.entries.append(p)
        self._rebuild_cache()

    def archive(self) -> Archive:
        return Archive(entries=list(self.entries))


def archive_update(population: Sequence[ArchiveEntry], archive: Archive) -> Archive:
    """One pass of the streaming nondominated-set archiver.

    A candidate is admitted iff no archived entry set-dominates it; admitted
    candidates then purge every archived entry they set-dominate.  Iterating
    from the empty archive yields exactly the set-based nondominated subset of
    everything presented.
    """
    dims = {e.realizations.k for e in population} | {
        e.realizations.k for e in archive.entries
    }
    if len(dims) > 1:
        raise ValueError(f"mixed objective dimensions in archive update: {dims}")
    state = _ArchiveState(archive.entries)
    for p in population:
        state.add(p)
    return state.archive()


EvalFn = Callable[[np.ndarray], tuple[RealizationSet, bool]]


class SearchEvaluationError(RuntimeError):
    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"evaluation callback failed at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.__cause__ = cause


def stochastic_search(
    evaluate: EvalFn,
    box: DecisionBox,
    config: SearchConfig,
    evaluate_population=None,
) -> Archive:
    """Archive-based stochastic search over a box.

    New candidates are, with probability 1/2, fresh uniform samples and
    otherwise Gaussian perturbations of a uniformly chosen archive member with
    per-coordinate std mutation_scale * box width, clipped to the box.  The
    box midpoint is included in the initial population as a deterministic
    anchor.  Robust-infeasible candidates are discarded before archiving.
    Fully deterministic for a fixed seed.

    evaluate_population, if given, maps a (n, dim) population to a sequence
    of (RealizationSet, feasible) pairs in row order; it must agree with
    evaluate and exists purely so vectorized models can amortize the per-call
    cost.  Candidate generation happens before evaluation, so the archive
    (and the random stream) is identical either way.
    """
    rng = np.random.default_rng(config.seed)
    state = _ArchiveState()
    width = box.width
    sigma = config.mutation_scale * width

    def run_population(pop: np.ndarray, iteration: int):
        try:
            if evaluate_population is not None:
                results = evaluate_population(pop)
            else:
                results = [evaluate(u) for u in pop]
        except Exception as exc:  # noqa: BLE001 - contract: annotate and rethrow
            raise SearchEvaluationError(iteration, exc) from exc
        for u, (realizations, feasible) in zip(pop, results):
            if feasible:
                state.add(make_entry(u, realizations))

    n0 = config.population_size
    pop0 = rng.uniform(box.lower, box.upper, size=(n0, box.dim))
    if config.include_midpoint:
        pop0[0] = 0.5 * (box.lower + box.upper)
    run_population(pop0, 0)

    for it in range(1, config.iterations + 1):
        pop = np.empty((config.population_size, box.dim))
        for i in range(config.population_size):
            if not state.entries or rng.random() < 0.5:
                pop[i] = rng.uniform(box.lower, box.upper)
            else:
                parent = state.entries[rng.integers(len(state.entries))].decision
                pop[i] = box.clip(parent + rng.normal(0.0, 1.0, box.dim) * sigma)
        run_population(pop, it)

    return state.archive()


def d_inf(u, v) -> float:
    """Maximum-norm distance between two vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_dims(u, v)
    return float(np.max(np.abs(u - v)))


def _pairwise(a: np.ndarray, b: np.ndarray, norm: str) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    if norm == "linf":
        return np.max(np.abs(diff), axis=-1)
    if norm == "l2":
        return np.sqrt(np.sum(diff * diff, axis=-1))
    raise ValueError(f"unknown norm {norm!r}")


def hausdorff(a, b) -> float:
    """Hausdorff distance between nonempty finite sets under the max norm."""
    a = _as_points(a)
    b = _as_points(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("Hausdorff distance of an empty set")
    _check_dims(a, b)
    d = _pairwise(a, b, "linf")
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def delta_p(a, r, p: float = 2.0, norm: str = "l2") -> float:
    """Averaged Hausdorff indicator: max of GD_p and IGD_p between an
    approximation and a reference set."""
    a = _as_points(a)
    r = _as_points(r)
    if a.shape[0] == 0 or r.shape[0] == 0:
        raise ValueError("delta_p of an empty set")
    _check_dims(a, r)
    if p < 1.0:
        raise ValueError("p must be >= 1")
    d = _pairwise(a, r, norm)
    gd = float(np.mean(d.min(axis=1) ** p) ** (1.0 / p))
    igd = float(np.mean(d.min(axis=0) ** p) ** (1.0 / p))
    return max(gd, igd)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_archive(archive: Archive, path) -> None:
    """Line-delimited archive export: per entry, decision coordinates, the
    supremum point and the worst-case points, all at full float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in archive.entries:
            decision = ",".join(_fmt(v) for v in e.decision)
            sup = ",".join(_fmt(v) for v in e.sup_point)
            wc = "|".join(",".join(_fmt(v) for v in row) for row in e.worst_case)
            fh.write(f"{decision};{sup};{wc}\n")
