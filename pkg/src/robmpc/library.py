"""Offline phase: build, persist and query the grid of robust efficient sets
over the reduced parameter space.

The library file is binary: a text manifest header followed by fixed-layout
little-endian records per node and a trailing 64-bit checksum.  Per-node
solves are seeded from the base seed and the node index, so builds are
reproducible and independent of worker count and scheduling.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .moo import Archive, DecisionBox, RealizationSet, SearchConfig, stochastic_search
from .ocp import (
    FEASIBILITY_TOL,
    ControlTrajectory,
    TimeGrid,
    UncertaintyBox,
    evaluate_controls,
    evaluate_robust,
)
from .vehicle import ReducedState, VehicleParams, build_car_umocp

__all__ = [
    "GridDim",
    "GridSpec",
    "LibraryEntry",
    "LibraryNode",
    "Library",
    "CarNodeFactory",
    "paper_grid",
    "coarse_grid",
    "enumerate_nodes",
    "node_seed",
    "solve_node",
    "build_library",
    "neighbors",
    "save_library",
    "load_library",
    "LibraryFormatError",
]

log = logging.getLogger(__name__)

MAGIC = b"RMPCLIB\x01"
FORMAT_VERSION = 1

STATUS_FEASIBLE = 1
STATUS_INFEASIBLE = 0
STATUS_FAILED = 2


@dataclass(frozen=True)
class GridDim:
    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.count == 1 and self.hi != self.lo:
            raise ValueError("single-point dimension must have lo == hi")
        if self.hi < self.lo:
            raise ValueError("hi must be >= lo")

    @property
    def step(self) -> float:
        if self.count == 1:
            return 0.0
        return (self.hi - self.lo) / (self.count - 1)

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class GridSpec:
    """Per-dimension grids in reduced-state order (v_y, r, xi, d, kappa)."""

    dims: tuple[GridDim, ...]

    def __post_init__(self):
        if not self.dims:
            raise ValueError("grid spec needs at least one dimension")

    @property
    def n_dims(self) -> int:
        return len(self.dims)

    @property
    def total_nodes(self) -> int:
        n = 1
        for d in self.dims:
            n *= d.count
        return n

    def to_dict(self) -> dict:
        return {"dims": [asdict(d) for d in self.dims]}

    @staticmethod
    def from_dict(data: dict) -> "GridSpec":
        return GridSpec(dims=tuple(GridDim(**d) for d in data["dims"]))


def paper_grid() -> GridSpec:
    return GridSpec(
        dims=(
            GridDim("v_y", -3.0, 3.0, 13),
            GridDim("r", -6.0, 6.0, 13),
            GridDim("xi", -np.pi / 4, np.pi / 4, 7),
            GridDim("d", 0.0, 10.0, 21),
            GridDim("kappa", -0.1, 0.1, 9),
        )
    )


def coarse_grid(points_per_dim: int = 3) -> GridSpec:
    return GridSpec(
        dims=(
            GridDim("v_y", -3.0, 3.0, points_per_dim),
            GridDim("r", -6.0, 6.0, points_per_dim),
            GridDim("xi", -np.pi / 4, np.pi / 4, points_per_dim),
            GridDim("d", 0.0, 10.0, points_per_dim),
            GridDim("kappa", -0.1, 0.1, points_per_dim),
        )
    )


def enumerate_nodes(spec: GridSpec) -> np.ndarray:
    """All grid nodes, lexicographic in the per-dimension index."""
    axes = [d.values() for d in spec.dims]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def node_seed(base_seed: int, node_index: int) -> int:
    return (int(base_seed) ^ int(node_index)) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class LibraryEntry:
    values: np.ndarray  # control trajectory values (n_u,)
    sup_point: np.ndarray  # (k,)
    worst_case: np.ndarray  # (w, k)


@dataclass(frozen=True)
class LibraryNode:
    index: int
    coords: np.ndarray
    status: int
    seed: int
    entries: tuple[LibraryEntry, ...]

    @property
    def feasible(self) -> bool:
        return self.status == STATUS_FEASIBLE


@dataclass
class Library:
    spec: GridSpec
    manifest: dict
    nodes: dict[int, LibraryNode] = field(default_factory=dict)

    @property
    def n_solved(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class CarNodeFactory:
    """Picklable per-node problem builder for the car maneuvering uMOCP."""

    params: VehicleParams = VehicleParams()
    grid: TimeGrid = TimeGrid(0.0, 0.5, 0.05)
    unc: UncertaintyBox = UncertaintyBox(np.array([[-0.25, 0.25]]), 21)
    d_max: float = 10.0
    u_min: float = -0.5
    u_max: float = 0.5

    def instance(self, coords: np.ndarray):
        x0 = ReducedState.from_array(coords)
        return build_car_umocp(
            self.params, x0, self.grid, self.unc,
            d_max=self.d_max, u_min=self.u_min, u_max=self.u_max,
        )

    def control_box(self) -> DecisionBox:
        n = self.grid.n_nodes
        return DecisionBox(np.full(n, self.u_min), np.full(n, self.u_max))

    def control(self, values: np.ndarray) -> ControlTrajectory:
        return ControlTrajectory(self.grid, values, self.u_min, self.u_max)

    def manifest_dict(self) -> dict:
        return {
            "vehicle": asdict(self.params),
            "time_grid": {"t0": self.grid.t0, "te": self.grid.te, "h": self.grid.h},
            "uncertainty": {
                "intervals": self.unc.intervals.tolist(),
                "samples_per_dim": self.unc.samples_per_dim,
            },
            "d_max": self.d_max,
            "u_min": self.u_min,
            "u_max": self.u_max,
        }

    @staticmethod
    def from_manifest(data: dict) -> "CarNodeFactory":
        return CarNodeFactory(
            params=VehicleParams(**data["vehicle"]),
            grid=TimeGrid(**data["time_grid"]),
            unc=UncertaintyBox(
                np.asarray(data["uncertainty"]["intervals"]),
                data["uncertainty"]["samples_per_dim"],
            ),
            d_max=data["d_max"],
            u_min=data["u_min"],
            u_max=data["u_max"],
        )


def _archive_to_entries(archive: Archive) -> tuple[LibraryEntry, ...]:
    return tuple(
        LibraryEntry(values=e.decision, sup_point=e.sup_point, worst_case=e.worst_case)
        for e in archive.entries
    )


def solve_node(
    factory: CarNodeFactory,
    coords: np.ndarray,
    node_index: int,
    base_seed: int,
    config: SearchConfig,
) -> LibraryNode:
    """Run the robust stochastic search at one grid node."""
    instance = factory.instance(coords)
    box = factory.control_box()
    samples = factory.unc.samples()

    def evaluate(u_vec):
        return evaluate_robust(instance, factory.control(u_vec), factory.unc)

    def evaluate_population(pop):
        j, g = evaluate_controls(instance, samples, pop, factory.grid)
        viol = g.reshape(g.shape[0], -1).max(axis=1) if g.size else np.zeros(len(pop))
        return [
            (RealizationSet(j[c]), bool(viol[c] <= FEASIBILITY_TOL))
            for c in range(len(pop))
        ]

    seed = node_seed(base_seed, node_index)
    archive = stochastic_search(
        evaluate,
        box,
        SearchConfig(
            population_size=config.population_size,
            iterations=config.iterations,
            mutation_scale=config.mutation_scale,
            seed=seed,
            include_midpoint=config.include_midpoint,
        ),
        evaluate_population=evaluate_population,
    )
    status = STATUS_FEASIBLE if archive.entries else STATUS_INFEASIBLE
    if status == STATUS_INFEASIBLE:
        log.warning("node %d (%s): no robust-feasible candidate found",
                    node_index, np.array2string(coords, precision=3))
    return LibraryNode(
        index=node_index,
        coords=np.asarray(coords, dtype=float),
        status=status,
        seed=seed,
        entries=_archive_to_entries(archive),
    )


def _solve_task(args):
    """One work-queue item: solve a node, retrying once; a second failure
    yields a failed-status node rather than crashing the pool."""
    factory, coords, idx, base_seed, config = args
    for attempt in (1, 2):
        try:
            return solve_node(factory, coords, idx, base_seed, config)
        except Exception:  # noqa: BLE001 - one retry, then record the failure
            if attempt == 2:
                log.exception("node %d failed twice", idx)
    return LibraryNode(
        index=idx,
        coords=np.asarray(coords, dtype=float),
        status=STATUS_FAILED,
        seed=node_seed(base_seed, idx),
        entries=(),
    )


def build_library(
    spec: GridSpec,
    factory: CarNodeFactory,
    config: SearchConfig,
    worker_count: int = 1,
    base_seed: int = 0,
    partial_path=None,
    progress_every: int = 50,
) -> Library:
    """Solve every grid node; result is a pure function of (spec, factory,
    config, base_seed) regardless of worker count.  If partial_path is given,
    finished nodes are appended there and an interrupted build resumes from
    the records found."""
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    coords = enumerate_nodes(spec)
    manifest = {
        "format_version": FORMAT_VERSION,
        "grid": spec.to_dict(),
        "problem": factory.manifest_dict(),
        "base_seed": int(base_seed),
        "search": {
            "population_size": config.population_size,
            "iterations": config.iterations,
            "mutation_scale": config.mutation_scale,
            "include_midpoint": config.include_midpoint,
        },
    }
    library = Library(spec=spec, manifest=manifest)

    if partial_path is not None and os.path.exists(partial_path):
        for node in _read_partial(partial_path):
            library.nodes[node.index] = node
        log.info("resuming: %d/%d nodes already solved", len(library.nodes), len(coords))

    pending = [i for i in range(len(coords)) if i not in library.nodes]
    tasks = [(factory, coords[i], i, base_seed, config) for i in pending]

    part_fh = open(partial_path, "ab") if partial_path is not None else None
    try:
        def record(node: LibraryNode):
            library.nodes[node.index] = node
            if part_fh is not None:
                _append_partial(part_fh, node)
            done = len(library.nodes)
            if progress_every and done % progress_every == 0:
                log.info("solved %d/%d nodes", done, len(coords))

        if worker_count == 1:
            for task in tasks:
                record(_solve_task(task))
        else:
            with ProcessPoolExecutor(max_workers=worker_count) as pool:
                for node in pool.map(_solve_task, tasks, chunksize=8):
                    record(node)
    finally:
        if part_fh is not None:
            part_fh.close()

    manifest["failed_nodes"] = sorted(
        n.index for n in library.nodes.values() if n.status == STATUS_FAILED
    )
    return library


# ---------------------------------------------------------------------------
# neighbor lookup


def _grid_fraction(spec: GridSpec, x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Coordinates in units of grid steps, clamped into the hull."""
    t = np.empty(spec.n_dims)
    clamped = False
    for j, dim in enumerate(spec.dims):
        if dim.count == 1:
            t[j] = 0.0
            if abs(x[j] - dim.lo) > 1e-9:
                clamped = True
            continue
        raw = (x[j] - dim.lo) / dim.step
        if raw < 0.0 or raw > dim.count - 1:
            clamped = True
        t[j] = np.clip(raw, 0.0, dim.count - 1)
    return t, clamped


def _flat_index(spec: GridSpec, idx: tuple[int, ...]) -> int:
    flat = 0
    for dim, i in zip(spec.dims, idx):
        flat = flat * dim.count + i
    return flat


def neighbors(
    library: Library, x, strategy: str = "cell-corners"
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Neighboring grid nodes of a reduced state with distances in normalized
    (grid-step) coordinates.

    "cell-corners" returns the corners of the enclosing cell (up to 2^n);
    "axis" returns the nearest node plus its +-1 neighbors along each axis
    (up to 2n + 1 points).  Out-of-hull queries are clamped and flagged.
    """
    if isinstance(x, ReducedState):
        x = x.as_array()
    x = np.asarray(x, dtype=float)
    spec = library.spec
    if x.shape != (spec.n_dims,):
        raise ValueError(f"expected {spec.n_dims} coordinates, got {x.shape}")
    t, clamped = _grid_fraction(spec, x)

    if strategy == "cell-corners":
        choices = []
        for j, dim in enumerate(spec.dims):
            i0 = int(np.floor(t[j]))
            i0 = min(i0, dim.count - 2) if dim.count > 1 else 0
            opts = {i0}
            if dim.count > 1:
                opts.add(i0 + 1)
            choices.append(sorted(opts))
        corner_idx = list(itertools.product(*choices))
    elif strategy == "axis":
        nearest = tuple(
            int(np.clip(round(t[j]), 0, dim.count - 1))
            for j, dim in enumerate(spec.dims)
        )
        pts = {nearest}
        for j, dim in enumerate(spec.dims):
            for delta in (-1, 1):
                i = nearest[j] + delta
                if 0 <= i < dim.count:
                    pts.add(nearest[:j] + (i,) + nearest[j + 1 :])
        corner_idx = sorted(pts)
    else:
        raise ValueError(f"unknown neighbor strategy {strategy!r}")

    indices = np.array([_flat_index(spec, idx) for idx in corner_idx], dtype=int)
    dists = np.array(
        [np.linalg.norm(t - np.asarray(idx, dtype=float)) for idx in corner_idx]
    )
    return indices, dists, clamped


# ---------------------------------------------------------------------------
# persistence


class LibraryFormatError(RuntimeError):
    pass


def _pack_node(node: LibraryNode) -> bytes:
    out = bytearray()
    out += struct.pack("<QQB", node.index, node.seed, node.status)
    out += struct.pack("<I", len(node.coords))
    out += np.asarray(node.coords, dtype="<f8").tobytes()
    out += struct.pack("<I", len(node.entries))
    for e in node.entries:
        values = np.asarray(e.values, dtype="<f8")
        sup = np.asarray(e.sup_point, dtype="<f8")
        wc = np.asarray(e.worst_case, dtype="<f8")
        out += struct.pack("<III", values.shape[0], sup.shape[0], wc.shape[0])
        out += values.tobytes() + sup.tobytes() + wc.tobytes()
    return bytes(out)


def _unpack_node(buf: memoryview, offset: int) -> tuple[LibraryNode, int]:
    index, seed, status = struct.unpack_from("<QQB", buf, offset)
    offset += struct.calcsize("<QQB")
    (n_coords,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    coords = np.frombuffer(buf, "<f8", n_coords, offset).copy()
    offset += 8 * n_coords
    (n_entries,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    entries = []
    for _ in range(n_entries):
        n_u, k, n_wc = struct.unpack_from("<III", buf, offset)
        offset += 12
        values = np.frombuffer(buf, "<f8", n_u, offset).copy()
        offset += 8 * n_u
        sup = np.frombuffer(buf, "<f8", k, offset).copy()
        offset += 8 * k
        wc = np.frombuffer(buf, "<f8", n_wc * k, offset).copy().reshape(n_wc, k)
        offset += 8 * n_wc * k
        entries.append(LibraryEntry(values=values, sup_point=sup, worst_case=wc))
    return (
        LibraryNode(index=index, coords=coords, status=status, seed=seed,
                    entries=tuple(entries)),
        offset,
    )


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def save_library(library: Library, path) -> None:
    manifest_bytes = json.dumps(library.manifest, sort_keys=True).encode("utf-8")
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", FORMAT_VERSION)
    body += struct.pack("<I", len(manifest_bytes))
    body += manifest_bytes
    nodes = [library.nodes[i] for i in sorted(library.nodes)]
    body += struct.pack("<Q", len(nodes))
    for node in nodes:
        body += _pack_node(node)
    body += _checksum(bytes(body))
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_library(path, expect_manifest: dict | None = None) -> tuple[Library, list[str]]:
    """Load a library file; returns (library, warnings).  Checksum or version
    problems raise LibraryFormatError."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 16 or data[: len(MAGIC)] != MAGIC:
        raise LibraryFormatError("not a library file (bad magic)")
    if _checksum(data[:-8]) != data[-8:]:
        raise LibraryFormatError("checksum mismatch (truncated or corrupted file)")
    buf = memoryview(data)
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise LibraryFormatError(f"unsupported format version {version}")
    (mlen,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    manifest = json.loads(bytes(buf[offset : offset + mlen]).decode("utf-8"))
    offset += mlen
    (n_nodes,) = struct.unpack_from("<Q", buf, offset)
    offset += 8
    nodes = {}
    for _ in range(n_nodes):
        node, offset = _unpack_node(buf, offset)
        nodes[node.index] = node
    spec = GridSpec.from_dict(manifest["grid"])
    warnings = []
    if expect_manifest is not None and expect_manifest.get("problem") != manifest.get("problem"):
        warnings.append("library manifest differs from the requested model configuration")
    library = Library(spec=spec, manifest=manifest, nodes=nodes)
    return library, warnings


def _append_partial(fh, node: LibraryNode) -> None:
    rec = _pack_node(node)
    fh.write(struct.pack("<I", len(rec)))
    fh.write(rec)
    fh.flush()


def _read_partial(path) -> list[LibraryNode]:
    nodes = []
    with open(path, "rb") as fh:
        data = fh.read()
    buf = memoryview(data)
    offset = 0
    while offset + 4 <= len(data):
        (rec_len,) = struct.unpack_from("<I", buf, offset)
        if offset + 4 + rec_len > len(data):
            break  # truncated trailing record from an interrupt: drop it
        node, _ = _unpack_node(buf, offset + 4)
        nodes.append(node)
        offset += 4 + rec_len
    return nodes
