"""Offline library: grid enumeration, per-node solving, parallel builds,
resume, neighbor lookup and the binary persistence format."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robmpc.library import (
    CarNodeFactory,
    GridDim,
    GridSpec,
    Library,
    LibraryFormatError,
    SearchConfig,
    STATUS_FEASIBLE,
    STATUS_INFEASIBLE,
    _append_partial,
    _read_partial,
    build_library,
    coarse_grid,
    enumerate_nodes,
    load_library,
    neighbors,
    node_seed,
    paper_grid,
    save_library,
    solve_node,
)
from robmpc.moo import sup_vector
from robmpc.ocp import evaluate_realizations
from robmpc.vehicle import ReducedState

TINY = GridSpec(dims=(
    GridDim("v_y", -1.0, 1.0, 2),
    GridDim("r", 0.0, 0.0, 1),
    GridDim("xi", 0.0, 0.0, 1),
    GridDim("d", 0.0, 2.0, 2),
    GridDim("kappa", 0.0, 0.0, 1),
))
FAST = SearchConfig(population_size=10, iterations=3, seed=0)


# ---------------------------------------------------------------------------
# grid specification


def test_grid_dim_validation():
    with pytest.raises(ValueError):
        GridDim("x", 0.0, 1.0, 0)
    with pytest.raises(ValueError):
        GridDim("x", 0.0, 1.0, 1)  # single point must have lo == hi
    with pytest.raises(ValueError):
        GridDim("x", 1.0, 0.0, 3)
    assert GridDim("x", 0.0, 1.0, 5).step == 0.25
    assert GridDim("x", 2.0, 2.0, 1).step == 0.0


def test_grid_spec_node_counts():
    assert paper_grid().total_nodes == 223_587
    assert coarse_grid(3).total_nodes == 243
    assert TINY.total_nodes == 4
    with pytest.raises(ValueError):
        GridSpec(dims=())


def test_enumerate_nodes_is_lexicographic():
    nodes = enumerate_nodes(TINY)
    assert nodes.shape == (4, 5)
    assert np.array_equal(nodes[:, 0], [-1.0, -1.0, 1.0, 1.0])
    assert np.array_equal(nodes[:, 3], [0.0, 2.0, 0.0, 2.0])


@given(counts=st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_total_nodes_is_the_grid_product(counts):
    dims = tuple(
        GridDim(f"x{i}", 0.0, 0.0 if c == 1 else 1.0, c)
        for i, c in enumerate(counts)
    )
    spec = GridSpec(dims=dims)
    assert spec.total_nodes == int(np.prod(counts))
    assert enumerate_nodes(spec).shape == (spec.total_nodes, len(counts))


def test_grid_spec_dict_round_trip():
    spec = coarse_grid(3)
    assert GridSpec.from_dict(spec.to_dict()) == spec


def test_node_seed_is_deterministic_and_64_bit():
    assert node_seed(7, 3) == node_seed(7, 3)
    assert node_seed(7, 3) != node_seed(7, 4)
    assert 0 <= node_seed(2**63, 2**17) < 2**64


# ---------------------------------------------------------------------------
# node solving


def test_solve_node_at_the_origin_improves_on_zero_steering():
    factory = CarNodeFactory()
    coords = np.zeros(5)
    node = solve_node(factory, coords, 0, 0, FAST)
    assert node.status == STATUS_FEASIBLE
    assert node.entries
    rs = evaluate_realizations(
        factory.instance(coords), factory.control(np.zeros(11)), factory.unc
    )
    sup_zero = sup_vector(rs)
    assert any(np.all(e.sup_point <= sup_zero + 1e-9) for e in node.entries)


def test_solve_node_at_the_corridor_edge_is_robust_infeasible():
    """At d = d_max any positive offset perturbation violates the corridor
    at the initial node, so no robustly feasible control exists."""
    factory = CarNodeFactory()
    coords = np.array([0.0, 0.0, 0.0, 10.0, 0.0])
    node = solve_node(factory, coords, 5, 0, FAST)
    assert node.status == STATUS_INFEASIBLE
    assert node.entries == ()
    assert not node.feasible


def test_solve_node_is_deterministic():
    factory = CarNodeFactory()
    coords = np.array([1.0, -2.0, 0.1, 3.0, 0.05])
    a = solve_node(factory, coords, 17, 42, FAST)
    b = solve_node(factory, coords, 17, 42, FAST)
    assert len(a.entries) == len(b.entries)
    for ea, eb in zip(a.entries, b.entries):
        assert np.array_equal(ea.values, eb.values)
        assert np.array_equal(ea.sup_point, eb.sup_point)
        assert np.array_equal(ea.worst_case, eb.worst_case)


def test_solve_node_decisions_respect_the_control_box():
    factory = CarNodeFactory()
    node = solve_node(factory, np.zeros(5), 0, 3, FAST)
    for e in node.entries:
        assert np.all(e.values >= factory.u_min - 1e-12)
        assert np.all(e.values <= factory.u_max + 1e-12)


# ---------------------------------------------------------------------------
# building


def test_build_library_solves_every_node():
    library = build_library(TINY, CarNodeFactory(), FAST, base_seed=1)
    assert library.n_solved == 4
    assert sorted(library.nodes) == [0, 1, 2, 3]
    assert library.manifest["failed_nodes"] == []
    assert library.manifest["base_seed"] == 1


def test_build_library_is_independent_of_worker_count(tmp_path):
    a = build_library(TINY, CarNodeFactory(), FAST, worker_count=1, base_seed=1)
    b = build_library(TINY, CarNodeFactory(), FAST, worker_count=8, base_seed=1)
    pa, pb = tmp_path / "a.bin", tmp_path / "b.bin"
    save_library(a, pa)
    save_library(b, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_build_library_resumes_from_a_partial_file(tmp_path):
    partial = tmp_path / "build.partial"
    clean = build_library(TINY, CarNodeFactory(), FAST, base_seed=1)
    # simulate an interrupted build: two finished nodes plus a torn record
    with open(partial, "wb") as fh:
        _append_partial(fh, clean.nodes[0])
        _append_partial(fh, clean.nodes[2])
        fh.write(b"\x40\x00\x00\x00partial-record-cut-off")
    resumed = build_library(
        TINY, CarNodeFactory(), FAST, base_seed=1, partial_path=str(partial)
    )
    pa, pb = tmp_path / "clean.bin", tmp_path / "resumed.bin"
    save_library(clean, pa)
    save_library(resumed, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_read_partial_drops_torn_trailing_records(tmp_path):
    partial = tmp_path / "p.partial"
    library = build_library(TINY, CarNodeFactory(), FAST, base_seed=1)
    with open(partial, "wb") as fh:
        _append_partial(fh, library.nodes[1])
    data = partial.read_bytes()
    partial.write_bytes(data + data[: len(data) // 2])
    nodes = _read_partial(partial)
    assert len(nodes) == 1
    assert nodes[0].index == 1


def test_build_library_rejects_bad_worker_counts():
    with pytest.raises(ValueError):
        build_library(TINY, CarNodeFactory(), FAST, worker_count=0)


# ---------------------------------------------------------------------------
# neighbor lookup


def _bare_library(spec) -> Library:
    return Library(spec=spec, manifest={})


def test_neighbors_on_a_grid_node_report_zero_distance():
    library = _bare_library(coarse_grid(3))
    x = np.array([0.0, 0.0, 0.0, 5.0, 0.0])  # the exact center node
    for strategy in ("cell-corners", "axis"):
        idx, dists, clamped = neighbors(library, x, strategy)
        assert not clamped
        assert np.any(dists == 0.0)


def test_cell_corner_count_at_a_generic_interior_point():
    library = _bare_library(coarse_grid(3))
    x = np.array([0.5, 0.7, 0.1, 3.3, 0.02])
    idx, dists, clamped = neighbors(library, x, "cell-corners")
    assert len(idx) == 32
    assert len(np.unique(idx)) == 32
    assert not clamped
    assert np.all(dists > 0.0)


def test_axis_neighbors_stay_within_the_star_stencil():
    library = _bare_library(coarse_grid(3))
    x = np.array([0.5, 0.7, 0.1, 3.3, 0.02])
    idx, dists, clamped = neighbors(library, x, "axis")
    assert 1 <= len(idx) <= 11  # nearest node plus two per axis
    assert len(np.unique(idx)) == len(idx)


def test_degenerate_dimensions_halve_the_corner_count():
    idx, _, _ = neighbors(_bare_library(TINY), np.array([0.3, 0.0, 0.0, 1.1, 0.0]),
                          "cell-corners")
    assert len(idx) == 4  # only two non-degenerate axes remain


def test_out_of_hull_queries_are_clamped_and_flagged():
    library = _bare_library(coarse_grid(3))
    x = np.array([9.0, 0.0, 0.0, 5.0, 0.0])
    idx, dists, clamped = neighbors(library, x, "cell-corners")
    assert clamped
    assert len(idx) == 32


def test_neighbors_accept_reduced_states_and_validate_dimensions():
    library = _bare_library(coarse_grid(3))
    idx, _, _ = neighbors(library, ReducedState(0.0, 0.0, 0.0, 5.0, 0.0))
    assert np.any(idx >= 0)
    with pytest.raises(ValueError):
        neighbors(library, np.zeros(3))
    with pytest.raises(ValueError):
        neighbors(library, np.zeros(5), strategy="voronoi")


def test_neighbor_distances_are_in_grid_step_units():
    library = _bare_library(coarse_grid(3))
    # halfway along the d axis only: both corners at distance 0.5
    x = np.array([0.0, 0.0, 0.0, 2.5, 0.0])
    idx, dists, _ = neighbors(library, x, "cell-corners")
    assert np.min(dists) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# persistence


@pytest.fixture(scope="module")
def tiny_library():
    return build_library(TINY, CarNodeFactory(), FAST, base_seed=1)


def test_save_load_round_trip(tmp_path, tiny_library):
    path = tmp_path / "lib.bin"
    save_library(tiny_library, path)
    loaded, warnings = load_library(path)
    assert warnings == []
    assert loaded.manifest == tiny_library.manifest
    assert sorted(loaded.nodes) == sorted(tiny_library.nodes)
    for i, node in tiny_library.nodes.items():
        back = loaded.nodes[i]
        assert back.status == node.status and back.seed == node.seed
        assert np.array_equal(back.coords, node.coords)
        for ea, eb in zip(node.entries, back.entries):
            assert np.array_equal(ea.values, eb.values)
            assert np.array_equal(ea.sup_point, eb.sup_point)
            assert np.array_equal(ea.worst_case, eb.worst_case)
    # re-saving the loaded library is bit-identical
    path2 = tmp_path / "lib2.bin"
    save_library(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_truncated_file_fails_the_checksum(tmp_path, tiny_library):
    path = tmp_path / "lib.bin"
    save_library(tiny_library, path)
    data = path.read_bytes()
    path.write_bytes(data[:-20])
    with pytest.raises(LibraryFormatError, match="checksum|truncated"):
        load_library(path)


def test_corrupted_byte_fails_the_checksum(tmp_path, tiny_library):
    path = tmp_path / "lib.bin"
    save_library(tiny_library, path)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(LibraryFormatError):
        load_library(path)


def test_wrong_magic_is_rejected(tmp_path):
    path = tmp_path / "not_a_library.bin"
    path.write_bytes(b"something else entirely, long enough to pass size checks")
    with pytest.raises(LibraryFormatError, match="magic"):
        load_library(path)


def test_manifest_mismatch_warns_but_loads(tmp_path, tiny_library):
    path = tmp_path / "lib.bin"
    save_library(tiny_library, path)
    other = CarNodeFactory(d_max=5.0).manifest_dict()
    library, warnings = load_library(path, expect_manifest={"problem": other})
    assert library.n_solved == tiny_library.n_solved
    assert warnings and "differs" in warnings[0]


def test_matching_manifest_loads_without_warnings(tmp_path, tiny_library):
    path = tmp_path / "lib.bin"
    save_library(tiny_library, path)
    expect = {"problem": CarNodeFactory().manifest_dict()}
    _, warnings = load_library(path, expect_manifest=expect)
    assert warnings == []
