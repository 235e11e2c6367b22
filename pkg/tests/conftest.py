"""Shared fixtures: small offline libraries built once per session.

The controller, CLI, service and acceptance tests all need a populated
library; building it is by far the most expensive setup step, so one robust
and one nominal library are solved on a coarse 3^5 grid with a modest search
budget and shared (both in memory and as files on disk).
"""
from __future__ import annotations

import numpy as np
import pytest

from robmpc.library import (
    CarNodeFactory,
    SearchConfig,
    build_library,
    coarse_grid,
    save_library,
)
from robmpc.ocp import UncertaintyBox

LIB_SEED = 7
LIB_CONFIG = SearchConfig(population_size=30, iterations=10, mutation_scale=0.1,
                          seed=LIB_SEED)


@pytest.fixture(scope="session")
def robust_library():
    return build_library(
        coarse_grid(3), CarNodeFactory(), LIB_CONFIG,
        worker_count=4, base_seed=LIB_SEED,
    )


@pytest.fixture(scope="session")
def nominal_library():
    factory = CarNodeFactory(unc=UncertaintyBox.nominal())
    return build_library(
        coarse_grid(3), factory, LIB_CONFIG,
        worker_count=4, base_seed=LIB_SEED,
    )


@pytest.fixture(scope="session")
def library_files(tmp_path_factory, robust_library, nominal_library):
    """Both libraries saved to disk; returns (robust_path, nominal_path)."""
    d = tmp_path_factory.mktemp("libraries")
    robust = d / "robust.bin"
    nominal = d / "nominal.bin"
    save_library(robust_library, robust)
    save_library(nominal_library, nominal)
    return str(robust), str(nominal)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
