#!/usr/bin/env python3
"""Build the coarse offline libraries (robust and nominal) used by the
simulation experiments.

Writes <out>/library_robust.bin and <out>/library_nominal.bin plus their
manifests.  The build is deterministic in (grid, search budget, seed) and
independent of the worker count.
"""
import argparse
import time
from pathlib import Path

from robmpc.library import (
    CarNodeFactory,
    SearchConfig,
    build_library,
    coarse_grid,
    save_library,
)
from robmpc.ocp import UncertaintyBox


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--points-per-dim", type=int, default=3)
    ap.add_argument("--population", type=int, default=30)
    ap.add_argument("--iterations", type=int, default=10)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = coarse_grid(args.points_per_dim)
    config = SearchConfig(population_size=args.population,
                          iterations=args.iterations, seed=args.seed)

    for name, factory in (
        ("robust", CarNodeFactory()),
        ("nominal", CarNodeFactory(unc=UncertaintyBox.nominal())),
    ):
        t0 = time.perf_counter()
        library = build_library(spec, factory, config,
                                worker_count=args.workers,
                                base_seed=args.seed,
                                partial_path=str(out / f"library_{name}.partial"))
        path = out / f"library_{name}.bin"
        save_library(library, path)
        feasible = sum(1 for n in library.nodes.values() if n.feasible)
        print(f"{name}: {library.n_solved} nodes ({feasible} feasible) "
              f"-> {path} in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
