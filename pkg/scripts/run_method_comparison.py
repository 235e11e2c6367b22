#!/usr/bin/env python3
"""Compare the four receding-horizon method variants on the bundled test
track over repeated seeded runs.

Requires the coarse libraries produced by build_coarse_library.py.  Writes
one CSV row per (seed, method) plus a median summary to stdout.
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from robmpc.controller import MethodVariant, MpcConfig, Preference, mpc_run
from robmpc.library import load_library
from robmpc.tracks import test_track


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--library", default="results/library_robust.bin")
    ap.add_argument("--nominal-library", default="results/library_nominal.bin")
    ap.add_argument("--out", default="results/method_comparison.csv")
    ap.add_argument("--runs", type=int, default=30)
    ap.add_argument("--steps", type=int, default=110)
    ap.add_argument("--rho", default="0.75,0.25")
    ap.add_argument("--z", default="0,-15.2")
    ap.add_argument("--rpm-budget", type=int, default=300)
    args = ap.parse_args()

    library, _ = load_library(args.library)
    nominal, _ = load_library(args.nominal_library)
    rho = np.array([float(v) for v in args.rho.split(",")])
    z = tuple(float(v) for v in args.z.split(","))
    track = test_track()

    rows = []
    for seed in range(args.runs):
        for method in MethodVariant:
            t0 = time.perf_counter()
            config = MpcConfig(seed=seed, rpm_budget=args.rpm_budget, z=z)
            log = mpc_run(method, track, args.steps, config,
                          library=library, nominal_library=nominal,
                          preference=Preference(rho))
            s = log.summary()
            rows.append({"seed": seed, "method": method.value, **s,
                         "wall_time": round(time.perf_counter() - t0, 3)})

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)

    print(f"wrote {len(rows)} rows to {out}")
    for method in MethodVariant:
        sub = [r for r in rows if r["method"] == method.value]
        acc = np.median([r["accumulated_abs_distance"] for r in sub])
        mx = np.median([r["max_abs_distance"] for r in sub])
        laps = [r["lap_time"] for r in sub if r["lap_time"]]
        lap = np.median(laps) if laps else float("nan")
        print(f"{method.value:7s} median acc|d|={acc:9.3f} "
              f"max|d|={mx:8.3f} lap={lap:.2f}s ({len(laps)}/{len(sub)} laps)")


if __name__ == "__main__":
    main()
