"""Command-line entry point: library building, simulation, benchmark
validation, sensitivity/convergence studies, library inspection and the
interactive service.

Every run writes a JSON manifest with the fully resolved configuration and
input checksums; `rerun <manifest>` reproduces the run bit for bit.  Exit
codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .moo import SearchConfig

log = logging.getLogger(__name__)


def _file_checksum(path) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _manifest(command: str, options: dict, inputs: list) -> dict:
    return {
        "command": command,
        "options": options,
        "version": __version__,
        "input_checksums": {str(p): _file_checksum(p) for p in inputs},
    }


def _manifest_checksum(manifest: dict) -> str:
    payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


def _write_manifest(manifest: dict, out_path) -> str:
    check = _manifest_checksum(manifest)
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return check


def _write_csv(path, header, rows, manifest_checksum: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest: {manifest_checksum}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _load_track(path):
    from .vehicle import Track

    return Track.from_csv(path)


def _resolve_grid(grid: str):
    from .library import GridSpec, coarse_grid, paper_grid

    if grid == "coarse":
        return coarse_grid(3)
    if grid == "paper":
        return paper_grid()
    if grid.startswith("custom="):
        path = grid.split("=", 1)[1]
        try:
            return GridSpec.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError as exc:
            raise click.UsageError(f"grid file not found: {path}") from exc
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise click.UsageError(f"invalid grid file {path}: {exc}") from exc
    raise click.UsageError(f"unknown grid {grid!r} (use coarse|paper|custom=<file>)")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    """Robust multi-objective MPC toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("build-library")
@click.option("--grid", default="coarse", show_default=True,
              help="coarse | paper | custom=<json file>")
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--population", default=50, show_default=True, type=int)
@click.option("--iterations", default=199, show_default=True, type=int,
              help="Search iterations per node (budget = population x (iterations+1)).")
@click.option("--mutation-scale", default=0.1, show_default=True, type=float)
@click.option("--resume", is_flag=True, help="Resume from <out>.partial.")
@click.option("--dry-run", is_flag=True, help="Print the node plan and exit.")
@click.option("--allow-partial", is_flag=True,
              help="Exit 0 even if some nodes failed.")
@click.option("--nominal", is_flag=True,
              help="Build with the nominal (zero-uncertainty) scenario only.")
@click.option("--out", default="library.bin", show_default=True,
              type=click.Path(dir_okay=False))
def cmd_build_library(grid, workers, seed, population, iterations, mutation_scale,
                      resume, dry_run, allow_partial, nominal, out):
    """Solve the robust efficient set at every grid node and save the result."""
    from .library import CarNodeFactory, build_library, save_library
    from .ocp import UncertaintyBox

    if workers < 1:
        raise click.UsageError("--workers must be >= 1")
    if dry_run and resume:
        raise click.UsageError("--dry-run and --resume are mutually exclusive")
    spec = _resolve_grid(grid)
    if dry_run:
        click.echo(f"grid {grid}: {spec.total_nodes} nodes")
        for d in spec.dims:
            click.echo(f"  {d.name}: [{d.lo:g}, {d.hi:g}] x {d.count}")
        return
    factory = CarNodeFactory(unc=UncertaintyBox.nominal()) if nominal else CarNodeFactory()
    config = SearchConfig(
        population_size=population,
        iterations=iterations,
        mutation_scale=mutation_scale,
        seed=seed,
    )
    manifest = _manifest(
        "build-library",
        {
            "grid": grid,
            "workers": workers,
            "seed": seed,
            "population": population,
            "iterations": iterations,
            "mutation_scale": mutation_scale,
            "nominal": nominal,
            "out": str(out),
        },
        [],
    )
    partial = str(out) + ".partial" if resume else None
    library = build_library(
        spec, factory, config,
        worker_count=workers, base_seed=seed, partial_path=partial,
    )
    save_library(library, out)
    _write_manifest(manifest, out)
    failed = library.manifest.get("failed_nodes", [])
    click.echo(f"saved {library.n_solved} nodes to {out} ({len(failed)} failed)")
    if failed and not allow_partial:
        raise click.ClickException(f"{len(failed)} nodes failed (use --allow-partial)")


def _parse_rho(text: str) -> np.ndarray:
    try:
        rho = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise click.UsageError(f"cannot parse weights {text!r}") from exc
    return rho


@main.command("simulate")
@click.option("--method", default="all", show_default=True,
              type=click.Choice(["opt", "sbr", "rpm", "hybrid", "all"]))
@click.option("--track", "track_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Track CSV (default: bundled synthetic track).")
@click.option("--library", "library_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--nominal-library", "nominal_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--rho", default="0.5,0.5", show_default=True)
@click.option("--z", default="0,0.7125", show_default=True,
              help="Reference point for the refinement methods; pick a point "
                   "below the attainable front (utopic) for sensible tracking.")
@click.option("--steps", default=100, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--rpm-budget", default=600, show_default=True, type=int)
@click.option("--out", default="simulation", show_default=True,
              help="Output prefix; per-method logs land at <out>.<method>.csv.")
def cmd_simulate(method, track_path, library_path, nominal_path, rho, z, steps,
                 seed, rpm_budget, out):
    """Run the receding-horizon loop and write per-step logs plus a summary."""
    from .controller import (
        CSV_HEADER,
        MethodVariant,
        MpcConfig,
        MpcSimulation,
        Preference,
        record_to_row,
    )
    from .library import load_library

    methods = ([MethodVariant(method)] if method != "all" else list(MethodVariant))
    try:
        preference = Preference(_parse_rho(rho))
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    z_point = _parse_rho(z)
    if z_point.shape != (2,):
        raise click.UsageError("--z needs two comma-separated values")

    library = nominal = None
    if library_path:
        library, warn = load_library(library_path)
        for w in warn:
            log.warning("%s: %s", library_path, w)
    if nominal_path:
        nominal, warn = load_library(nominal_path)
        for w in warn:
            log.warning("%s: %s", nominal_path, w)

    for m in methods:
        if m in (MethodVariant.SBR_OFF_ON, MethodVariant.HYBRID) and library is None:
            raise click.UsageError(
                f"method {m.value} needs --library (offline computation required; "
                "only the refinement-only method runs without one)"
            )
        if m is MethodVariant.OPT_OFF_ON and nominal is None:
            raise click.UsageError(
                "method opt needs --nominal-library (it interpolates a "
                "nominal-scenario library)"
            )

    if track_path is None:
        from .tracks import test_track

        track = test_track()
        track_inputs = []
    else:
        track = _load_track(track_path)
        track_inputs = [track_path]

    manifest = _manifest(
        "simulate",
        {
            "method": method,
            "track": track_path,
            "library": library_path,
            "nominal_library": nominal_path,
            "rho": rho,
            "z": z,
            "steps": steps,
            "seed": seed,
            "rpm_budget": rpm_budget,
            "out": str(out),
        },
        track_inputs + [p for p in (library_path, nominal_path) if p],
    )
    check = _write_manifest(manifest, out)

    config = MpcConfig(seed=seed, rpm_budget=rpm_budget,
                       z=(float(z_point[0]), float(z_point[1])))
    summary_rows = []
    for m in methods:
        sim = MpcSimulation(
            m, track, config,
            library=library, nominal_library=nominal, preference=preference,
        )
        result = sim.run(steps)
        rows = [[_fmt(v) for v in record_to_row(rec)] for rec in result.records]
        log_path = f"{out}.{m.value}.csv"
        _write_csv(log_path, CSV_HEADER, rows, check)
        s = result.summary()
        summary_rows.append([
            m.value, _fmt(s["accumulated_abs_distance"]),
            _fmt(s["lap_time"]) if s["lap_time"] is not None else "",
            _fmt(s["max_abs_distance"]), str(s["violations"]),
        ])
        click.echo(
            f"{m.value:7s} acc|d|={s['accumulated_abs_distance']:.3f} "
            f"max|d|={s['max_abs_distance']:.3f} "
            f"lap={s['lap_time'] if s['lap_time'] is not None else '-'} "
            f"violations={s['violations']}"
        )
    _write_csv(
        f"{out}.summary.csv",
        ["method", "accumulated_abs_distance", "lap_time", "max_abs_distance",
         "violations"],
        summary_rows, check,
    )


@main.command("bench")
@click.option("--problem", required=True, type=click.Choice(["lss25", "witting"]))
@click.option("--alpha", default=0.5, show_default=True, type=float)
@click.option("--grid-n", default=200, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Write the reference front as CSV (u1,u2,j1,j2).")
def cmd_bench(problem, alpha, grid_n, out):
    """Validate the analytic benchmark problems against their oracles."""
    if problem == "lss25":
        from .bench import lss25_efficient_set

        _, kept = lss25_efficient_set()
        ok = kept == ["u_II", "u_IV"]
        click.echo(f"robust efficient candidates: {{{', '.join(kept)}}}")
        click.echo(f"{'PASS' if ok else 'FAIL'}: expected {{u_II, u_IV}}")
        if not ok:
            raise click.ClickException("benchmark check failed")
        return

    from .bench import witting_reference_front

    base_dec, _ = witting_reference_front(0.5, grid_n)
    dec, obj = witting_reference_front(alpha, grid_n)
    if out:
        manifest = _manifest(
            "bench", {"problem": problem, "alpha": alpha, "grid_n": grid_n}, []
        )
        _write_csv(
            out, ["u1", "u2", "j1", "j2"],
            [[_fmt(v) for v in row] for row in np.hstack([dec, obj])],
            _manifest_checksum(manifest),
        )
    cell = 4.0 / (grid_n - 1)
    # fraction of the baseline front still present within one grid cell
    diff = np.abs(base_dec[:, None, :] - dec[None, :, :]).max(axis=-1)
    retained = float(np.mean(diff.min(axis=1) <= cell + 1e-12))
    click.echo(
        f"alpha={alpha:g}: {100 * retained:.1f}% of the alpha=0.5 efficient set "
        f"retained (grid {grid_n}x{grid_n})"
    )
    if retained < 0.9:
        click.echo("efficient-set invariance BROKEN at this alpha")
    else:
        click.echo("efficient set invariant at this alpha")


@main.command("sensitivity")
@click.option("--samples", default=4096, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default="sensitivity.csv", show_default=True,
              type=click.Path(dir_okay=False))
def cmd_sensitivity(samples, seed, out):
    """First-order variance-based sensitivity of the car objectives."""
    from .analysis import (
        CAR_SENSITIVITY_NAMES,
        car_sensitivity_model,
        default_car_sensitivity_box,
        sobol_first_order,
    )

    box = default_car_sensitivity_box()
    manifest = _manifest(
        "sensitivity",
        {"samples": samples, "seed": seed, "out": str(out),
         "ranges": box.tolist(), "control": "u = 0 (mid-box)"},
        [],
    )
    check = _write_manifest(manifest, out)
    report = sobol_first_order(
        car_sensitivity_model(), box, samples, seed,
        parameter_names=CAR_SENSITIVITY_NAMES,
    )
    rows = [
        [name, _fmt(report.indices[i, 0]), _fmt(report.half_widths[i, 0]),
         _fmt(report.indices[i, 1]), _fmt(report.half_widths[i, 1])]
        for i, name in enumerate(report.parameter_names)
    ]
    _write_csv(out, ["parameter", "S_J1", "halfwidth_J1", "S_J2", "halfwidth_J2"],
               rows, check)
    click.echo(f"most sensitive for J1: {report.ranking(0)[0]}; "
               f"for J2: {report.ranking(1)[0]} "
               f"(N={samples}, report: {out})")


@main.command("convergence")
@click.option("--problem", default="witting", show_default=True,
              type=click.Choice(["witting"]))
@click.option("--alpha", default=0.5, show_default=True, type=float)
@click.option("--budgets", default="500,1000,10000,100000", show_default=True)
@click.option("--runs", default=30, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default="convergence.csv", show_default=True,
              type=click.Path(dir_okay=False))
def cmd_convergence(problem, alpha, budgets, runs, seed, out):
    """Median archive distance to the brute-force reference per search budget."""
    from .analysis import witting_convergence

    try:
        budget_list = [int(b) for b in budgets.split(",")]
    except ValueError as exc:
        raise click.UsageError(f"cannot parse budgets {budgets!r}") from exc
    manifest = _manifest(
        "convergence",
        {"problem": problem, "alpha": alpha, "budgets": budget_list,
         "runs": runs, "seed": seed, "out": str(out)},
        [],
    )
    check = _write_manifest(manifest, out)
    try:
        rows = witting_convergence(alpha, budget_list, runs, seed)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    _write_csv(
        out,
        ["budget", "runs", "median_decision_delta2", "median_objective_delta2"],
        [[r["budget"], r["runs"], _fmt(r["median_decision_delta2"]),
          _fmt(r["median_objective_delta2"])] for r in rows],
        check,
    )
    for r in rows:
        click.echo(
            f"budget {r['budget']:>7d}: decision {r['median_decision_delta2']:.4f} "
            f"objective {r['median_objective_delta2']:.4f}"
        )


@main.command("inspect-library")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def cmd_inspect_library(path):
    """Print manifest and node statistics of a library file."""
    from .library import STATUS_FAILED, STATUS_FEASIBLE, STATUS_INFEASIBLE, load_library

    library, warnings = load_library(path)
    for w in warnings:
        click.echo(f"warning: {w}")
    click.echo(json.dumps(library.manifest, indent=2, sort_keys=True))
    statuses = [n.status for n in library.nodes.values()]
    sizes = [len(n.entries) for n in library.nodes.values() if n.entries]
    click.echo(f"nodes: {library.n_solved} / {library.spec.total_nodes}")
    click.echo(f"  feasible:   {statuses.count(STATUS_FEASIBLE)}")
    click.echo(f"  infeasible: {statuses.count(STATUS_INFEASIBLE)}")
    click.echo(f"  failed:     {statuses.count(STATUS_FAILED)}")
    if sizes:
        click.echo(
            f"efficient-set sizes: min {min(sizes)}, median "
            f"{int(np.median(sizes))}, max {max(sizes)}"
        )


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--library", "library_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--nominal-library", "nominal_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--tracks-dir", default="tracks", show_default=True,
              type=click.Path(file_okay=False))
def cmd_serve(host, port, library_path, nominal_path, tracks_dir):
    """Run the interactive simulation service."""
    import uvicorn

    from .service import create_app

    app = create_app(
        library_path=library_path,
        nominal_library_path=nominal_path,
        tracks_dir=tracks_dir,
    )
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command("rerun")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
def cmd_rerun(manifest_path):
    """Reproduce a previous run from its manifest."""
    manifest = json.loads(Path(manifest_path).read_text())
    command = manifest.get("command")
    options = manifest.get("options", {})
    target = {
        "build-library": cmd_build_library,
        "simulate": cmd_simulate,
        "sensitivity": cmd_sensitivity,
        "convergence": cmd_convergence,
    }.get(command)
    if target is None:
        raise click.UsageError(f"manifest command {command!r} is not rerunnable")
    for path, checksum in manifest.get("input_checksums", {}).items():
        if _file_checksum(path) != checksum:
            raise click.ClickException(f"input file changed since the run: {path}")
    kwargs = {k.replace("-", "_"): v for k, v in options.items()}
    if command == "simulate":
        for old, new in (("track", "track_path"), ("library", "library_path"),
                         ("nominal_library", "nominal_path")):
            kwargs[new] = kwargs.pop(old)
    if command == "convergence":
        kwargs["budgets"] = ",".join(str(b) for b in kwargs["budgets"])
        kwargs.pop("ranges", None)
    if command == "sensitivity":
        kwargs.pop("ranges", None)
        kwargs.pop("control", None)
    ctx = click.get_current_context()
    ctx.invoke(target, **kwargs)


if __name__ == "__main__":
    sys.exit(main())
