"""Experiment runners: execute a resolved spec and write its outputs.

Each kind maps to one runner returning named tables plus the raw
solver objects (tests reuse the objects; the CLI only writes tables).
The registry file ships with the package and is parsed with the same
grammar as user configs, one section per entry.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ExperimentSpec,
    build_spec,
    flat_to_entries,
    parse_config_text,
    spec_to_flat,
)
from .errors import ConfigError
from .fpk import Density, make_initial_density, solve_fpk
from .hjb import Policy, extract_policy, solve_hjb
from .mfg import contagion_experiment, solve_mfg
from .model import drift, h_prime, well_being_prime
from .output import RunManifest, Table, export_csv, write_manifest
from .pmp import solve_pmp_deterministic, solve_pmp_stochastic
from .simulate import find_steady_states, simulate_ensemble

__all__ = [
    "ExecutionResult",
    "execute_spec",
    "run_spec",
    "coarsen_spec",
    "registry_specs",
    "registry_names",
    "run_registry_entry",
    "rerun_manifest",
]


@dataclass(frozen=True)
class ExecutionResult:
    """Tables to export plus the raw objects they were built from."""

    tables: dict[str, Table]
    objects: dict[str, object]


def _run_steady_states(spec: ExperimentSpec) -> ExecutionResult:
    run = spec.run
    report = find_steady_states(
        spec.params,
        x_range=(run.x_min, run.x_max),
        scan_points=run.scan_points,
        root_tol=run.root_tol,
    )
    rows = tuple(
        (float(r), float(s), label)
        for r, s, label in zip(report.roots, report.slopes, report.stability)
    )
    table = Table(header=("root", "slope", "stability"), rows=rows)
    return ExecutionResult(tables={"roots": table}, objects={"report": report})


def _run_simulate(spec: ExperimentSpec) -> ExecutionResult:
    run = spec.run
    ens = simulate_ensemble(
        spec.params,
        spec.initial_states,
        effort=run.effort,
        dt=run.dt,
        seed=spec.seed,
        mf_shift=run.mf_shift,
        stopping=run.stopping,
    )
    rows = []
    for i in range(ens.states.shape[0]):
        for k in range(ens.states.shape[1]):
            rows.append((float(ens.times[k]), i, float(ens.states[i, k]), float(ens.efforts[i, k])))
    table = Table(header=("t", "path", "x", "e"), rows=tuple(rows))
    return ExecutionResult(tables={"paths": table}, objects={"ensemble": ens})


def _run_pmp(spec: ExperimentSpec) -> ExecutionResult:
    p = spec.params
    run = spec.run
    if run.mode == "vector_field":
        xs = np.linspace(run.x_min, run.x_max, run.n_points)
        es = np.linspace(run.e_min, run.e_max, run.n_points)
        rows = []
        for x in xs:
            for e in es:
                dx_dt = drift(p, x, e)
                de_dt = e * h_prime(p, x) - p.a * well_being_prime(p, x)
                rows.append((float(x), float(e), float(dx_dt), float(de_dt)))
        table = Table(header=("x", "e", "dx_dt", "de_dt"), rows=tuple(rows))
        return ExecutionResult(tables={"field": table}, objects={})

    solutions = {}
    if run.mode == "stochastic":
        v = solve_hjb(p, spec.grid)
        for x0 in spec.initial_states:
            solutions[x0] = solve_pmp_stochastic(p, x0, v, dt=run.dt, seed=spec.seed)
    else:
        for x0 in spec.initial_states:
            solutions[x0] = solve_pmp_deterministic(
                p, x0, dt=run.dt, max_iters=run.max_iters, tol=run.tol, relax=run.relax
            )

    with_q = run.mode == "stochastic"
    header = ("x0", "t", "x", "p", "e") + (("q",) if with_q else ())
    rows = []
    for x0, sol in solutions.items():
        for k in range(len(sol.times)):
            row = (
                float(x0),
                float(sol.times[k]),
                float(sol.states[k]),
                float(sol.costates[k]),
                float(sol.efforts[k]),
            )
            if with_q:
                row = row + (float(sol.q[k]),)
            rows.append(row)
    traj = Table(header=header, rows=tuple(rows))
    summary = Table(
        header=("x0", "converged", "iterations", "residual", "terminal_state"),
        rows=tuple(
            (float(x0), bool(s.converged), int(s.iterations), float(s.residual), float(s.states[-1]))
            for x0, s in solutions.items()
        ),
    )
    return ExecutionResult(
        tables={"trajectories": traj, "summary": summary},
        objects={"solutions": solutions},
    )


def _surface_table(grid, field: np.ndarray, column: str) -> Table:
    ts = grid.t_nodes
    xs = grid.x_nodes
    rows = []
    for k in range(grid.nt):
        t = float(ts[k])
        for j in range(grid.nx):
            rows.append((t, float(xs[j]), float(field[k, j])))
    return Table(header=("t", "x", column), rows=tuple(rows))


def _run_hjb(spec: ExperimentSpec) -> ExecutionResult:
    v = solve_hjb(spec.params, spec.grid, lf_margin=spec.run.lf_margin)
    pol = extract_policy(spec.params, v)
    return ExecutionResult(
        tables={
            "value": _surface_table(spec.grid, v.v, "value"),
            "effort": _surface_table(spec.grid, pol.e, "effort"),
        },
        objects={"value_field": v, "policy": pol},
    )


def _snapshot_table(density: Density, snapshots: int) -> Table:
    grid = density.grid
    count = max(2, min(snapshots, grid.nt))
    idx = np.unique(np.round(np.linspace(0, grid.nt - 1, count)).astype(int))
    rows = []
    for k in idx:
        t = float(grid.t_nodes[k])
        for j in range(grid.nx):
            rows.append((t, float(grid.x_nodes[j]), float(density.m[k, j])))
    return Table(header=("t", "x", "density"), rows=tuple(rows))


def _constant_policy(grid, effort: float) -> Policy:
    return Policy(grid=grid, e=np.full((grid.nt, grid.nx), float(effort)))


def _run_fpk(spec: ExperimentSpec) -> ExecutionResult:
    m0 = make_initial_density(spec.grid, spec.initial_density)
    policy = _constant_policy(spec.grid, spec.run.effort)
    density = solve_fpk(spec.params, policy, m0)
    table = _snapshot_table(density, spec.run.snapshots)
    return ExecutionResult(tables={"density": table}, objects={"density": density})


def _run_mfg(spec: ExperimentSpec) -> ExecutionResult:
    run = spec.run
    m0 = make_initial_density(spec.grid, spec.initial_density)
    if run.mode == "constant_effort":
        policy = _constant_policy(spec.grid, run.effort)
        density = solve_fpk(spec.params, policy, m0)
        table = _snapshot_table(density, run.snapshots)
        return ExecutionResult(tables={"density": table}, objects={"density": density})

    sol = solve_mfg(
        spec.params,
        spec.grid,
        m0,
        fp_tol=run.fp_tol,
        max_iters=run.max_iters,
        damping=run.damping,
        lf_margin=run.lf_margin,
    )
    history = Table(
        header=("iter", "gap"),
        rows=tuple((i + 1, float(g)) for i, g in enumerate(sol.gap_history)),
    )
    return ExecutionResult(
        tables={
            "density": _snapshot_table(sol.m, run.snapshots),
            "effort": _surface_table(spec.grid, sol.policy.e, "effort"),
            "history": history,
        },
        objects={"solution": sol, "density": sol.m},
    )


def _run_contagion(spec: ExperimentSpec) -> ExecutionResult:
    run = spec.run
    reports = {}
    rows = []
    summary_rows = []
    for h2 in run.h2_values:
        rep = contagion_experiment(
            spec.params, h2, x0=run.x0, horizon=run.horizon, dt=run.dt
        )
        reports[h2] = rep
        for k in range(len(rep.times)):
            rows.append(
                (
                    float(h2),
                    float(rep.times[k]),
                    float(rep.states[k]),
                    float(rep.threshold_efforts[k]),
                )
            )
        summary_rows.append((float(h2), rep.terminal_state, rep.baseline_terminal))
    response = Table(header=("h2", "t", "x", "threshold_effort"), rows=tuple(rows))
    summary = Table(
        header=("h2", "terminal_state", "baseline_terminal"), rows=tuple(summary_rows)
    )
    return ExecutionResult(
        tables={"response": response, "summary": summary}, objects={"reports": reports}
    )


_RUNNERS = {
    "steady_states": _run_steady_states,
    "simulate": _run_simulate,
    "pmp": _run_pmp,
    "hjb": _run_hjb,
    "fpk": _run_fpk,
    "mfg": _run_mfg,
    "contagion": _run_contagion,
}


def execute_spec(spec: ExperimentSpec) -> ExecutionResult:
    """Run one spec in memory; no files are written."""
    return _RUNNERS[spec.kind](spec)


def run_spec(spec: ExperimentSpec, out_dir, fast: bool = False) -> RunManifest:
    """Execute a spec and write CSV outputs plus manifest.json to out_dir.

    fast=True coarsens grids and step counts by 4x for smoke runs; the
    manifest records the coarsened configuration actually executed.
    """
    if fast:
        spec = coarsen_spec(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result = execute_spec(spec)
    outputs = {}
    for stem, table in sorted(result.tables.items()):
        filename = f"{stem}.csv"
        outputs[filename] = export_csv(table, out_dir / filename)
    manifest = RunManifest(
        name=spec.name,
        kind=spec.kind,
        version=__version__,
        seed=spec.seed,
        config=spec_to_flat(spec),
        outputs=outputs,
        wall_clock_s=time.perf_counter() - started,
    )
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest


def _coarse_count(n: int, floor: int, factor: int) -> int:
    return max(floor, (n - 1) // factor + 1)


def coarsen_spec(spec: ExperimentSpec, factor: int = 4) -> ExperimentSpec:
    """Reduce resolution for smoke runs while keeping the spec valid."""
    grid = spec.grid
    if grid is not None:
        grid = replace(
            grid,
            nx=_coarse_count(grid.nx, 3, factor),
            nt=_coarse_count(grid.nt, 2, factor),
        )
    run = spec.run
    changes = {}
    if run.dt is not None:
        changes["dt"] = min(run.dt * factor, spec.params.T / 2.0)
    if run.scan_points is not None:
        changes["scan_points"] = _coarse_count(run.scan_points, 101, factor)
    if run.n_points is not None:
        changes["n_points"] = _coarse_count(run.n_points, 5, factor)
    if run.snapshots is not None and grid is not None:
        changes["snapshots"] = min(run.snapshots, grid.nt)
    if changes:
        run = replace(run, **changes)
    return replace(spec, grid=grid, run=run)


def _registry_text() -> str:
    return resources.files("couplemfg").joinpath("registry.cfg").read_text(encoding="utf-8")


def registry_specs() -> dict[str, ExperimentSpec]:
    """All registry entries, parsed and validated, keyed by name."""
    entries = parse_config_text(_registry_text(), "registry.cfg")
    by_section: dict[str, list] = {}
    for lineno, section, key, value in entries:
        if not section:
            raise ConfigError(f"registry.cfg: line {lineno}: key outside any entry section")
        by_section.setdefault(section, []).append((lineno, key, value))
    specs: dict[str, ExperimentSpec] = {}
    for section, items in by_section.items():
        sub = []
        for lineno, dotted, value in items:
            inner_section, _, key = dotted.rpartition(".")
            sub.append((lineno, inner_section, key, value))
        specs[section] = build_spec(sub, default_name=section, origin=f"registry.cfg [{section}]")
    return specs


def registry_names() -> tuple[str, ...]:
    return tuple(registry_specs().keys())


def run_registry_entry(
    figure_id: str, out_dir, fast: bool = False, seed: int | None = None
) -> RunManifest:
    """Run one registry entry by name ('fig5' or bare '5')."""
    name = figure_id.strip()
    if name.isdigit():
        name = f"fig{name}"
    specs = registry_specs()
    if name not in specs:
        known = ", ".join(specs.keys())
        raise ConfigError(f"unknown figure id {figure_id!r}; registry entries: {known}")
    spec = specs[name]
    if seed is not None:
        spec = spec.with_seed(seed)
    return run_spec(spec, out_dir, fast=fast)


def rerun_manifest(manifest: RunManifest, out_dir) -> RunManifest:
    """Re-execute the run a manifest describes; outputs land in out_dir.

    Byte-identical outputs are only promised for the same package
    version, so a version mismatch is an error.
    """
    if manifest.version != __version__:
        raise ConfigError(
            f"manifest was produced by version {manifest.version}, "
            f"this package is {__version__}"
        )
    spec = build_spec(
        flat_to_entries(manifest.config),
        default_name=manifest.name,
        origin=f"manifest {manifest.name}",
    )
    return run_spec(spec, out_dir)
