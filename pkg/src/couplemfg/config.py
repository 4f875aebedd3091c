"""Experiment configuration: plain-text parsing and fully resolved specs.

Config grammar: UTF-8 text, one ``key = value`` pair per line, optional
``[section]`` headers, ``#`` starts a comment (whole line or trailing).
Keys before the first header are top level.  Unknown keys, duplicate
keys and malformed values are errors that cite the line number.

Recognized layout::

    kind = simulate            # required; selects the runner
    name = fig5                # optional; defaults to the file stem
    seed = 0
    r = 2.5                    # any ModelParams field

    [grid]                     # needed by hjb / fpk / mfg / stochastic pmp
    x_min = -3
    x_max = 10
    nx = 201
    nt = 401

    [initial]                  # states = comma list, or density = ...
    states = -6, 0, 6
    density = mixture((0.5, -5, 0.05), (0.5, 5, 0.05))

    [run]                      # kind-specific knobs, all optional
    dt = 0.01
    effort = zero

The same grammar serves the registry file, where each section is one
entry and keys carry dotted prefixes (``grid.nx = 321``).
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .hjb import Grid
from .model import ModelParams

__all__ = [
    "KINDS",
    "RunOptions",
    "ExperimentSpec",
    "load_config",
    "parse_config_text",
    "build_spec",
    "spec_to_flat",
    "flat_to_entries",
]

KINDS = ("steady_states", "simulate", "pmp", "hjb", "fpk", "mfg", "contagion")

_PARAM_KEYS = tuple(f.name for f in fields(ModelParams))
_TOP_KEYS = ("kind", "name", "seed") + _PARAM_KEYS
_GRID_KEYS = ("x_min", "x_max", "nx", "nt")
_INITIAL_KEYS = ("states", "density")

# Per-kind run-section keys with their defaults.  Every key is optional
# in a config file; the resolved spec (and hence the manifest) always
# carries the full set for its kind.
_RUN_DEFAULTS: dict[str, dict] = {
    "steady_states": {
        "x_min": -10.0,
        "x_max": 10.0,
        "scan_points": 4001,
        "root_tol": 1e-10,
    },
    "simulate": {"dt": 0.01, "effort": 0.0, "stopping": False, "mf_shift": 0.0},
    "pmp": {
        "mode": "deterministic",
        "dt": 0.005,
        "max_iters": 300,
        "tol": 1e-8,
        "relax": 0.5,
        "x_min": -3.0,
        "x_max": 3.0,
        "e_min": 0.0,
        "e_max": 3.0,
        "n_points": 25,
    },
    "hjb": {"lf_margin": 1.1},
    "fpk": {"effort": 0.0, "snapshots": 5},
    "mfg": {
        "mode": "fixed_point",
        "effort": 0.0,
        "fp_tol": 1e-4,
        "max_iters": 50,
        "damping": 0.5,
        "lf_margin": 1.1,
        "snapshots": 5,
    },
    "contagion": {
        "dt": 0.01,
        "x0": 1.0,
        "horizon": 2.0,
        "h2_values": (-2.0, -1.0, 0.0, 1.0, 2.0),
    },
}

_PMP_MODES = ("deterministic", "stochastic", "vector_field")
_MFG_MODES = ("fixed_point", "constant_effort")

# Kinds whose runner needs a [grid] section.
_GRID_REQUIRED = ("hjb", "fpk", "mfg")
# Kinds whose runner needs [initial] states / density.
_STATES_REQUIRED = ("simulate",)
_DENSITY_REQUIRED = ("fpk", "mfg")

_INT_RUN_KEYS = ("scan_points", "max_iters", "n_points", "snapshots")
_STR_RUN_KEYS = ("mode",)
_BOOL_RUN_KEYS = ("stopping",)
_LIST_RUN_KEYS = ("h2_values",)

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class RunOptions:
    """Resolved [run] knobs; fields outside the spec's kind stay None."""

    dt: float | None = None
    effort: float | None = None
    stopping: bool | None = None
    mf_shift: float | None = None
    mode: str | None = None
    max_iters: int | None = None
    tol: float | None = None
    relax: float | None = None
    fp_tol: float | None = None
    damping: float | None = None
    lf_margin: float | None = None
    snapshots: int | None = None
    x0: float | None = None
    horizon: float | None = None
    h2_values: tuple[float, ...] | None = None
    x_min: float | None = None
    x_max: float | None = None
    e_min: float | None = None
    e_max: float | None = None
    n_points: int | None = None
    scan_points: int | None = None
    root_tol: float | None = None


@dataclass(frozen=True)
class ExperimentSpec:
    """One fully resolved experiment: parameters, grids, inputs, knobs."""

    name: str
    kind: str
    params: ModelParams
    seed: int = 0
    grid: Grid | None = None
    initial_states: tuple[float, ...] | None = None
    initial_density: tuple[tuple[float, float, float], ...] | None = None
    run: RunOptions = RunOptions()

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return replace(self, seed=int(seed))


def parse_config_text(text: str, origin: str) -> list[tuple[int, str, str, str]]:
    """Tokenize config text into (lineno, section, key, value) entries."""
    entries: list[tuple[int, str, str, str]] = []
    section = ""
    seen: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{origin}: line {lineno}: unterminated section header")
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"{origin}: line {lineno}: empty section name")
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}: line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{origin}: line {lineno}: missing key before '='")
        if not value:
            raise ConfigError(f"{origin}: line {lineno}: missing value for {key!r}")
        if (section, key) in seen:
            where = f"[{section}] " if section else ""
            raise ConfigError(f"{origin}: line {lineno}: duplicate key {where}{key!r}")
        seen.add((section, key))
        entries.append((lineno, section, key, value))
    return entries


def _parse_float(value: str, where: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None


def _parse_int(value: str, where: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {value!r}") from None


def _parse_bool(value: str, where: str) -> bool:
    low = value.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: expected true/false, got {value!r}")


def _parse_float_list(value: str, where: str) -> tuple[float, ...]:
    parts = [p.strip() for p in value.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{where}: expected a comma-separated list of numbers")
    return tuple(_parse_float(p, where) for p in parts)


def _parse_effort(value: str, where: str) -> float:
    if value.lower() == "zero":
        return 0.0
    e = _parse_float(value, where)
    if e < 0.0:
        raise ConfigError(f"{where}: effort must be >= 0, got {e}")
    return e


def _parse_density(value: str, where: str) -> tuple[tuple[float, float, float], ...]:
    m = re.fullmatch(r"(gaussian|mixture)\s*\((.*)\)", value.strip(), re.S)
    if m is None:
        raise ConfigError(
            f"{where}: density must be gaussian(center, std) or "
            f"mixture((weight, center, std), ...), got {value!r}"
        )
    shape, body = m.group(1), m.group(2)
    try:
        args = ast.literal_eval("(" + body + ",)")
    except (ValueError, SyntaxError):
        raise ConfigError(f"{where}: cannot parse density arguments {body!r}") from None

    def _num(v, what):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: {what} must be a number, got {v!r}")
        return float(v)

    if shape == "gaussian":
        if len(args) != 2:
            raise ConfigError(f"{where}: gaussian takes (center, std), got {len(args)} values")
        center, std = (_num(v, "gaussian argument") for v in args)
        components = ((1.0, center, std),)
    else:
        components = []
        for item in args:
            if not isinstance(item, tuple) or len(item) != 3:
                raise ConfigError(
                    f"{where}: each mixture component must be a (weight, center, std) triple"
                )
            w, center, std = (_num(v, "mixture component entry") for v in item)
            if w <= 0.0:
                raise ConfigError(f"{where}: mixture weight must be > 0, got {w}")
            components.append((w, center, std))
        if not components:
            raise ConfigError(f"{where}: mixture needs at least one component")
        components = tuple(components)
    for _, _, std in components:
        if std <= 0.0:
            raise ConfigError(f"{where}: density std must be > 0, got {std}")
    return components


def _density_to_text(components: tuple[tuple[float, float, float], ...]) -> str:
    if len(components) == 1 and components[0][0] == 1.0:
        _, center, std = components[0]
        return f"gaussian({center!r}, {std!r})"
    parts = ", ".join(f"({w!r}, {c!r}, {s!r})" for w, c, s in components)
    return f"mixture({parts})"


def build_spec(
    entries: list[tuple[int, str, str, str]],
    default_name: str,
    origin: str,
) -> ExperimentSpec:
    """Assemble and validate an ExperimentSpec from parsed entries."""
    top: dict[str, tuple[int, str]] = {}
    grid_raw: dict[str, tuple[int, str]] = {}
    initial_raw: dict[str, tuple[int, str]] = {}
    run_raw: dict[str, tuple[int, str]] = {}
    buckets = {"": top, "grid": grid_raw, "initial": initial_raw, "run": run_raw}

    for lineno, section, key, value in entries:
        if section not in buckets:
            raise ConfigError(f"{origin}: line {lineno}: unknown section [{section}]")
        allowed = {
            "": _TOP_KEYS,
            "grid": _GRID_KEYS,
            "initial": _INITIAL_KEYS,
            "run": None,  # validated against the kind below
        }[section]
        if allowed is not None and key not in allowed:
            where = f"[{section}] " if section else ""
            raise ConfigError(f"{origin}: line {lineno}: unknown key {where}{key!r}")
        buckets[section][key] = (lineno, value)

    def where(bucket: dict, key: str) -> str:
        return f"{origin}: line {bucket[key][0]}"

    if "kind" not in top:
        raise ConfigError(f"{origin}: missing required key 'kind'")
    kind = top["kind"][1]
    if kind not in KINDS:
        raise ConfigError(
            f"{where(top, 'kind')}: kind must be one of {', '.join(KINDS)}, got {kind!r}"
        )

    name = top["name"][1] if "name" in top else default_name
    if not _NAME_RE.match(name):
        span = where(top, "name") if "name" in top else origin
        raise ConfigError(f"{span}: name must be an identifier, got {name!r}")

    seed = _parse_int(top["seed"][1], where(top, "seed")) if "seed" in top else 0

    param_kwargs = {}
    for key in _PARAM_KEYS:
        if key not in top:
            continue
        lineno, value = top[key]
        span = f"{origin}: line {lineno}"
        if key == "g_mode":
            param_kwargs[key] = value
        else:
            param_kwargs[key] = _parse_float(value, span)
    try:
        params = ModelParams(**param_kwargs)
    except ValueError as exc:
        # ModelParams messages start with the offending field name.
        bad = next((k for k in _PARAM_KEYS if str(exc).startswith(k + " ") and k in top), None)
        span = where(top, bad) if bad else origin
        raise ConfigError(f"{span}: {exc}") from None

    grid = None
    if grid_raw:
        for key in _GRID_KEYS:
            if key not in grid_raw:
                raise ConfigError(f"{origin}: [grid] is missing key {key!r}")
        try:
            grid = Grid(
                x_min=_parse_float(grid_raw["x_min"][1], where(grid_raw, "x_min")),
                x_max=_parse_float(grid_raw["x_max"][1], where(grid_raw, "x_max")),
                nx=_parse_int(grid_raw["nx"][1], where(grid_raw, "nx")),
                nt=_parse_int(grid_raw["nt"][1], where(grid_raw, "nt")),
                t_final=params.T,
            )
        except ConfigError as exc:
            if str(exc).startswith(origin):
                raise
            raise ConfigError(f"{origin}: [grid]: {exc}") from None

    initial_states = None
    initial_density = None
    if "states" in initial_raw and "density" in initial_raw:
        raise ConfigError(f"{origin}: [initial] takes either states or density, not both")
    if "states" in initial_raw:
        initial_states = _parse_float_list(initial_raw["states"][1], where(initial_raw, "states"))
    if "density" in initial_raw:
        initial_density = _parse_density(initial_raw["density"][1], where(initial_raw, "density"))

    defaults = _RUN_DEFAULTS[kind]
    run_values = dict(defaults)
    for key, (lineno, value) in run_raw.items():
        if key not in defaults:
            raise ConfigError(
                f"{origin}: line {lineno}: unknown key [run] {key!r} for kind {kind!r}"
            )
        span = f"{origin}: line {lineno}"
        if key in _INT_RUN_KEYS:
            run_values[key] = _parse_int(value, span)
        elif key in _BOOL_RUN_KEYS:
            run_values[key] = _parse_bool(value, span)
        elif key in _LIST_RUN_KEYS:
            run_values[key] = _parse_float_list(value, span)
        elif key in _STR_RUN_KEYS:
            run_values[key] = value
        elif key == "effort":
            run_values[key] = _parse_effort(value, span)
        else:
            run_values[key] = _parse_float(value, span)
    run = RunOptions(**run_values)

    if kind == "pmp" and run.mode not in _PMP_MODES:
        raise ConfigError(f"{origin}: pmp mode must be one of {', '.join(_PMP_MODES)}, got {run.mode!r}")
    if kind == "mfg" and run.mode not in _MFG_MODES:
        raise ConfigError(f"{origin}: mfg mode must be one of {', '.join(_MFG_MODES)}, got {run.mode!r}")

    needs_grid = kind in _GRID_REQUIRED or (kind == "pmp" and run.mode == "stochastic")
    if needs_grid and grid is None:
        raise ConfigError(f"{origin}: kind {kind!r} requires a [grid] section")
    if kind in _STATES_REQUIRED and initial_states is None:
        raise ConfigError(f"{origin}: kind {kind!r} requires [initial] states")
    if kind == "pmp" and run.mode in ("deterministic", "stochastic") and initial_states is None:
        raise ConfigError(f"{origin}: pmp mode {run.mode!r} requires [initial] states")
    if kind in _DENSITY_REQUIRED and initial_density is None:
        raise ConfigError(f"{origin}: kind {kind!r} requires [initial] density")

    return ExperimentSpec(
        name=name,
        kind=kind,
        params=params,
        seed=seed,
        grid=grid,
        initial_states=initial_states,
        initial_density=initial_density,
        run=run,
    )


def load_config(path) -> ExperimentSpec:
    """Parse one config file into a fully resolved ExperimentSpec."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    entries = parse_config_text(text, str(path))
    default_name = path.stem if _NAME_RE.match(path.stem) else "run"
    return build_spec(entries, default_name=default_name, origin=str(path))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    raise TypeError(f"cannot serialize config value {value!r}")


def spec_to_flat(spec: ExperimentSpec) -> dict[str, str]:
    """Serialize a spec to flat dotted key=value text form.

    The result feeds the manifest and round-trips through build_spec,
    so a manifest alone is enough to reproduce a run.
    """
    flat: dict[str, str] = {
        "kind": spec.kind,
        "name": spec.name,
        "seed": str(spec.seed),
    }
    for key in _PARAM_KEYS:
        flat[key] = _format_value(getattr(spec.params, key))
    if spec.grid is not None:
        flat["grid.x_min"] = repr(spec.grid.x_min)
        flat["grid.x_max"] = repr(spec.grid.x_max)
        flat["grid.nx"] = str(spec.grid.nx)
        flat["grid.nt"] = str(spec.grid.nt)
    if spec.initial_states is not None:
        flat["initial.states"] = _format_value(spec.initial_states)
    if spec.initial_density is not None:
        flat["initial.density"] = _density_to_text(spec.initial_density)
    for key, value in sorted(vars(spec.run).items()):
        if value is None:
            continue
        flat[f"run.{key}"] = _format_value(value)
    return flat


def flat_to_entries(flat: dict[str, str]) -> list[tuple[int, str, str, str]]:
    """Expand dotted flat keys back into parser entries."""
    entries = []
    for lineno, (dotted, value) in enumerate(flat.items(), start=1):
        section, _, key = dotted.rpartition(".")
        entries.append((lineno, section, key, value))
    return entries
