"""Numerical toolkit for a mean-field model of long-run partnerships.

Couples evolve a sentiment state pulled down by a nonlinear strain term
and pushed up by costly effort; the population average feeds back into
each couple's drift and welfare.  The package provides steady-state
analysis, trajectory simulation, open-loop optimal control, the
value/transport PDE pair, and the coupled fixed point, plus a CLI with
a registry of reproducible experiment presets.
"""

__version__ = "0.1.0"

from .errors import BlowUpError, ConfigError, NumericsError
from .model import (
    EffortFloor,
    ModelParams,
    cost,
    cost_prime,
    drift,
    h_eval,
    h_prime,
    legendre,
    legendre_prime,
    mean_field_shift,
    terminal_effort,
    terminal_payoff,
    terminal_payoff_prime,
    well_being,
    well_being_prime,
)
from .simulate import (
    SteadyStateReport,
    TrajectoryEnsemble,
    find_steady_states,
    payoff_along,
    simulate_ensemble,
)
from .hjb import (
    Grid,
    HjbResidualReport,
    Policy,
    ValueField,
    extract_policy,
    solve_hjb,
    value_gradient,
    value_gradient_check,
)
from .fpk import (
    Density,
    DensityStats,
    density_stats,
    make_initial_density,
    propagate_density,
    solve_fpk,
)
from .pmp import (
    OpenLoopSolution,
    effort_ode_residual,
    solve_pmp_deterministic,
    solve_pmp_stochastic,
)
from .mfg import (
    ContagionReport,
    MfgSolution,
    Theorem1Report,
    contagion_experiment,
    shifts_from_density,
    solve_mfg,
    theorem1_check,
)
from .config import ExperimentSpec, RunOptions, load_config, spec_to_flat
from .output import RunManifest, Table, export_csv, read_manifest, write_manifest
from .runner import (
    coarsen_spec,
    execute_spec,
    registry_names,
    registry_specs,
    rerun_manifest,
    run_registry_entry,
    run_spec,
)

__all__ = [
    "BlowUpError",
    "ConfigError",
    "NumericsError",
    "EffortFloor",
    "ModelParams",
    "cost",
    "cost_prime",
    "drift",
    "h_eval",
    "h_prime",
    "legendre",
    "legendre_prime",
    "mean_field_shift",
    "terminal_effort",
    "terminal_payoff",
    "terminal_payoff_prime",
    "well_being",
    "well_being_prime",
    "SteadyStateReport",
    "TrajectoryEnsemble",
    "find_steady_states",
    "payoff_along",
    "simulate_ensemble",
    "Grid",
    "HjbResidualReport",
    "Policy",
    "ValueField",
    "extract_policy",
    "solve_hjb",
    "value_gradient",
    "value_gradient_check",
    "Density",
    "DensityStats",
    "density_stats",
    "make_initial_density",
    "propagate_density",
    "solve_fpk",
    "OpenLoopSolution",
    "effort_ode_residual",
    "solve_pmp_deterministic",
    "solve_pmp_stochastic",
    "ContagionReport",
    "MfgSolution",
    "Theorem1Report",
    "contagion_experiment",
    "shifts_from_density",
    "solve_mfg",
    "theorem1_check",
    "ExperimentSpec",
    "RunOptions",
    "load_config",
    "spec_to_flat",
    "RunManifest",
    "Table",
    "export_csv",
    "read_manifest",
    "write_manifest",
    "coarsen_spec",
    "execute_spec",
    "registry_names",
    "registry_specs",
    "rerun_manifest",
    "run_registry_entry",
    "run_spec",
    "__version__",
]
