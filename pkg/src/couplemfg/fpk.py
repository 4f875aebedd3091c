"""Forward density transport under a feedback effort policy.

The population density m(t, x) obeys

    m_t + d/dx[ (-(h(x) - h2) + a e(t,x)) m ] - (sigma^2/2) m_xx = 0

with zero total flux through both boundaries.  One implicit step per
time level: the advective flux upwinds on cell-edge velocities (edge
velocity = mean of the two adjacent node velocities; an exactly zero
edge velocity averages the neighbor densities, which leaves the flux
zero), diffusion uses the conservative three-point stencil, and both are
assembled into a single tridiagonal M-matrix solve.  Column sums of the
step matrix are exactly one, so the discrete mass is conserved to solver
roundoff and the density can never go negative.

Densities are carried as positive measures; nothing renormalizes them
after time zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, NumericsError
from .hjb import Grid, Policy
from .model import ModelParams, h_eval

__all__ = [
    "Density",
    "DensityStats",
    "make_initial_density",
    "solve_fpk",
    "propagate_density",
    "density_stats",
]

_MASS_RTOL = 1e-6
_NEG_TOL = -1e-12


@dataclass(frozen=True)
class Density:
    """Density surface m[time, space] >= 0 on a grid.

    normalized records whether the initial slice was scaled to unit
    trapezoid mass; later slices keep whatever mass transport leaves.
    """

    grid: Grid
    m: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        if self.m.shape != (self.grid.nt, self.grid.nx):
            raise ValueError(f"density array must have shape (nt, nx), got {self.m.shape}")
        if np.any(self.m < 0.0):
            raise ValueError("density must be nonnegative")

    def mass(self, k: int) -> float:
        return float(np.trapezoid(self.m[k], self.grid.x_nodes))


def make_initial_density(
    grid: Grid,
    components: Sequence[tuple[float, float, float]] | tuple[float, float],
    normalize: bool = True,
) -> np.ndarray:
    """Gaussian or Gaussian-mixture initial slice sampled on the grid.

    components: either a single (center, std) pair or a sequence of
    (weight, center, std) triples.  The slice is renormalized to unit
    trapezoid mass unless normalize=False.  Raises ConfigError when the
    grid captures less than 1e-6 of the nominal mass.
    """
    if len(components) == 2 and not isinstance(components[0], (tuple, list, np.ndarray)):
        components = [(1.0, float(components[0]), float(components[1]))]
    x = grid.x_nodes
    m = np.zeros_like(x)
    for w, center, std in components:
        w, center, std = float(w), float(center), float(std)
        if w <= 0.0:
            raise ConfigError(f"mixture weight must be > 0, got {w}")
        if std <= 0.0:
            raise ConfigError(f"mixture std must be > 0, got {std}")
        z = (x - center) / std
        m = m + w * np.exp(-0.5 * z * z) / (std * np.sqrt(2.0 * np.pi))
    mass = float(np.trapezoid(m, x))
    if mass < 1e-6:
        raise ConfigError(
            f"density support negligible on grid: pre-normalization mass {mass:.3e}"
        )
    return m / mass if normalize else m


def _step_matrix(w_edge: np.ndarray, sigma: float, dx: float, dt: float) -> np.ndarray:
    """Banded (I + dt * divergence) matrix for one implicit step.

    w_edge: nx-1 edge velocities.  Columns sum to exactly 1.
    """
    nx = len(w_edge) + 1
    wp = np.maximum(w_edge, 0.0)
    wm = np.minimum(w_edge, 0.0)
    r = dt / dx
    sdiff = 0.5 * sigma * sigma * dt / (dx * dx)

    diag = np.ones(nx)
    diag[:-1] += r * wp  # outflow through the right edge of node i
    diag[1:] += -r * wm  # outflow through the left edge of node i
    lower = np.zeros(nx)  # coefficient on m_{i-1} in row i
    lower[1:] = -r * wp
    upper = np.zeros(nx)  # coefficient on m_{i+1} in row i
    upper[:-1] = r * wm

    # conservative diffusion with zero boundary flux
    diag[0] += sdiff
    diag[-1] += sdiff
    diag[1:-1] += 2.0 * sdiff
    lower[1:] -= sdiff
    upper[:-1] -= sdiff

    band = np.zeros((3, nx))
    band[1] = diag
    band[0, 1:] = upper[:-1]
    band[2, :-1] = lower[1:]
    return band


def propagate_density(
    grid: Grid,
    m0: np.ndarray,
    node_velocity,
    sigma: float,
) -> np.ndarray:
    """March an initial slice forward under a node-velocity field.

    node_velocity: array (nt, nx) or a callable k -> array (nx,) giving
    the advection velocity at time level k.  Returns the (nt, nx)
    density history.  Raises NumericsError on mass drift beyond 1e-6
    relative or densities below -1e-12.
    """
    m0 = np.asarray(m0, dtype=float)
    if m0.shape != (grid.nx,):
        raise ConfigError("initial density slice must match the grid")
    if np.any(m0 < 0.0):
        raise ConfigError("initial density must be nonnegative")
    dx, dt = grid.dx, grid.dt

    out = np.empty((grid.nt, grid.nx))
    out[0] = m0
    mass0 = float(np.sum(m0))
    m = m0.copy()
    for k in range(grid.nt - 1):
        u = node_velocity(k) if callable(node_velocity) else node_velocity[k]
        w_edge = 0.5 * (u[:-1] + u[1:])
        band = _step_matrix(w_edge, sigma, dx, dt)
        m = solve_banded((1, 1), band, m)
        if not np.all(np.isfinite(m)):
            raise NumericsError(f"density blow-up at time index {k + 1}")
        lowest = float(np.min(m))
        if lowest < _NEG_TOL:
            raise NumericsError(
                f"negative density {lowest:.3e} at time index {k + 1}"
            )
        np.maximum(m, 0.0, out=m)  # clear solver roundoff at the -1e-12 scale
        if mass0 > 0.0:
            drift_rel = abs(float(np.sum(m)) - mass0) / mass0
            if drift_rel > _MASS_RTOL:
                raise NumericsError(
                    f"mass drift {drift_rel:.3e} at time index {k + 1} exceeds {_MASS_RTOL}"
                )
        out[k + 1] = m
    return out


def solve_fpk(
    p: ModelParams,
    policy: Policy,
    m0: np.ndarray | Density,
    mf: tuple[np.ndarray, np.ndarray] | None = None,
    normalized: bool | None = None,
) -> Density:
    """Transport m0 forward under the policy's effort field.

    mf optionally supplies frozen interaction paths (h2(t), s2(t)); only
    the drift shift h2 enters the transport.  m0 may be a slice array or
    a Density, whose initial slice is used.
    """
    grid = policy.grid
    if isinstance(m0, Density):
        norm_flag = m0.normalized
        m0 = m0.m[0]
    else:
        norm_flag = bool(normalized) if normalized is not None else True
    if mf is None:
        h2_path = np.zeros(grid.nt)
    else:
        h2_path = np.asarray(mf[0], dtype=float)
        if h2_path.shape != (grid.nt,):
            raise ConfigError("interaction shift path must have length nt")

    base = -h_eval(p, grid.x_nodes)

    def node_velocity(k: int) -> np.ndarray:
        return base + h2_path[k] + p.a * policy.e[k]

    m = propagate_density(grid, np.asarray(m0, dtype=float), node_velocity, p.sigma)
    return Density(grid=grid, m=m, normalized=norm_flag)


@dataclass(frozen=True)
class DensityStats:
    """Trapezoid moments of one density slice."""

    mean: float
    variance: float
    mass: float
    mass_below: float


def density_stats(d: Density, k: int, x_low: float = 0.0) -> DensityStats:
    """Mean, variance, total mass and mass below x_low of slice k."""
    x = d.grid.x_nodes
    m = d.m[k]
    mass = float(np.trapezoid(m, x))
    if mass <= 0.0:
        raise NumericsError("cannot compute moments of a zero-mass slice")
    mean = float(np.trapezoid(x * m, x)) / mass
    var = float(np.trapezoid((x - mean) ** 2 * m, x)) / mass
    below = x <= x_low
    mass_below = float(np.trapezoid(m[below], x[below])) if np.count_nonzero(below) >= 2 else 0.0
    return DensityStats(mean=mean, variance=var, mass=mass, mass_below=mass_below)
