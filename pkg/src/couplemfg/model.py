"""Model primitives for the controlled feeling-state dynamics.

The state x(t) of a couple decays through a restoring function
h(x) = r*x - b*tanh(c*x) and is sustained by a nonnegative effort e with
quadratic cost.  Instantaneous well-being saturates as s(x) = s_bar -
10*exp(-x).  A society-level interaction enters as an additive drift
shift h2 and a well-being bonus s2, both derived from the population
density.

All functions accept scalars or numpy arrays for the state argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ModelParams",
    "EffortFloor",
    "h_eval",
    "h_prime",
    "drift",
    "well_being",
    "well_being_prime",
    "cost",
    "cost_prime",
    "cost_second",
    "legendre",
    "legendre_prime",
    "terminal_payoff",
    "terminal_payoff_prime",
    "terminal_effort",
    "mean_field_shift",
    "effort_floor",
]

_G_MODES = ("linear", "constant")


@dataclass(frozen=True)
class ModelParams:
    """Parameter set for one experiment.

    r        relative decay rate (> 0); r >= 1 gives a single rest point,
             0 < r < 1 gives two symmetric nonzero rest points.
    a        effort efficiency (> 0).
    b, c     gain and slope of the tanh reinforcement term (> 0).
    sigma    diffusion coefficient (>= 0).
    s_bar    well-being ceiling (>= 10 so that s(0) >= 0).
    gamma    slope of the linear terminal payoff (used when g_mode="linear").
    g_mode   "linear" (g(x) = gamma*x) or "constant" (g identically 0).
    T        horizon (> 0).
    kappa_h  drift-coupling gain: h2 = kappa_h * mean(m).
    kappa_s  well-being-coupling gain: s2 = kappa_s * mean(m).
    x_low    separation threshold for optional stopping.
    eps      stopping margin (> 0); a path stops when x <= x_low - eps.
    """

    r: float = 0.5
    a: float = 10.0
    b: float = 1.0
    c: float = 1.0
    sigma: float = 0.0
    s_bar: float = 10.0
    gamma: float = 0.0
    g_mode: str = "constant"
    T: float = 10.0
    kappa_h: float = 0.0
    kappa_s: float = 0.0
    x_low: float = 0.0
    eps: float = 0.1

    def __post_init__(self) -> None:
        for name in ("r", "a", "b", "c", "T"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.s_bar < 10.0:
            raise ValueError(f"s_bar must be >= 10, got {self.s_bar}")
        if self.g_mode not in _G_MODES:
            raise ValueError(f"g_mode must be one of {_G_MODES}, got {self.g_mode!r}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be > 0, got {self.eps}")

    def with_(self, **changes) -> "ModelParams":
        """Return a copy with the given fields replaced."""
        return replace(self, **changes)


@dataclass(frozen=True)
class EffortFloor:
    """Lower bound of admissible effort.

    For the quadratic cost the marginal cost vanishes at zero, so the
    floor is exactly 0 and optimal effort can touch but never cross it.
    """

    e_floor: float = 0.0

    def __post_init__(self) -> None:
        if abs(cost_prime(None, self.e_floor)) > 1e-15:
            raise ValueError("effort floor must be a zero of the marginal cost")


def effort_floor(p: ModelParams | None = None) -> EffortFloor:
    """Effort floor implied by the cost; independent of the parameters."""
    return EffortFloor(0.0)


def h_eval(p: ModelParams, x):
    """Restoring function h(x) = r*x - b*tanh(c*x)."""
    x = np.asarray(x, dtype=float)
    out = p.r * x - p.b * np.tanh(p.c * x)
    return out if out.ndim else float(out)


def h_prime(p: ModelParams, x):
    """Derivative h'(x) = r - b*c*(1 - tanh(c*x)^2)."""
    x = np.asarray(x, dtype=float)
    t = np.tanh(p.c * x)
    out = p.r - p.b * p.c * (1.0 - t * t)
    return out if out.ndim else float(out)


def drift(p: ModelParams, x, e, mf_shift=0.0):
    """State drift -h(x) + mf_shift + a*e.  Effort must be >= 0."""
    e_arr = np.asarray(e, dtype=float)
    if np.any(e_arr < 0.0):
        raise ValueError("effort must be >= 0")
    x = np.asarray(x, dtype=float)
    out = -(p.r * x - p.b * np.tanh(p.c * x)) + mf_shift + p.a * e_arr
    return out if out.ndim else float(out)


def well_being(p: ModelParams, x, mf_bonus=0.0):
    """Saturating well-being s(x) = s_bar - 10*exp(-x), plus any bonus."""
    x = np.asarray(x, dtype=float)
    out = p.s_bar - 10.0 * np.exp(-x) + mf_bonus
    return out if out.ndim else float(out)


def well_being_prime(p: ModelParams, x):
    """s'(x) = 10*exp(-x) (> 0: well-being never decreases in x)."""
    x = np.asarray(x, dtype=float)
    out = 10.0 * np.exp(-x)
    return out if out.ndim else float(out)


def cost(p: ModelParams, e):
    """Effort cost e^2 / 2 on e >= 0."""
    e_arr = np.asarray(e, dtype=float)
    if np.any(e_arr < 0.0):
        raise ValueError("effort must be >= 0")
    out = 0.5 * e_arr * e_arr
    return out if out.ndim else float(out)


def cost_prime(p: ModelParams | None, e):
    """Marginal cost c'(e) = e on e >= 0."""
    e_arr = np.asarray(e, dtype=float)
    if np.any(e_arr < 0.0):
        raise ValueError("effort must be >= 0")
    return e_arr if e_arr.ndim else float(e_arr)


def cost_second(p: ModelParams | None, e):
    """c''(e) = 1 (strictly convex quadratic cost)."""
    e_arr = np.asarray(e, dtype=float)
    if np.any(e_arr < 0.0):
        raise ValueError("effort must be >= 0")
    out = np.ones_like(e_arr)
    return out if out.ndim else float(out)


def legendre(p: ModelParams | None, z):
    """Convex conjugate of the cost over e >= 0: max_e (z*e - e^2/2).

    The constraint clips the unconstrained conjugate z^2/2 at zero, so
    the transform is max(0, z)^2 / 2.
    """
    z = np.asarray(z, dtype=float)
    zp = np.maximum(z, 0.0)
    out = 0.5 * zp * zp
    return out if out.ndim else float(out)


def legendre_prime(p: ModelParams | None, z):
    """Maximizer of the conjugate: max(0, z)."""
    z = np.asarray(z, dtype=float)
    out = np.maximum(z, 0.0)
    return out if out.ndim else float(out)


def terminal_payoff(p: ModelParams, x):
    """Terminal payoff g(x): gamma*x in linear mode, 0 in constant mode."""
    x = np.asarray(x, dtype=float)
    out = p.gamma * x if p.g_mode == "linear" else np.zeros_like(x)
    return out if out.ndim else float(out)


def terminal_payoff_prime(p: ModelParams, x):
    """g'(x): gamma in linear mode, 0 in constant mode."""
    x = np.asarray(x, dtype=float)
    slope = p.gamma if p.g_mode == "linear" else 0.0
    out = np.full_like(x, slope)
    return out if out.ndim else float(out)


def terminal_effort(p: ModelParams) -> float:
    """Optimal effort at the horizon: max(0, a*g').

    Constant terminal payoff gives exactly zero terminal effort.
    """
    if p.g_mode == "linear":
        return max(0.0, p.a * p.gamma)
    return 0.0


def mean_field_shift(p: ModelParams, x_nodes, m_slice) -> tuple[float, float]:
    """Interaction terms (h2, s2) from one density slice.

    Both couplings are proportional to the population mean state:
    h2 = kappa_h * mean, s2 = kappa_s * mean.  The mean is taken with
    trapezoid weights after normalizing the slice, so unnormalized
    positive measures are accepted.
    """
    x_nodes = np.asarray(x_nodes, dtype=float)
    m_slice = np.asarray(m_slice, dtype=float)
    mass = np.trapezoid(m_slice, x_nodes)
    if not np.isfinite(mass) or mass <= 1e-300:
        raise ValueError("degenerate mean field: density slice has zero mass")
    mean = np.trapezoid(x_nodes * m_slice, x_nodes) / mass
    return p.kappa_h * mean, p.kappa_s * mean
