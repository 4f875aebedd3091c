"""Open-loop optimal control of a single couple.

Deterministic case: the first-order conditions couple the state to a
costate p through

    dx/dt = -h(x) + a e,        e = max(0, a p),
    dp/dt = p h'(x) - s'(x),    p(T) = g'(x(T)),

solved by a forward-backward sweep: integrate x forward under the
current costate, re-integrate p backward, relax, repeat.  The relaxation
weight starts at 0.5 and halves whenever the sweep gap grows, which
keeps the strongly coupled instances (large a) contracting.

Stochastic case: the costate is represented through the value surface,
p(t) = v_x(t, x(t)) and q(t) = sigma * v_xx(t, x(t)), sampled along an
Euler-Maruyama path of the optimally controlled state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ConfigError, NumericsError
from .hjb import ValueField, value_gradient, _bilinear
from .model import (
    ModelParams,
    h_eval,
    h_prime,
    terminal_payoff_prime,
    well_being_prime,
)

__all__ = [
    "OpenLoopSolution",
    "solve_pmp_deterministic",
    "solve_pmp_stochastic",
    "effort_ode_residual",
]

_STATE_CAP = 1e8


@dataclass(frozen=True)
class OpenLoopSolution:
    """State, costate and effort paths on a uniform time grid.

    efforts is exactly max(0, effort_gain * costates) at every node
    (checked at construction).  q is the noise loading sigma * v_xx in
    the stochastic case, None otherwise.
    """

    times: np.ndarray
    states: np.ndarray
    costates: np.ndarray
    efforts: np.ndarray
    converged: bool
    residual: float
    iterations: int
    effort_gain: float
    q: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.times)
        for name in ("states", "costates", "efforts"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match times")
        expected = np.maximum(0.0, self.effort_gain * self.costates)
        if not np.array_equal(self.efforts, expected):
            raise ValueError("efforts must equal max(0, a * costates) exactly")


def _forward_state(p: ModelParams, x0: float, efforts: np.ndarray, dt: float) -> np.ndarray:
    """Euler integration of dx = (-h(x) + a e) dt."""
    x = np.empty_like(efforts)
    x[0] = x0
    for k in range(len(efforts) - 1):
        x[k + 1] = x[k] + dt * (-h_eval(p, x[k]) + p.a * efforts[k])
        if not np.isfinite(x[k + 1]) or abs(x[k + 1]) > _STATE_CAP:
            raise BlowUpError(f"blow-up: open-loop state diverged at step {k + 1}")
    return x


def _backward_costate(p: ModelParams, states: np.ndarray, dt: float) -> np.ndarray:
    """Euler integration of dp = (p h'(x) - s'(x)) dt from p(T) = g'(x_T)."""
    n = len(states) - 1
    out = np.empty_like(states)
    out[n] = terminal_payoff_prime(p, states[n])
    hp = h_prime(p, states)
    sp = well_being_prime(p, states)
    for k in range(n - 1, -1, -1):
        out[k] = out[k + 1] - dt * (out[k + 1] * hp[k + 1] - sp[k + 1])
    return out


def solve_pmp_deterministic(
    p: ModelParams,
    x0: float,
    dt: float = 0.005,
    max_iters: int = 300,
    tol: float = 1e-8,
    relax: float = 0.5,
) -> OpenLoopSolution:
    """Forward-backward sweep for the deterministic open-loop problem.

    Requires x0 > x_low + eps (the problem starts above the separation
    region).  Non-convergence returns converged=False with the last
    sweep gap as residual; the caller decides whether to accept.
    """
    if not x0 > p.x_low + p.eps:
        raise ConfigError(
            f"x0 must exceed x_low + eps = {p.x_low + p.eps}, got {x0}"
        )
    if dt <= 0.0:
        raise ConfigError("dt must be > 0")
    n = int(round(p.T / dt))
    times = dt * np.arange(n + 1)

    costate = np.zeros(n + 1)
    gap_prev = np.inf
    gap = np.inf
    omega = relax
    iterations = 0
    converged = False
    for iterations in range(1, max_iters + 1):
        efforts = np.maximum(0.0, p.a * costate)
        states = _forward_state(p, x0, efforts, dt)
        costate_new = _backward_costate(p, states, dt)
        gap = float(np.max(np.abs(costate_new - costate)))
        if gap <= tol:
            costate = costate_new
            converged = True
            break
        if gap > gap_prev and omega > 1.0 / 64.0:
            omega *= 0.5  # sweep started oscillating: damp harder
        costate = (1.0 - omega) * costate + omega * costate_new
        gap_prev = gap

    efforts = np.maximum(0.0, p.a * costate)
    states = _forward_state(p, x0, efforts, dt)
    return OpenLoopSolution(
        times=times,
        states=states,
        costates=costate,
        efforts=efforts,
        converged=converged,
        residual=gap,
        iterations=iterations,
        effort_gain=p.a,
    )


def solve_pmp_stochastic(
    p: ModelParams,
    x0: float,
    v: ValueField,
    dt: float = 0.005,
    seed: int = 0,
) -> OpenLoopSolution:
    """Sample the optimally controlled SDE with costates read from v.

    p(t) = v_x(t, x(t)) and q(t) = sigma * v_xx(t, x(t)) via bilinear
    interpolation of the precomputed difference fields.  Raises a
    numerical error if the path escapes the value grid.
    """
    grid = v.grid
    if not x0 > p.x_low + p.eps:
        raise ConfigError(
            f"x0 must exceed x_low + eps = {p.x_low + p.eps}, got {x0}"
        )
    if abs(p.T - grid.t_final) > 1e-12 * max(1.0, p.T):
        raise ConfigError("horizon mismatch between params and value grid")
    vx_field = value_gradient(v)
    dx = grid.dx
    vxx_field = np.empty_like(v.v)
    vxx_field[:, 1:-1] = (v.v[:, 2:] - 2.0 * v.v[:, 1:-1] + v.v[:, :-2]) / (dx * dx)
    vxx_field[:, 0] = vxx_field[:, 1]
    vxx_field[:, -1] = vxx_field[:, -2]

    n = int(round(p.T / dt))
    times = dt * np.arange(n + 1)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    noise = rng.standard_normal(n)
    sqdt = np.sqrt(dt)

    states = np.empty(n + 1)
    costates = np.empty(n + 1)
    qs = np.empty(n + 1)
    states[0] = x0
    for k in range(n + 1):
        xk = states[k]
        if xk < grid.x_min or xk > grid.x_max:
            raise NumericsError(
                f"grid escape: state {xk:.4g} left [{grid.x_min}, {grid.x_max}] "
                f"at t={times[k]:.4g}"
            )
        costates[k] = _bilinear(grid, vx_field, times[k], xk)
        qs[k] = p.sigma * _bilinear(grid, vxx_field, times[k], xk)
        if k == n:
            break
        e = max(0.0, p.a * costates[k])
        step = dt * (-h_eval(p, xk) + p.a * e) + p.sigma * sqdt * noise[k]
        states[k + 1] = xk + step
        if not np.isfinite(states[k + 1]):
            raise BlowUpError(f"blow-up: stochastic open-loop path at step {k + 1}")

    efforts = np.maximum(0.0, p.a * costates)
    return OpenLoopSolution(
        times=times,
        states=states,
        costates=costates,
        efforts=efforts,
        converged=True,
        residual=0.0,
        iterations=1,
        effort_gain=p.a,
        q=qs,
    )


def effort_ode_residual(p: ModelParams, sol: OpenLoopSolution) -> float:
    """Defect of the effort path against its interior evolution law.

    Wherever effort is strictly positive, de/dt = e h'(x) - a s'(x)
    along an optimal trajectory; on the clamped set the derivative is
    zero and contributes nothing.  Central differences in time; returns
    the max absolute defect (O(dt) for a converged solution).
    """
    e = sol.efforts
    x = sol.states
    dt = float(sol.times[1] - sol.times[0])
    if len(e) < 3:
        return 0.0
    de = (e[2:] - e[:-2]) / (2.0 * dt)
    rhs = e[1:-1] * h_prime(p, x[1:-1]) - p.a * well_being_prime(p, x[1:-1])
    active = e[1:-1] > 0.0
    if not np.any(active):
        return 0.0
    return float(np.max(np.abs(de[active] - rhs[active])))
