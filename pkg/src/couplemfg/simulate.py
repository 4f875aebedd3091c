"""Steady states of the uncontrolled drift and SDE ensemble simulation.

Integration is explicit Euler / Euler-Maruyama on a uniform time grid.
Noise for each path comes from an independent generator spawned from the
master seed, so results are bit-reproducible and do not depend on how
many paths run or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ConfigError
from .model import ModelParams, drift, h_eval, h_prime, well_being, cost

__all__ = [
    "SteadyStateReport",
    "TrajectoryEnsemble",
    "find_steady_states",
    "simulate_ensemble",
    "payoff_along",
]

_STATE_CAP = 1e8  # |x| beyond this is treated as a blown-up integration


@dataclass(frozen=True)
class SteadyStateReport:
    """Rest points of dx/dt = -h(x) with their local stability.

    roots      sorted rest points x*.
    slopes     d(-h)/dx at each root; negative slope means stable.
    stability  "stable" / "unstable" per root (unstable iff slope > 0).
    """

    roots: np.ndarray
    slopes: np.ndarray
    stability: tuple[str, ...]

    def __post_init__(self):
        if len(self.roots) != len(self.slopes) or len(self.roots) != len(self.stability):
            raise ValueError("mismatched report arrays")


def find_steady_states(
    p: ModelParams,
    x_range: tuple[float, float] = (-10.0, 10.0),
    scan_points: int = 4001,
    root_tol: float = 1e-10,
) -> SteadyStateReport:
    """Locate all rest points of the uncontrolled drift on x_range.

    A sign-change scan on a uniform grid brackets each root, bisection
    refines it to root_tol.  With b = c = 1 the structure is: a single
    root at 0 for r >= 1, and three roots (0 unstable, +-x* stable) for
    0 < r < 1.
    """
    lo, hi = float(x_range[0]), float(x_range[1])
    if not lo < hi:
        raise ConfigError(f"x_range must be increasing, got ({lo}, {hi})")
    if root_tol <= 0.0:
        raise ConfigError(f"root_tol must be > 0, got {root_tol}")
    if scan_points < 2:
        raise ConfigError("scan_points must be >= 2")
    xs = np.linspace(lo, hi, int(scan_points))
    fs = -h_eval(p, xs)

    roots: list[float] = []

    def add_root(x0: float) -> None:
        for r0 in roots:
            if abs(r0 - x0) <= 10 * root_tol:
                return
        roots.append(x0)

    for i in range(len(xs) - 1):
        fa, fb = fs[i], fs[i + 1]
        if fa == 0.0:
            add_root(float(xs[i]))
            continue
        if fa * fb < 0.0:
            a_, b_ = float(xs[i]), float(xs[i + 1])
            va, vb = fa, fb
            while b_ - a_ > root_tol:
                m = 0.5 * (a_ + b_)
                vm = -h_eval(p, m)
                if vm == 0.0:
                    a_ = b_ = m
                    break
                if va * vm < 0.0:
                    b_, vb = m, vm
                else:
                    a_, va = m, vm
            add_root(0.5 * (a_ + b_))
    if fs[-1] == 0.0:
        add_root(float(xs[-1]))

    roots_arr = np.array(sorted(roots))
    slopes = -h_prime(p, roots_arr) if len(roots_arr) else np.empty(0)
    labels = tuple("unstable" if s > 0.0 else "stable" for s in np.atleast_1d(slopes))
    return SteadyStateReport(roots=roots_arr, slopes=np.atleast_1d(slopes), stability=labels)


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Simulated paths on a shared uniform time grid.

    times       shape (n_steps+1,)
    states      shape (n_paths, n_steps+1)
    efforts     shape (n_paths, n_steps+1), always >= 0
    seeds       per-path seed records (master seed, path index)
    stop_times  shape (n_paths,); NaN where the path never stopped
    """

    times: np.ndarray
    states: np.ndarray
    efforts: np.ndarray
    seeds: tuple[tuple[int, int], ...]
    stop_times: np.ndarray

    def __post_init__(self):
        if self.states.shape != self.efforts.shape:
            raise ValueError("states and efforts must have identical shape")
        if self.states.shape[1] != len(self.times):
            raise ValueError("time axis mismatch")
        if np.any(self.efforts < 0.0):
            raise ValueError("negative effort recorded in ensemble")


def _effort_for_step(effort, k: int, t: float, x: np.ndarray, n_steps: int) -> np.ndarray:
    """Resolve the effort source to a per-path effort vector at step k."""
    if effort is None:
        return np.zeros_like(x)
    if isinstance(effort, (int, float, np.integer, np.floating)):
        e = float(effort)
        if e < 0.0:
            raise ValueError("constant effort must be >= 0")
        return np.full_like(x, e)
    if isinstance(effort, np.ndarray):
        if effort.ndim != 1 or len(effort) != n_steps + 1:
            raise ValueError(
                f"effort schedule must have length n_steps+1 = {n_steps + 1}, got {effort.shape}"
            )
        if np.any(effort < 0.0):
            raise ValueError("effort schedule must be >= 0")
        return np.full_like(x, float(effort[k]))
    # feedback policy object with an effort_at(t, x) lookup
    e = np.asarray(effort.effort_at(t, x), dtype=float)
    return np.maximum(e, 0.0)


def simulate_ensemble(
    p: ModelParams,
    x0s,
    effort=None,
    dt: float = 0.01,
    n_steps: int | None = None,
    seed: int = 0,
    mf_shift=None,
    stopping: bool = False,
) -> TrajectoryEnsemble:
    """Euler-Maruyama ensemble for dx = (-h(x) + mf_shift + a*e) dt + sigma dB.

    effort: None (zero), a nonnegative scalar (constant), a 1-D array of
    length n_steps+1 (schedule), or a policy object exposing
    effort_at(t, x) (feedback, interpolated).  mf_shift: scalar or array
    of length n_steps+1 added to the drift (0 when omitted).  With
    stopping=True a path freezes at the first grid time where
    x <= x_low - eps and its effort is zeroed afterwards.

    The same seed always reproduces the ensemble bit for bit.
    """
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    n_paths = len(x0s)
    if n_steps is None:
        n_steps = int(round(p.T / dt))
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")

    times = dt * np.arange(n_steps + 1)
    states = np.empty((n_paths, n_steps + 1))
    efforts = np.zeros((n_paths, n_steps + 1))
    states[:, 0] = x0s

    if mf_shift is None:
        shift = np.zeros(n_steps + 1)
    elif isinstance(mf_shift, (int, float, np.integer, np.floating)):
        shift = np.full(n_steps + 1, float(mf_shift))
    else:
        shift = np.asarray(mf_shift, dtype=float)
        if shift.shape != (n_steps + 1,):
            raise ValueError("mf_shift path must have length n_steps+1")

    if p.sigma > 0.0:
        children = np.random.SeedSequence(seed).spawn(n_paths)
        noise = np.stack([np.random.default_rng(c).standard_normal(n_steps) for c in children])
    else:
        noise = None
    seeds = tuple((int(seed), i) for i in range(n_paths))

    stop_level = p.x_low - p.eps
    stop_times = np.full(n_paths, np.nan)
    active = np.ones(n_paths, dtype=bool)
    sqdt = np.sqrt(dt)

    x = states[:, 0].copy()
    if stopping:
        hit = active & (x <= stop_level)
        stop_times[hit] = times[0]
        active &= ~hit

    for k in range(n_steps):
        e = _effort_for_step(effort, k, times[k], x, n_steps)
        if stopping:
            e = np.where(active, e, 0.0)
        efforts[:, k] = e
        dx = drift(p, x, e, shift[k]) * dt
        if noise is not None:
            dx = dx + p.sigma * sqdt * noise[:, k]
        x_new = np.where(active, x + dx, x) if stopping else x + dx
        bad = ~np.isfinite(x_new) | (np.abs(x_new) > _STATE_CAP)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise BlowUpError(f"blow-up: path {i} diverged at step {k + 1}")
        x = x_new
        states[:, k + 1] = x
        if stopping:
            hit = active & (x <= stop_level)
            stop_times[hit] = times[k + 1]
            active &= ~hit

    e_final = _effort_for_step(effort, n_steps, times[-1], x, n_steps)
    if stopping:
        e_final = np.where(active, e_final, 0.0)
    efforts[:, n_steps] = e_final

    return TrajectoryEnsemble(
        times=times, states=states, efforts=efforts, seeds=seeds, stop_times=stop_times
    )


def payoff_along(p: ModelParams, times, states, efforts, mf_bonus=None) -> float:
    """Realized payoff g(x_T) + integral of (well-being - effort cost).

    The running integral uses the trapezoid rule on the given grid, so a
    constant trajectory at x with zero effort and constant terminal
    payoff G returns exactly G + T*(s_bar - 10*exp(-x)).
    """
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    efforts = np.asarray(efforts, dtype=float)
    if not (times.shape == states.shape == efforts.shape):
        raise ValueError("times, states, efforts must share one shape")
    bonus = 0.0 if mf_bonus is None else np.asarray(mf_bonus, dtype=float)
    integrand = well_being(p, states, bonus) - cost(p, efforts)
    from .model import terminal_payoff

    return float(terminal_payoff(p, states[-1]) + np.trapezoid(integrand, times))
