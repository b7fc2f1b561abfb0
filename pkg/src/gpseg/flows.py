"""Normalized gradient flows for the coupled energy and its segregated limit.

The coupled flow is stepped IMEX style (implicit diffusion, explicit reaction
and multipliers), followed by a clamp to the nonnegative cone and a rescale to
unit mass.  The limit flow is explicit Euler on the H1 gradient of J*, with the
two sign parts rescaled separately.  Both drivers backtrack the step until
the energy decrease is a fixed fraction of the continuum dissipation rate, so
accepted energies never go up.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .discretization import Grid
from .functionals import (
    Multipliers,
    StatePair,
    TildeMultipliers,
    energy_beta,
    energy_drop_beta,
    energy_drop_star,
    energy_star,
    gradient_beta,
    gradient_infty,
    multipliers,
    negative_part,
    positive_part,
    tilde_multipliers,
)

TRACE_COLUMNS = ("step", "time", "dt", "energy", "residual", "lambda", "mu", "mass_drift", "min_value")


class FlowCollapseError(RuntimeError):
    """A component (or sign part) vanished identically and cannot be rescaled."""


class StepperError(RuntimeError):
    """The step size fell below ``dt_min`` without an acceptable step."""


@dataclass(frozen=True)
class FlowConfig:
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    residual_tol: float = 1e-6
    max_steps: int = 500_000
    backtrack_factor: float = 0.5
    dt_max: float = 1e-3
    growth: float = 1.25
    energy_tol: float = 1e-13
    dt_init_infty: float = 0.05
    dt_max_infty: float = 0.5
    positivity_factor: float = 0.5
    dissipation_fraction: float = 0.85
    dissipation_floor: float = 1e-10

    def __post_init__(self) -> None:
        if not 0 < self.dt_min <= self.dt_init:
            raise ValueError("need 0 < dt_min <= dt_init")
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.dt_max < self.dt_init or self.dt_max_infty < self.dt_init_infty:
            raise ValueError("dt_max must be >= dt_init")
        if self.growth < 1:
            raise ValueError("growth must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if not 0 <= self.dissipation_fraction < 1:
            raise ValueError("dissipation_fraction must lie in [0, 1)")
        if not 0 < self.positivity_factor <= 1:
            raise ValueError("positivity_factor must lie in (0, 1]")


@dataclass
class FlowTrace:
    """Per accepted step: time, step size, energy, residual and bookkeeping.

    Row 0 is the initial state.  ``drop[i]`` is the energy decrease of step
    ``i`` computed without cancellation, and ``clamp[i]`` the largest negative
    value removed by the positivity clamp.  ``states`` is filled only when the
    driver was asked to keep them.
    """

    time: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    mass_drift: list = field(default_factory=list)
    min_value: list = field(default_factory=list)
    drop: list = field(default_factory=list)
    clamp: list = field(default_factory=list)
    states: list = field(default_factory=list)
    state_steps: list = field(default_factory=list)
    rejected: int = 0
    converged: bool = False

    def __len__(self) -> int:
        return len(self.time)

    def record(self, time, dt, energy, residual, lam, mu, mass_drift, min_value, drop, clamp):
        self.time.append(time)
        self.dt.append(dt)
        self.energy.append(energy)
        self.residual.append(residual)
        self.lam.append(lam)
        self.mu.append(mu)
        self.mass_drift.append(mass_drift)
        self.min_value.append(min_value)
        self.drop.append(drop)
        self.clamp.append(clamp)

    def energy_gap(self, i: int, j: int) -> float:
        """Energy decrease from row ``i`` to row ``j``, summed without cancellation."""
        return math.fsum(self.drop[i + 1:j + 1])

    @property
    def final_time(self) -> float:
        return self.time[-1]

    def rows(self):
        for i in range(len(self)):
            yield (i, self.time[i], self.dt[i], self.energy[i], self.residual[i], self.lam[i],
                   self.mu[i], self.mass_drift[i], self.min_value[i])

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in self.rows():
            writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        return buf.getvalue()


# Coupled flow

def _imex_component(grid: Grid, a, b, beta, lam, dt):
    rhs = a - dt * (a * (a * a) + beta * a * (b * b) - lam * a)
    return grid.solve_shifted(rhs, shift=1.0, scale=dt)


def _rescale(grid: Grid, f: np.ndarray, name: str):
    mass2 = grid.inner(f, f)
    if mass2 <= 0.0 or not np.isfinite(mass2):
        raise FlowCollapseError(f"{name} vanished during the step")
    return f / math.sqrt(mass2), mass2 - 1.0


def step_beta_info(s: StatePair, beta: float, dt: float, mult: Multipliers | None = None):
    """One IMEX step; returns ``(new_state, mass_drift, clamp)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = s.grid
    if mult is None:
        mult = multipliers(s, beta)
    U = _imex_component(g, s.u, s.v, beta, mult.lam, dt)
    V = _imex_component(g, s.v, s.u, beta, mult.mu, dt)
    clamp = max(0.0, -float(U.min()), -float(V.min()))
    U, du = _rescale(g, positive_part(U), "u")
    V, dv = _rescale(g, positive_part(V), "v")
    drift = du if abs(du) >= abs(dv) else dv
    return StatePair(g, U, V), drift, clamp


def step_beta(s: StatePair, beta: float, dt: float) -> StatePair:
    return step_beta_info(s, beta, dt)[0]


def positivity_dt(s: StatePair, beta: float, factor: float = 1.0) -> float:
    """Largest step keeping the explicit right-hand side nonnegative, times ``factor``.

    Under ``dt * (u^2 + beta v^2) <= 1`` (and symmetrically) the explicit
    reaction cannot change sign, and the implicit diffusion solve is an
    M-matrix inverse, so the step maps nonnegative states to nonnegative
    states without any clamping.
    """
    u2, v2 = s.u * s.u, s.v * s.v
    stiff = max(float(np.max(u2 + beta * v2)), float(np.max(v2 + beta * u2)))
    return math.inf if stiff == 0.0 else factor / stiff


def _state_residual(s: StatePair, beta: float):
    mult = multipliers(s, beta)
    gu, gv = gradient_beta(s, beta, mult)
    return mult, math.sqrt(s.grid.inner(gu, gu) + s.grid.inner(gv, gv))


def _drive(state, evaluate, step, drop_fn, dt_bound, dt0, dt_max, cfg: FlowConfig, time_budget,
           stop_on_residual, keep_every, label):
    """Shared adaptive loop.

    ``evaluate(state) -> (mult, residual, energy, min_value)``,
    ``step(state, dt, mult) -> (new, drift, clamp)``.  A trial step is
    accepted when the energy does not increase and, whenever the predicted
    decrease ``dt * residual**2`` is above ``cfg.dissipation_floor``, the
    actual decrease is at least ``cfg.dissipation_fraction`` of it.
    Otherwise ``dt`` is cut by ``cfg.backtrack_factor``.
    """
    trace = FlowTrace()
    mult, res, energy, vmin = evaluate(state)
    trace.record(0.0, 0.0, energy, res, mult.lam, mult.mu, 0.0, vmin, 0.0, 0.0)
    _keep(trace, keep_every, 0, state)
    t, dt, steps = 0.0, dt0, 0
    while steps < cfg.max_steps:
        if stop_on_residual and res < cfg.residual_tol:
            break
        remaining = time_budget - t
        if remaining <= 0:
            break
        bound = dt_bound(state)
        dt_try = min(dt, remaining, bound)
        truncated = dt_try == remaining and remaining < min(dt, bound)
        while True:
            new, drift, clamp = step(state, dt_try, mult)
            drop = drop_fn(state, new)
            predicted = dt_try * res * res
            if drop >= -cfg.energy_tol and (
                    predicted < cfg.dissipation_floor or drop >= cfg.dissipation_fraction * predicted):
                break
            trace.rejected += 1
            dt_try *= cfg.backtrack_factor
            truncated = False
            if dt_try < cfg.dt_min:
                raise StepperError(f"dt fell below {cfg.dt_min:g} at t={t:.6g} ({label})")
        state = new
        t += dt_try
        steps += 1
        if not truncated:
            dt = min(max(dt_try, min(dt, bound)) * cfg.growth, dt_max)
        mult, res, energy, vmin = evaluate(state)
        trace.record(t, dt_try, energy, res, mult.lam, mult.mu, drift, vmin, drop, clamp)
        _keep(trace, keep_every, steps, state)
    trace.converged = res < cfg.residual_tol
    if keep_every and trace.state_steps[-1] != steps:
        trace.states.append(state)
        trace.state_steps.append(steps)
    return state, trace


def _keep(trace: FlowTrace, keep_every: int, step: int, state) -> None:
    if keep_every and step % keep_every == 0:
        trace.states.append(state)
        trace.state_steps.append(step)


def relax_beta(s: StatePair, beta: float, cfg: FlowConfig = FlowConfig(), time_budget: float = math.inf,
               stop_on_residual: bool = True, keep_every: int = 0):
    """Run the coupled flow until stationarity, the time budget, or ``max_steps``.

    Returns the final state and its :class:`FlowTrace`.  With a finite
    ``time_budget`` and ``stop_on_residual=False`` this is the unit-time
    deformation used by the minimax driver.
    """

    def evaluate(state):
        mult, res = _state_residual(state, beta)
        return mult, res, energy_beta(state, beta), float(min(state.u.min(), state.v.min()))

    return _drive(
        s, evaluate,
        lambda state, dt, mult: step_beta_info(state, beta, dt, mult),
        lambda a, b: energy_drop_beta(a, b, beta),
        lambda state: positivity_dt(state, beta, cfg.positivity_factor),
        cfg.dt_init, cfg.dt_max, cfg, time_budget, stop_on_residual, keep_every, f"beta={beta:g}")


# Limit flow

def step_infty_info(grid: Grid, w: np.ndarray, dt: float, tm: TildeMultipliers | None = None):
    """Explicit Euler step of the limit flow; returns ``(new_w, mass_drift)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    W = w - dt * gradient_infty(grid, w, tm)
    P, dp = _rescale(grid, positive_part(W), "w+")
    M, dm = _rescale(grid, negative_part(W), "w-")
    return P - M, (dp if abs(dp) >= abs(dm) else dm)


def step_infty(grid: Grid, w: np.ndarray, dt: float) -> np.ndarray:
    return step_infty_info(grid, w, dt)[0]


def _signed_residual(grid: Grid, w: np.ndarray):
    tm = tilde_multipliers(grid, w)
    return tm, grid.h1_norm(gradient_infty(grid, w, tm))


def relax_infty(grid: Grid, w: np.ndarray, cfg: FlowConfig = FlowConfig(), time_budget: float = math.inf,
                stop_on_residual: bool = True, keep_every: int = 0):
    """Run the limit flow; the residual is the H1 norm of the limit gradient."""

    def evaluate(state):
        tm, res = _signed_residual(grid, state)
        return tm, res, energy_star(grid, state), float(state.min())

    def step(state, dt, tm):
        new, drift = step_infty_info(grid, state, dt, tm)
        return new, drift, 0.0

    return _drive(
        w, evaluate, step,
        lambda a, b: energy_drop_star(grid, a, b),
        lambda state: math.inf,
        cfg.dt_init_infty, cfg.dt_max_infty, cfg, time_budget, stop_on_residual, keep_every, "limit flow")


def signed_to_pair(grid: Grid, w: np.ndarray) -> StatePair:
    return StatePair(grid, positive_part(w), negative_part(w))
