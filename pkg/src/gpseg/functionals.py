"""Energies, Lagrange multipliers and constrained gradients.

The coupled energy on pairs (u, v) of unit-mass nonnegative fields is

    J_beta(u, v) = 1/2 (|grad u|^2 + |grad v|^2) + 1/4 int(u^4 + v^4) + beta/2 int u^2 v^2

and the segregated limit is the scalar energy J*(w) = 1/2 |grad w|^2 + 1/4 int w^4
on fields whose positive and negative parts both carry unit mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretization import Grid

MASS_TOL = 1e-10
SEG_TOL = 1e-12
DET_FLOOR = 1e-14


class DegenerateStateError(ValueError):
    """The two-by-two multiplier system is singular (a sign part has no mass)."""


@dataclass(frozen=True)
class StatePair:
    grid: Grid
    u: np.ndarray
    v: np.ndarray

    def swapped(self) -> StatePair:
        return StatePair(self.grid, self.v, self.u)

    def validate(self, tol: float = MASS_TOL) -> StatePair:
        g = self.grid
        g.check(self.u)
        g.check(self.v)
        for name, f in (("u", self.u), ("v", self.v)):
            if not np.all(np.isfinite(f)):
                raise ValueError(f"{name} has non-finite values")
            if np.any(f < 0):
                raise ValueError(f"{name} has negative values (min {f.min():.3e})")
            mass = g.norm(f)
            if abs(mass - 1.0) > tol:
                raise ValueError(f"|{name}|_2 = {mass!r}, expected 1")
        return self

    @property
    def w(self) -> np.ndarray:
        return self.u - self.v


@dataclass(frozen=True)
class Multipliers:
    lam: float
    mu: float


@dataclass(frozen=True)
class TildeMultipliers:
    lam: float
    mu: float
    det_a: float


# np.where (not np.maximum) so that zeros are always +0.0 and the two parts of
# w and -w agree bit for bit
def _cube(w: np.ndarray) -> np.ndarray:
    # numpy's integer power is not exactly odd; this product is
    return w * (w * w)


def positive_part(w: np.ndarray) -> np.ndarray:
    return np.where(w > 0.0, w, 0.0)


def negative_part(w: np.ndarray) -> np.ndarray:
    return np.where(w < 0.0, -w, 0.0)


def normalize(grid: Grid, f: np.ndarray) -> np.ndarray:
    mass = grid.norm(f)
    if mass == 0.0 or not np.isfinite(mass):
        raise ValueError("cannot normalize a field with zero or non-finite mass")
    return f / mass


def make_state(grid: Grid, u: np.ndarray, v: np.ndarray) -> StatePair:
    """Clamp both components to be nonnegative and scale them to unit mass."""
    u = normalize(grid, positive_part(grid.check(u)))
    v = normalize(grid, positive_part(grid.check(v)))
    return StatePair(grid, u, v)


def make_signed(grid: Grid, w: np.ndarray) -> np.ndarray:
    """Rescale the sign parts of ``w`` separately to unit mass."""
    w = grid.check(w)
    return normalize(grid, positive_part(w)) - normalize(grid, negative_part(w))


def validate_signed(grid: Grid, w: np.ndarray, tol: float = MASS_TOL) -> np.ndarray:
    w = grid.check(w)
    if not np.all(np.isfinite(w)):
        raise ValueError("w has non-finite values")
    for name, part in (("w+", positive_part(w)), ("w-", negative_part(w))):
        mass = grid.norm(part)
        if abs(mass - 1.0) > tol:
            raise ValueError(f"|{name}|_2 = {mass!r}, expected 1")
    return w


def quartic(grid: Grid, f: np.ndarray) -> float:
    f2 = f * f
    return grid.inner(f2, f2)


def coupling(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
    """Quadrature of u^2 v^2, symmetric in (u, v) bit for bit."""
    return grid.inner(u * u, v * v)


def energy_beta(s: StatePair, beta: float) -> float:
    g = s.grid
    gradient = g.h1_seminorm_sq(s.u) + g.h1_seminorm_sq(s.v)
    local = quartic(g, s.u) + quartic(g, s.v)
    return 0.5 * gradient + 0.25 * local + 0.5 * beta * coupling(g, s.u, s.v)


def energy_infty(s: StatePair, seg_tol: float = SEG_TOL) -> float:
    if coupling(s.grid, s.u, s.v) > seg_tol:
        return math.inf
    return energy_beta(s, 0.0)


def energy_star(grid: Grid, w: np.ndarray) -> float:
    return 0.5 * grid.h1_seminorm_sq(w) + 0.25 * quartic(grid, w)


def energy_drop_beta(old: StatePair, new: StatePair, beta: float) -> float:
    """J_beta(old) - J_beta(new), evaluated without cancellation.

    Each term is rewritten through differences so the result keeps relative
    accuracy when the two states are close.
    """
    g = old.grid
    total = 0.0
    for a, b in ((old.u, new.u), (old.v, new.v)):
        d, s = a - b, a + b
        total += 0.5 * g.inner(g.neg_laplacian(d), s)
        total += 0.25 * g.inner(d * s, a * a + b * b)
    if beta:
        u0, v0, u1, v1 = old.u, old.v, new.u, new.v
        du2 = (u0 - u1) * (u0 + u1)
        dv2 = (v0 - v1) * (v0 + v1)
        total += 0.5 * beta * (g.inner(du2, v0 * v0) + g.inner(u1 * u1, dv2))
    return total


def energy_drop_star(grid: Grid, w_old: np.ndarray, w_new: np.ndarray) -> float:
    d, s = w_old - w_new, w_old + w_new
    return 0.5 * grid.inner(grid.neg_laplacian(d), s) + 0.25 * grid.inner(d * s, w_old**2 + w_new**2)


def _mult(grid: Grid, a: np.ndarray, b: np.ndarray, beta: float, explicit_mass: bool) -> float:
    value = grid.h1_seminorm_sq(a) + quartic(grid, a) + beta * coupling(grid, a, b)
    if explicit_mass:
        value /= grid.inner(a, a)
    return value


def multipliers(s: StatePair, beta: float, explicit_mass: bool = False) -> Multipliers:
    """Lagrange multipliers obtained by testing each equation with its own component.

    The mass denominators equal one on valid states; ``explicit_mass`` divides
    by them anyway (useful for unnormalized debug input).
    """
    g = s.grid
    return Multipliers(_mult(g, s.u, s.v, beta, explicit_mass), _mult(g, s.v, s.u, beta, explicit_mass))


def _reaction(a: np.ndarray, b: np.ndarray, beta: float) -> np.ndarray:
    return a * (a * a) + beta * a * (b * b)


def gradient_beta(s: StatePair, beta: float, mult: Multipliers | None = None):
    """Constrained L2 gradient of J_beta; returns the pair of components."""
    g = s.grid
    if mult is None:
        mult = multipliers(s, beta)
    gu = g.neg_laplacian(s.u) + _reaction(s.u, s.v, beta) - mult.lam * s.u
    gv = g.neg_laplacian(s.v) + _reaction(s.v, s.u, beta) - mult.mu * s.v
    return gu, gv


def residual_beta(s: StatePair, beta: float) -> float:
    gu, gv = gradient_beta(s, beta)
    return math.sqrt(s.grid.inner(gu, gu) + s.grid.inner(gv, gv))


def tilde_multipliers(grid: Grid, w: np.ndarray, det_floor: float = DET_FLOOR) -> TildeMultipliers:
    """Multipliers making the H1 gradient of J* tangent to both sign-part spheres."""
    wp, wm = positive_part(w), negative_part(w)
    Lp, Lm = grid.solve_poisson(wp), grid.solve_poisson(wm)
    a11 = grid.inner(wp, Lp)
    a22 = grid.inner(wm, Lm)
    # L is symmetric, so both off-diagonal entries are the same number
    a12 = -0.5 * (grid.inner(wp, Lm) + grid.inner(wm, Lp))
    det = a11 * a22 - a12 * a12
    if not det > det_floor * a11 * a22:
        raise DegenerateStateError(f"det A = {det:.3e} is not positive; a sign part of w is degenerate")
    q = w + grid.solve_poisson(_cube(w))
    r1 = grid.inner(q, wp)
    r2 = -grid.inner(q, wm)
    lam = (a22 * r1 - a12 * r2) / det
    mu = (a11 * r2 - a12 * r1) / det
    return TildeMultipliers(lam, mu, det)


def gradient_infty(grid: Grid, w: np.ndarray, tm: TildeMultipliers | None = None) -> np.ndarray:
    if tm is None:
        tm = tilde_multipliers(grid, w)
    # grouped so that w -> -w flips the sign bitwise
    src = _cube(w) - (tm.lam * positive_part(w) - tm.mu * negative_part(w))
    return w + grid.solve_poisson(src)


def residual_infty(grid: Grid, w: np.ndarray) -> float:
    """H1 norm of the limit gradient."""
    return grid.h1_norm(gradient_infty(grid, w))


def limit_equation_residual(grid: Grid, w: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """-Lap w + w^3 - lam w+ + mu w-."""
    return grid.neg_laplacian(w) + _cube(w) - (lam * positive_part(w) - mu * negative_part(w))
