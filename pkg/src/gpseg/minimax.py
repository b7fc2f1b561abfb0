"""Equivariant genus-k families and the deformation-descent minimax estimator.

A family is the image of an antipodally closed sample of S^{k-1} under

    psi(t) = ( (sum t_i phi_i)^+ / |.|_2 , (sum t_i phi_i)^- / |.|_2 )

with sign-changing, disjointly supported phi_i.  psi(-t) is the swap of
psi(t), so the family is symmetric for sigma(u, v) = (v, u).  Deformations
flow one member of each antipodal pair and write the swapped copy into its
partner, which keeps the symmetry exact.  The sup over the deformed family is
an upper estimate of the minimax level; nothing here searches the inf over
all symmetric sets.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .discretization import Grid
from .flows import FlowConfig, relax_beta, relax_infty, signed_to_pair
from .functionals import (
    Multipliers,
    StatePair,
    TildeMultipliers,
    energy_beta,
    energy_star,
    multipliers,
    negative_part,
    positive_part,
    residual_beta,
    residual_infty,
    tilde_multipliers,
)

MIN_NODES_PER_LOBE = 4
DEFAULT_SAMPLES = {1: 2, 2: 16, 3: 62}
COLLAPSE_DIST = 1e-6


class FamilyError(ValueError):
    """Raised when a basis or family cannot be built on the given grid."""


def is_infinite(beta) -> bool:
    return beta is None or (isinstance(beta, float) and math.isinf(beta))


def beta_label(beta) -> str:
    return "inf" if is_infinite(beta) else repr(float(beta))


# Sign-changing basis


@dataclass(frozen=True)
class PhiBasis:
    grid: Grid
    phis: tuple
    pos_mass: tuple
    neg_mass: tuple

    @property
    def k(self) -> int:
        return len(self.phis)

    def overlap(self) -> float:
        """Sum over i < j of |phi_i phi_j|_1; zero for a valid basis."""
        total = 0.0
        for i in range(self.k):
            for j in range(i + 1, self.k):
                total += self.grid.integral(np.abs(self.phis[i] * self.phis[j]))
        return total


def _lobes(n: int, k: int) -> np.ndarray:
    """Values of k consecutive sine periods at nodes 1..n of an (n+1)-cell axis.

    Period i covers node indices [b_i, b_{i+1}] with b_i = round(i (n+1) / k)
    and changes sign at the integer node m_i, so every zero used for
    disjointness is an exact node value 0.
    """
    out = np.zeros((k, n))
    cuts = [round(i * (n + 1) / k) for i in range(k + 1)]
    for i in range(k):
        lo, hi = cuts[i], cuts[i + 1]
        mid = (lo + hi) // 2
        if mid - lo < MIN_NODES_PER_LOBE or hi - mid < MIN_NODES_PER_LOBE:
            raise FamilyError(f"grid with n={n} is too coarse for k={k} sign-changing lobes")
        j = np.arange(lo + 1, mid)
        out[i, j - 1] = np.sin(np.pi * (j - lo) / (mid - lo))
        j = np.arange(mid + 1, hi)
        out[i, j - 1] = -np.sin(np.pi * (j - mid) / (hi - mid))
    return out


def build_phi_basis(grid: Grid, k: int) -> PhiBasis:
    """One full sine period on each of k equal slabs (strips along axis 0 in 2D)."""
    if k < 1:
        raise FamilyError("k must be >= 1")
    rows = _lobes(grid.n, k)
    if grid.dimension == 1:
        phis = tuple(rows[i] for i in range(k))
    else:
        profile = np.sin(np.pi * np.arange(1, grid.n + 1) / (grid.n + 1))
        phis = tuple(np.outer(rows[i], profile) for i in range(k))
    pos = tuple(grid.inner(positive_part(p), positive_part(p)) for p in phis)
    neg = tuple(grid.inner(negative_part(p), negative_part(p)) for p in phis)
    return PhiBasis(grid, phis, pos, neg)


def psi_map(basis: PhiBasis, t) -> StatePair:
    """Map a point of S^{k-1} to a segregated pair on the constraint manifold.

    The sign parts are scaled by their computed mass.  This equals the
    closed-form normalizer up to rounding and makes the masses exact.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size != basis.k:
        raise FamilyError(f"point has {t.size} coordinates, basis has k={basis.k}")
    if abs(float(t @ t) - 1.0) > 1e-12:
        raise FamilyError("point is not on the unit sphere")
    pos = sum(ti * ti * m for ti, m in zip(t, basis.pos_mass))
    neg = sum(ti * ti * m for ti, m in zip(t, basis.neg_mass))
    if pos <= 0 or neg <= 0:
        raise FamilyError("degenerate normalizer in psi")
    g = basis.grid
    f = np.zeros(g.shape)
    for ti, phi in zip(t, basis.phis):
        f += ti * phi
    up, um = positive_part(f), negative_part(f)
    return StatePair(g, up / g.norm(up), um / g.norm(um))


def sample_sphere(k: int, m: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Antipodally closed points on S^{k-1}, shape (m, k).

    Rows ``m/2 + i`` are the exact negatives of rows ``i``.  k = 1 always gives
    the two points +1, -1.  k = 2 uses equispaced angles; k = 3 the upper half
    of a Fibonacci lattice; larger k draws from ``rng``.
    """
    if k < 1:
        raise FamilyError("k must be >= 1")
    if m < 2 or m % 2:
        raise FamilyError(f"m must be even and >= 2, got {m}")
    half = m // 2
    if k == 1:
        reps = np.ones((1, 1))
    elif k == 2:
        ang = 2.0 * np.pi * np.arange(half) / m
        reps = np.column_stack([np.cos(ang), np.sin(ang)])
    elif k == 3:
        i = np.arange(half)
        z = 1.0 - (2.0 * i + 1.0) / m
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (3.0 - np.sqrt(5.0)) * i
        reps = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        reps = rng.standard_normal((half, k))
        reps /= np.linalg.norm(reps, axis=1, keepdims=True)
    reps = reps / np.linalg.norm(reps, axis=1, keepdims=True)
    return np.vstack([reps, -reps])


# Families


@dataclass
class GenusFamily:
    """Members ``i`` and ``i + half`` are sigma-images of each other."""

    k: int
    points: np.ndarray
    states: list
    flowed: bool = False

    @property
    def half(self) -> int:
        return len(self.states) // 2

    def __len__(self) -> int:
        return len(self.states)

    def is_equivariant(self) -> bool:
        """Exact check that member i + half is the swap of member i."""
        h = self.half
        if not np.array_equal(self.points[h:], -self.points[:h]):
            return False
        for a, b in zip(self.states[:h], self.states[h:]):
            if not (np.array_equal(a.u, b.v) and np.array_equal(a.v, b.u)):
                return False
        return True

    def validate(self) -> GenusFamily:
        for s in self.states:
            s.validate()
        if not self.is_equivariant():
            raise FamilyError("family lost its swap symmetry")
        return self

    def energies(self, beta) -> np.ndarray:
        if is_infinite(beta):
            return np.array([energy_star(s.grid, s.u - s.v) for s in self.states])
        return np.array([energy_beta(s, beta) for s in self.states])

    def replace_representatives(self, reps) -> GenusFamily:
        reps = list(reps)
        return GenusFamily(self.k, self.points, reps + [s.swapped() for s in reps], True)

    def to_dict(self, beta=None) -> dict:
        out = {"k": self.k, "points": self.points.tolist(), "flowed": self.flowed}
        if beta is not None:
            out["energies"] = [float(e) for e in self.energies(beta)]
        return out


def build_family(basis: PhiBasis, m: int, rng: np.random.Generator | None = None) -> GenusFamily:
    points = sample_sphere(basis.k, m, rng)
    half = len(points) // 2
    reps = [psi_map(basis, t) for t in points[:half]]
    fam = GenusFamily(basis.k, points, reps + [s.swapped() for s in reps])
    # psi of the antipode computed directly must agree with the swap bit for bit
    for i in range(half):
        direct = psi_map(basis, points[half + i])
        if not (np.array_equal(direct.u, fam.states[half + i].u) and np.array_equal(direct.v, fam.states[half + i].v)):
            raise FamilyError("psi(-t) differs from the swap of psi(t)")
    return fam


# Level estimation


@dataclass
class LevelEstimate:
    k: int
    beta: float
    value: float
    argmax: int
    residual: float
    history: list
    family: GenusFamily | None = field(default=None, repr=False)
    collapse: bool = False
    rounds_converged: bool = True

    def to_dict(self) -> dict:
        out = {
            "k": self.k,
            "beta": beta_label(self.beta),
            "value": self.value,
            "argmax": self.argmax,
            "residual": self.residual,
            "history": list(self.history),
            "collapse": self.collapse,
            "rounds_converged": self.rounds_converged,
        }
        if self.family is not None:
            out["family"] = self.family.to_dict(self.beta)
        return out

    def to_json(self, header: dict | None = None) -> str:
        out = dict(header or {})
        out.update(self.to_dict())
        return json.dumps(out, indent=2, sort_keys=True)


def deform(state: StatePair, beta, cfg: FlowConfig, time_budget: float = 1.0,
           stop_on_residual: bool = True) -> StatePair:
    """Unit-time flow of one member.

    With ``stop_on_residual`` the flow stops early once the member is
    stationary to ``cfg.residual_tol``; such a member is a fixed point of the
    deformation up to that tolerance.
    """
    if is_infinite(beta):
        g = state.grid
        w, _ = relax_infty(g, state.u - state.v, cfg, time_budget, stop_on_residual)
        return signed_to_pair(g, w)
    new, _ = relax_beta(state, beta, cfg, time_budget, stop_on_residual)
    return new


def member_residual(state: StatePair, beta) -> float:
    if is_infinite(beta):
        return residual_infty(state.grid, state.u - state.v)
    return residual_beta(state, beta)


def symmetric_collapse(state: StatePair, beta, limit_level: float | None) -> bool:
    """True when the argmax sits on the diagonal u = v although beta is past the bound below which that is possible."""
    if limit_level is None or is_infinite(beta):
        return False
    g = state.grid
    return g.norm(state.u - state.v) < COLLAPSE_DIST and beta >= 2.0 * g.measure * limit_level


def minimax_level(k: int, beta, basis: PhiBasis, m: int | None = None, cfg: FlowConfig = FlowConfig(),
                  family: GenusFamily | None = None, max_rounds: int = 200, time_budget: float = 1.0,
                  limit_level: float | None = None, rng: np.random.Generator | None = None,
                  on_round=None) -> LevelEstimate:
    """Deformation-descent estimate of the k-th minimax level at ``beta`` (``math.inf`` for the limit).

    Each round moves every representative by the unit-time flow and mirrors
    it into its partner.  Rounds stop once the sup drops by less than
    ``cfg.residual_tol`` or after ``max_rounds``.  A warm ``family`` (for
    instance the deformed family of a neighbouring beta) replaces the
    construction from ``basis``.  ``on_round(round, sup, family)`` is called
    after every round.
    """
    if basis.k != k:
        raise FamilyError(f"basis has k={basis.k}, requested k={k}")
    if family is None:
        family = build_family(basis, m or DEFAULT_SAMPLES.get(k, 2 * 16 * k), rng)
    elif family.k != k:
        raise FamilyError("warm-start family has the wrong k")
    energies = family.energies(beta)
    history = [float(energies.max())]
    converged = False
    for _ in range(max_rounds):
        reps = [deform(s, beta, cfg, time_budget) for s in family.states[:family.half]]
        family = family.replace_representatives(reps)
        energies = family.energies(beta)
        history.append(float(energies.max()))
        if on_round is not None:
            on_round(len(history) - 1, history[-1], family)
        if history[-2] - history[-1] < cfg.residual_tol:
            converged = True
            break
    arg = int(np.argmax(energies))
    best = family.states[arg]
    return LevelEstimate(
        k=k, beta=beta, value=history[-1], argmax=arg, residual=member_residual(best, beta),
        history=history, family=family, collapse=symmetric_collapse(best, beta, limit_level),
        rounds_converged=converged)


@dataclass
class CriticalPoint:
    """A relaxed argmax: a pair for finite beta, a signed field for the limit."""

    grid: Grid
    beta: float
    state: object
    multipliers: object
    residual: float
    energy: float
    stationary: bool

    def pair(self) -> StatePair:
        if isinstance(self.state, StatePair):
            return self.state
        return signed_to_pair(self.grid, self.state)


def extract_critical(estimate: LevelEstimate, family: GenusFamily | None = None,
                     cfg: FlowConfig = FlowConfig()) -> CriticalPoint:
    """Relax the argmax member of the deformed family to stationarity."""
    family = family or estimate.family
    if family is None:
        raise FamilyError("no family to extract from")
    s = family.states[estimate.argmax]
    g = s.grid
    if is_infinite(estimate.beta):
        w, trace = relax_infty(g, s.u - s.v, cfg)
        tm: TildeMultipliers = tilde_multipliers(g, w)
        return CriticalPoint(g, estimate.beta, w, tm, trace.residual[-1], energy_star(g, w), trace.converged)
    state, trace = relax_beta(s, estimate.beta, cfg)
    mult: Multipliers = multipliers(state, estimate.beta)
    return CriticalPoint(g, estimate.beta, state, mult, trace.residual[-1], energy_beta(state, estimate.beta),
                         trace.converged)
