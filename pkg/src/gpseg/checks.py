"""Randomized invariant suite behind ``gpseg check``.

Each check draws its inputs from one seeded generator and returns a
:class:`CheckResult`; nothing here raises on a failed property.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .discretization import Grid, build_grid
from .flows import FlowConfig, relax_beta, relax_infty, step_beta, step_infty
from .functionals import (
    DegenerateStateError,
    StatePair,
    energy_beta,
    energy_infty,
    energy_star,
    gradient_beta,
    gradient_infty,
    make_signed,
    make_state,
    multipliers,
    negative_part,
    positive_part,
    tilde_multipliers,
)
from .minimax import build_family, build_phi_basis, psi_map, sample_sphere


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def smooth_positive(grid: Grid, rng: np.random.Generator, modes: int = 6) -> np.ndarray:
    """Random nonnegative field built from low Dirichlet sine modes."""
    axes = [grid.axis(i) / grid.lengths[i] for i in range(grid.dimension)]
    coef = rng.standard_normal((modes,) * grid.dimension) / (1.0 + np.arange(modes))
    basis = [np.sin(np.pi * np.outer(np.arange(1, modes + 1), a)) for a in axes]
    if grid.dimension == 1:
        f = coef @ basis[0]
    else:
        f = basis[0].T @ coef @ basis[1]
    return np.abs(f) + 1e-3 * np.prod(np.meshgrid(*[np.sin(np.pi * a) for a in axes], indexing="ij"), axis=0)


def random_pair(grid: Grid, rng: np.random.Generator) -> StatePair:
    return make_state(grid, smooth_positive(grid, rng), smooth_positive(grid, rng))


def random_signed(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """Random sign-changing field with both sign parts of unit mass."""
    while True:
        axes = [grid.axis(i) / grid.lengths[i] for i in range(grid.dimension)]
        modes = 6
        coef = rng.standard_normal((modes,) * grid.dimension)
        basis = [np.sin(np.pi * np.outer(np.arange(1, modes + 1), a)) for a in axes]
        f = coef @ basis[0] if grid.dimension == 1 else basis[0].T @ coef @ basis[1]
        if np.any(f > 0) and np.any(f < 0):
            return make_signed(grid, f)


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed check, reported in the table
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


def run_checks(seed: int = 0, n: int = 63, samples: int = 100) -> list:
    rng = np.random.default_rng(seed)
    g = build_grid(1, n, [1.0])
    g2 = build_grid(2, 15, [1.0, 1.0])
    out = []

    def laplacian_symmetry():
        worst = 0.0
        for grid in (g, g2):
            for _ in range(samples):
                f, h = rng.standard_normal(grid.shape), rng.standard_normal(grid.shape)
                a = grid.inner(grid.neg_laplacian(f), h)
                b = grid.inner(f, grid.neg_laplacian(h))
                worst = max(worst, abs(a - b) / max(1.0, abs(a)))
        return worst <= 1e-12, f"max relative asymmetry {worst:.2e}"

    def poisson_roundtrip():
        w1 = max(float(np.max(np.abs(g.solve_poisson(g.neg_laplacian(f)) - f)))
                 for f in rng.standard_normal((samples, n)))
        w2 = max(float(np.max(np.abs(g2.solve_poisson(g2.neg_laplacian(f)) - f)))
                 for f in rng.standard_normal((10,) + g2.shape))
        return w1 <= 1e-10 and w2 <= 1e-8, f"1D {w1:.2e}, 2D {w2:.2e}"

    def poincare():
        ok = all(g.inner(f, f) <= g.h1_seminorm_sq(f) / g.lambda_min * (1 + 1e-12)
                 for f in rng.standard_normal((samples, n)))
        return ok, f"lambda_min = {g.lambda_min:.6g}"

    def multiplier_orthogonality():
        worst = 0.0
        for _ in range(samples):
            s = random_pair(g, rng)
            beta = float(10 ** rng.uniform(0, 4))
            gu, gv = gradient_beta(s, beta)
            worst = max(worst, abs(g.inner(gu, s.u)), abs(g.inner(gv, s.v)))
        return worst <= 1e-10, f"max |<S, (u,0)>|, |<S, (0,v)>| = {worst:.2e}"

    def multiplier_floor():
        low = min(min(m.lam, m.mu) for m in (multipliers(random_pair(g, rng), 1.0) for _ in range(samples)))
        return low >= g.lambda_min, f"min multiplier {low:.6g} vs lambda_min {g.lambda_min:.6g}"

    def tilde_orthogonality():
        worst, det_min = 0.0, math.inf
        for _ in range(samples):
            w = random_signed(g, rng)
            tm = tilde_multipliers(g, w)
            S = gradient_infty(g, w, tm)
            worst = max(worst, abs(g.inner(positive_part(w), S)), abs(g.inner(negative_part(w), S)))
            det_min = min(det_min, tm.det_a)
        return worst <= 1e-8 and det_min > 0, f"orthogonality {worst:.2e}, min det A {det_min:.3e}"

    def energy_identities():
        ok = True
        basis = build_phi_basis(g, 3)
        for _ in range(samples // 4 or 1):
            # psi states keep a zero node between the sign parts, which is
            # where the discrete J_inf(w+, w-) and J*(w) coincide exactly
            t = rng.standard_normal(3)
            pair = psi_map(basis, t / np.linalg.norm(t))
            ok &= math.isclose(energy_infty(pair), energy_star(g, pair.u - pair.v), rel_tol=1e-13)
            w = random_signed(g, rng)
            ok &= math.isclose(energy_star(g, -w), energy_star(g, w), rel_tol=1e-14)
            s = random_pair(g, rng)
            ok &= energy_beta(s, 1.0) <= energy_beta(s, 2.0) and math.isinf(energy_infty(s))
        return ok, "J_inf = J* on segregated pairs, J* even, J_beta increasing in beta"

    def diagonal_bound():
        worst = math.inf
        for beta in (1.0, 1e3):
            for _ in range(samples):
                u = make_state(g, smooth_positive(g, rng), smooth_positive(g, rng)).u
                val = energy_beta(StatePair(g, u, u), beta) - (1 + beta) / (2 * g.measure)
                worst = min(worst, val)
        return worst >= -1e-8, f"min J(u,u) - (1+beta)/(2|Omega|) = {worst:.3e}"

    def swap_equivariance():
        ok = True
        for _ in range(10):
            s = random_pair(g, rng)
            gu, gv = gradient_beta(s, 10.0)
            hu, hv = gradient_beta(s.swapped(), 10.0)
            ok &= np.array_equal(gu, hv) and np.array_equal(gv, hu)
            a, b = step_beta(s, 10.0, 1e-4), step_beta(s.swapped(), 10.0, 1e-4)
            ok &= np.array_equal(a.u, b.v) and np.array_equal(a.v, b.u)
            w = random_signed(g, rng)
            ok &= np.array_equal(step_infty(g, -w, 1e-2), -step_infty(g, w, 1e-2))
        return ok, "gradient and steps commute with the swap (bitwise)"

    def family_equivariance():
        ok = True
        for k, m in ((1, 2), (2, 16), (3, 10)):
            basis = build_phi_basis(g, k)
            ok &= basis.overlap() == 0.0
            fam = build_family(basis, m)
            ok &= fam.is_equivariant()
            pts = sample_sphere(k, m)
            ok &= all(np.array_equal(psi_map(basis, -t).u, psi_map(basis, t).v) for t in pts)
        return ok, "psi(-t) = sigma psi(t) bitwise, disjoint supports"

    def flow_invariants():
        cfg = FlowConfig()
        worst_clamp, worst_mass, ok = 0.0, 0.0, True
        for beta in (1.0, 100.0):
            s0 = random_pair(g, rng)
            s, tr = relax_beta(s0, beta, cfg, keep_every=1)
            e = np.array(tr.energy)
            ok &= bool(np.all(np.diff(e) <= 1e-12)) and min(tr.min_value) >= 0.0 and tr.converged
            worst_clamp = max(worst_clamp, max(tr.clamp))
            worst_mass = max(worst_mass, max(abs(g.norm(x.u) - 1) + abs(g.norm(x.v) - 1) for x in tr.states))
            ok &= g.norm(step_beta(s, beta, 1e-3).u - s.u) <= 1e-6
        w, tr = relax_infty(g, random_signed(g, rng), cfg)
        ok &= bool(np.all(np.diff(tr.energy) <= 1e-12)) and tr.converged
        ok &= worst_clamp <= 1e-8 and worst_mass <= 1e-12
        return ok, f"monotone energy, clamp {worst_clamp:.1e}, mass error {worst_mass:.1e}"

    def degenerate_detection():
        w = make_signed(g, np.sin(2 * np.pi * g.axis()))
        try:
            tilde_multipliers(g, np.abs(w))
        except DegenerateStateError:
            return True, "one-signed field rejected"
        return False, "one-signed field was accepted"

    for name, fn in (
        ("laplacian symmetric", laplacian_symmetry),
        ("poisson round trip", poisson_roundtrip),
        ("discrete poincare", poincare),
        ("multiplier orthogonality", multiplier_orthogonality),
        ("multipliers >= lambda_min", multiplier_floor),
        ("tilde multipliers / det A", tilde_orthogonality),
        ("energy identities", energy_identities),
        ("diagonal lower bound", diagonal_bound),
        ("swap equivariance", swap_equivariance),
        ("family equivariance", family_equivariance),
        ("flow invariants", flow_invariants),
        ("degenerate sign part", degenerate_detection),
    ):
        out.append(_timed(name, fn))
    return out


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  time    detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:5.2f}s  {r.detail}")
    return "\n".join(lines)
