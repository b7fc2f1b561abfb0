import json
import math

import numpy as np
import pytest

from gpseg.discretization import build_grid
from gpseg.flows import FlowConfig
from gpseg.functionals import StatePair, energy_beta, energy_infty, make_state, residual_beta
from gpseg.minimax import (
    FamilyError,
    GenusFamily,
    beta_label,
    build_family,
    build_phi_basis,
    deform,
    extract_critical,
    minimax_level,
    psi_map,
    sample_sphere,
    symmetric_collapse,
)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_basis_sign_changing_and_disjoint(grid63, k):
    b = build_phi_basis(grid63, k)
    assert b.k == k
    assert b.overlap() == 0.0
    for phi, p, m in zip(b.phis, b.pos_mass, b.neg_mass):
        assert phi.max() > 0 and phi.min() < 0
        assert p > 0 and m > 0


def test_k1_basis_is_one_sine_period(grid63):
    # n + 1 = 64 cells, so the sign change sits exactly on node 32
    phi = build_phi_basis(grid63, 1).phis[0]
    assert np.allclose(phi, np.sin(2 * np.pi * grid63.axis()), atol=1e-14)


def test_basis_2d(grid2d):
    b = build_phi_basis(build_grid(2, 31, [1.0, 1.0]), 2)
    assert b.overlap() == 0.0
    with pytest.raises(FamilyError):
        build_phi_basis(grid2d, 3)


def test_coarse_grid_rejected():
    with pytest.raises(FamilyError):
        build_phi_basis(build_grid(1, 15, [1.0]), 3)


def test_psi_map_properties(grid63, rng):
    b = build_phi_basis(grid63, 3)
    for _ in range(20):
        t = rng.standard_normal(3)
        t /= np.linalg.norm(t)
        s = psi_map(b, t)
        s.validate()
        assert grid63.inner(s.u, s.v) == 0.0
        m = psi_map(b, -t)
        assert np.array_equal(m.u, s.v) and np.array_equal(m.v, s.u)
        # J_beta does not depend on beta on segregated pairs
        assert energy_beta(s, 1.0) == energy_beta(s, 1e4) == energy_infty(s)
    with pytest.raises(FamilyError):
        psi_map(b, [1.0, 0.0])
    with pytest.raises(FamilyError):
        psi_map(b, [1.0, 1.0, 0.0])


def test_sample_sphere_k2_m8():
    pts = sample_sphere(2, 8)
    ang = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi)
    assert np.allclose(np.sort(ang), np.pi / 4 * np.arange(8), atol=1e-14)
    assert np.array_equal(pts[4:], -pts[:4])
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-15)


@pytest.mark.parametrize("k, m", [(1, 2), (3, 62), (5, 20)])
def test_sample_sphere_closed_under_antipode(k, m):
    pts = sample_sphere(k, m, np.random.default_rng(0))
    h = len(pts) // 2
    assert np.array_equal(pts[h:], -pts[:h])
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-14)


def test_sample_sphere_rejects_odd_m():
    with pytest.raises(FamilyError):
        sample_sphere(2, 7)
    with pytest.raises(FamilyError):
        sample_sphere(0, 4)


def test_family_equivariance_and_tamper(grid63):
    fam = build_family(build_phi_basis(grid63, 2), 8)
    assert fam.is_equivariant()
    assert fam.validate() is fam
    bad = GenusFamily(fam.k, fam.points, list(fam.states))
    s = bad.states[-1]
    u = s.u.copy()
    u[10] = np.nextafter(u[10], 1.0)
    bad.states[-1] = StatePair(grid63, u, s.v)
    assert not bad.is_equivariant()
    with pytest.raises(FamilyError):
        bad.validate()


def test_deform_decreases_energy_and_respects_swap(grid63):
    fam = build_family(build_phi_basis(grid63, 2), 8)
    cfg = FlowConfig()
    for s in fam.states[:4]:
        for beta in (10.0, math.inf):
            d = deform(s, beta, cfg)
            ds = deform(s.swapped(), beta, cfg)
            assert np.array_equal(d.u, ds.v) and np.array_equal(d.v, ds.u)
            e0 = energy_infty(s)
            e1 = energy_infty(d) if math.isinf(beta) else energy_beta(d, beta)
            assert e1 <= e0 + 1e-12


def test_k1_level_matches_oracle(grid63, oracles):
    est = minimax_level(1, 10.0, build_phi_basis(grid63, 1))
    assert est.rounds_converged
    assert est.value == pytest.approx(oracles["O1_beta10_n63"]["energy"], abs=1e-4)
    assert all(b <= a + 1e-12 for a, b in zip(est.history, est.history[1:]))


def test_k1_limit_level_matches_oracle(grid63, oracles):
    est = minimax_level(1, math.inf, build_phi_basis(grid63, 1))
    cp = extract_critical(est)
    assert cp.stationary
    assert cp.energy == pytest.approx(oracles["O2_n63"]["energy"], abs=1e-4)


def test_family_equivariant_every_round(grid63):
    seen = []

    def check(r, sup, fam):
        seen.append((r, sup, fam.is_equivariant()))

    est = minimax_level(2, 100.0, build_phi_basis(grid63, 2), m=8, max_rounds=4, on_round=check)
    assert seen and all(ok for _, _, ok in seen)
    assert [r for r, _, _ in seen] == list(range(1, len(seen) + 1))
    assert all(b <= a + 1e-12 for a, b in zip(est.history, est.history[1:]))


def test_wrong_k_rejected(grid63):
    with pytest.raises(FamilyError):
        minimax_level(2, 10.0, build_phi_basis(grid63, 1))


def test_extract_critical_is_stationary(grid63):
    est = minimax_level(2, 100.0, build_phi_basis(grid63, 2), m=8)
    cp = extract_critical(est)
    assert cp.stationary and cp.residual < 1e-6
    assert residual_beta(cp.pair(), 100.0) < 1e-6
    # the relaxed point sits at or below the deformed sup
    assert cp.energy <= est.value + 1e-8


def test_symmetric_collapse_guard(grid63):
    phi = make_state(grid63, np.sin(np.pi * grid63.axis()), np.sin(np.pi * grid63.axis()))
    assert symmetric_collapse(phi, 100.0, 40.0)
    assert not symmetric_collapse(phi, 10.0, 40.0)
    assert not symmetric_collapse(phi, 100.0, None)
    assert not symmetric_collapse(phi, math.inf, 40.0)


def test_estimate_json(grid63):
    est = minimax_level(1, math.inf, build_phi_basis(grid63, 1), max_rounds=2)
    data = json.loads(est.to_json({"config_hash": "abc"}))
    assert data["beta"] == beta_label(math.inf) == "inf"
    assert data["config_hash"] == "abc"
    assert data["history"] == est.history
    assert len(data["family"]["energies"]) == 2
