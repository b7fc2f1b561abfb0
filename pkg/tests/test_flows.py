import math

import numpy as np
import pytest

from conftest import random_pair, random_signed, smooth_positive
from gpseg.flows import (
    TRACE_COLUMNS,
    FlowCollapseError,
    FlowConfig,
    StepperError,
    positivity_dt,
    relax_beta,
    relax_infty,
    step_beta,
    step_beta_info,
    step_infty,
)
from gpseg.functionals import (
    StatePair,
    energy_beta,
    energy_star,
    make_signed,
    make_state,
    negative_part,
    positive_part,
    residual_beta,
)


def two_bump(g):
    x = g.axis()
    env = np.sin(np.pi * x)
    return make_state(g, env * np.exp(-((x - 0.3) ** 2) / 0.03), env * np.exp(-((x - 0.7) ** 2) / 0.03))


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(dt_init=1e-3, dt_min=1e-2)
    with pytest.raises(ValueError):
        FlowConfig(residual_tol=0)
    with pytest.raises(ValueError):
        FlowConfig(backtrack_factor=1.0)


def test_step_keeps_manifold(grid63, rng):
    g = grid63
    for _ in range(20):
        s = random_pair(g, rng)
        beta = float(10 ** rng.uniform(0, 3))
        dt = min(1e-3, positivity_dt(s, beta, 0.5))
        new, drift, clamp = step_beta_info(s, beta, dt)
        assert abs(g.norm(new.u) - 1) <= 1e-12 and abs(g.norm(new.v) - 1) <= 1e-12
        assert new.u.min() >= 0 and new.v.min() >= 0
        assert clamp == 0.0


def test_step_equivariance_bitwise(grid63, rng):
    s = random_pair(grid63, rng)
    a = step_beta(s, 10.0, 1e-3)
    b = step_beta(s.swapped(), 10.0, 1e-3)
    assert np.array_equal(a.u, b.v) and np.array_equal(a.v, b.u)


def test_one_step_from_diagonal_decreases_energy(grid127):
    g = grid127
    phi = make_state(g, np.sin(np.pi * g.axis()), np.sin(np.pi * g.axis())).u
    # a slightly asymmetric start so the step does something
    s = make_state(g, phi * (1 + 0.1 * g.axis()), phi)
    new = step_beta(s, 10.0, 1e-3)
    assert energy_beta(new, 10.0) < energy_beta(s, 10.0)


def test_stationary_input_is_fixed(grid63):
    s, _ = relax_beta(two_bump(grid63), 10.0, FlowConfig(residual_tol=1e-12))
    assert residual_beta(s, 10.0) <= 1e-12
    new = step_beta(s, 10.0, 1e-3)
    assert math.sqrt(grid63.inner(new.u - s.u, new.u - s.u) + grid63.inner(new.v - s.v, new.v - s.v)) <= 1e-10


def test_collapse_error(grid63):
    s = make_state(grid63, np.ones(63), np.ones(63))
    with pytest.raises(FlowCollapseError):
        # an identically zero component has nothing to rescale
        step_beta(StatePair(grid63, np.zeros(63), s.v), 10.0, 1e-3)


def test_stepper_error_when_nothing_is_acceptable(grid63, rng):
    cfg = FlowConfig(dt_init=1e-3, dt_min=1e-4, dissipation_fraction=0.999999)
    with pytest.raises(StepperError):
        relax_beta(random_pair(grid63, rng), 1e4, cfg)


def test_relax_beta_trace_invariants(grid63, rng):
    s0 = random_pair(grid63, rng)
    s, tr = relax_beta(s0, 100.0, keep_every=1)
    assert tr.converged and tr.residual[-1] < 1e-6
    assert np.all(np.diff(tr.energy) <= 1e-12)
    assert np.all(np.diff(tr.time) > 0)
    assert tr.energy[-1] <= tr.energy[0]
    for st in tr.states:
        assert abs(grid63.norm(st.u) - 1) <= 1e-12 and abs(grid63.norm(st.v) - 1) <= 1e-12
    assert min(tr.min_value) >= 0
    assert max(tr.clamp) <= 1e-8
    assert tr.energy_gap(0, len(tr) - 1) == pytest.approx(tr.energy[0] - tr.energy[-1], rel=1e-9)


def test_relax_beta_two_bump_matches_oracle(grid127, oracles):
    s, tr = relax_beta(two_bump(grid127), 10.0)
    assert tr.converged
    assert tr.energy[-1] == pytest.approx(oracles["O1_beta10_n127"]["energy"], abs=1e-4)


def test_relax_is_fixed_point_of_its_step(grid63, rng):
    s, _ = relax_beta(random_pair(grid63, rng), 10.0, FlowConfig(residual_tol=1e-11))
    new = step_beta(s, 10.0, 1e-3)
    assert np.max(np.abs(new.u - s.u)) <= 1e-10


def test_time_budget_is_exact(grid63, rng):
    s, tr = relax_beta(random_pair(grid63, rng), 10.0, time_budget=0.0123, stop_on_residual=False)
    assert tr.final_time == pytest.approx(0.0123, rel=1e-12)


def test_l2_stability_in_initial_data(grid63, rng):
    g = grid63
    for beta in (1.0, 100.0):
        s = random_pair(g, rng)
        ratios = []
        for delta in (1e-3, 3e-4, 1e-4):
            s2 = make_state(g, s.u + delta * smooth_positive(g, rng), s.v)
            d0 = math.sqrt(g.inner(s2.u - s.u, s2.u - s.u))
            a, _ = relax_beta(s, beta, time_budget=0.5, stop_on_residual=False)
            b, _ = relax_beta(s2, beta, time_budget=0.5, stop_on_residual=False)
            d1 = math.sqrt(g.inner(a.u - b.u, a.u - b.u) + g.inner(a.v - b.v, a.v - b.v))
            ratios.append(d1 / d0)
        # one constant per (beta, grid) covers every delta
        assert max(ratios) <= 3 * min(ratios) + 1e-6
        assert max(ratios) < 100


def test_step_infty_properties(grid63, rng):
    g = grid63
    for _ in range(10):
        w = random_signed(g, rng)
        new = step_infty(g, w, 0.05)
        assert abs(g.norm(positive_part(new)) - 1) <= 1e-12
        assert abs(g.norm(negative_part(new)) - 1) <= 1e-12
        assert np.array_equal(step_infty(g, -w, 0.05), -new)
        assert np.all(positive_part(new) * negative_part(new) == 0)


def test_relax_infty_trace(grid63, rng):
    g = grid63
    w, tr = relax_infty(g, random_signed(g, rng), keep_every=1)
    assert tr.converged
    assert np.all(np.diff(tr.energy) <= 1e-12)
    for st in tr.states:
        assert np.all(positive_part(st) * negative_part(st) == 0)
        assert abs(g.norm(positive_part(st)) - 1) <= 1e-12
    new = step_infty(g, w, 0.05)
    assert energy_star(g, new) <= energy_star(g, w) + 1e-12


def test_limit_ground_state_matches_oracle(grid127, oracles):
    g = grid127
    w, tr = relax_infty(g, make_signed(g, np.sin(2 * np.pi * g.axis())))
    assert tr.residual[-1] < 1e-6
    assert tr.energy[-1] == pytest.approx(oracles["O2_n127"]["energy"], abs=1e-4)


def test_trace_csv(grid63, rng):
    _, tr = relax_beta(random_pair(grid63, rng), 10.0, FlowConfig(max_steps=5))
    text = tr.to_csv("config_hash=x")
    lines = text.splitlines()
    assert lines[0] == "# config_hash=x"
    assert lines[1] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 2 + len(tr) == 2 + 6
