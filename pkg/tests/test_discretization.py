import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpseg.discretization import (
    Grid,
    GridMismatchError,
    SolverError,
    build_grid,
    conjugate_gradient,
    load_snapshot,
    save_snapshot,
)


@pytest.mark.parametrize(
    "dim, n, lengths, h, measure",
    [(1, 99, [1.0], 0.01, 1.0), (1, 3, [2.0], 0.5, 2.0), (2, 31, [1.0, 1.0], 1 / 32, 1.0)],
)
def test_build_grid_examples(dim, n, lengths, h, measure):
    g = build_grid(dim, n, lengths)
    assert g.h == pytest.approx(h, rel=1e-15)
    assert g.measure == measure
    assert g.shape == (n,) * dim


def test_measure_is_product_of_lengths():
    g = build_grid(2, 7, [0.5, 3.0])
    assert g.measure == 0.5 * 3.0
    assert g.spacing == (0.5 / 8, 3.0 / 8)


@pytest.mark.parametrize("n", [0, 1, 2])
def test_rejects_too_few_nodes(n):
    with pytest.raises(ValueError):
        build_grid(1, n, [1.0])


def test_rejects_bad_lengths_and_dimension():
    with pytest.raises(ValueError):
        build_grid(1, 9, [0.0])
    with pytest.raises(ValueError):
        Grid(3, 9, (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        build_grid(2, 9, [1.0])


def test_neg_laplacian_of_zero(grid63):
    assert np.array_equal(grid63.neg_laplacian(np.zeros(63)), np.zeros(63))


def test_neg_laplacian_eigenpair(grid127):
    g = grid127
    x = g.axis()
    f = np.sin(np.pi * x)
    lam = (2 - 2 * np.cos(np.pi * g.h)) / g.h**2
    assert np.allclose(g.neg_laplacian(f), lam * f, rtol=0, atol=1e-9)
    assert g.lambda_min == pytest.approx(lam, rel=1e-14)


def test_neg_laplacian_of_quadratic_is_two(grid63):
    x = grid63.axis()
    assert np.allclose(grid63.neg_laplacian(x * (1 - x)), 2.0, atol=1e-9)


def test_neg_laplacian_2d_separable(grid2d):
    g = grid2d
    X, Y = g.coordinates()
    f = np.sin(np.pi * X) * np.sin(2 * np.pi * Y)
    lam = sum((2 - 2 * np.cos(j * np.pi * g.h)) / g.h**2 for j in (1, 2))
    assert np.allclose(g.neg_laplacian(f), lam * f, atol=1e-9)


def test_solve_poisson_examples(grid127):
    g = grid127
    assert np.array_equal(g.solve_poisson(np.zeros(127)), np.zeros(127))
    f = np.sin(np.pi * g.axis())
    assert np.allclose(g.solve_poisson(g.lambda_min * f), f, atol=1e-12)


def test_roundtrip_1d_and_2d(grid63, grid2d, rng):
    for _ in range(20):
        f = rng.standard_normal(63)
        assert np.max(np.abs(grid63.solve_poisson(grid63.neg_laplacian(f)) - f)) <= 1e-10
    for _ in range(5):
        f = rng.standard_normal(grid2d.shape)
        assert np.max(np.abs(grid2d.solve_poisson(grid2d.neg_laplacian(f)) - f)) <= 1e-8


def test_solve_shifted_with_diag(grid63, rng):
    g = grid63
    d = rng.uniform(0, 5, 63)
    rhs = rng.standard_normal(63)
    x = g.solve_shifted(rhs, shift=1.0, scale=0.1, diag=d)
    assert np.allclose(x + 0.1 * g.neg_laplacian(x) + d * x, rhs, atol=1e-12)


def test_cg_failure_raises():
    A = np.diag(np.linspace(1, 1e6, 50))
    with pytest.raises(SolverError):
        conjugate_gradient(lambda x: A @ x, np.ones(50), rtol=1e-14, max_iter=3)


def test_inner_products(grid127):
    g = grid127
    x = g.axis()
    f = np.sqrt(2) * np.sin(np.pi * x)
    assert g.inner(f, np.zeros(127)) == 0.0
    f = f / g.norm(f)
    assert g.norm(f) == pytest.approx(1.0, abs=1e-15)
    assert g.h1_seminorm_sq(f) == pytest.approx(g.lambda_min, rel=1e-12)
    assert g.integral(np.ones(127)) == pytest.approx(127 * g.h)


def test_grid_mismatch(grid63, grid127):
    with pytest.raises(GridMismatchError):
        grid63.inner(np.zeros(63), np.zeros(127))
    with pytest.raises(GridMismatchError):
        grid127.neg_laplacian(np.zeros(63))


# squares of subnormal-range values underflow, which has nothing to do with the operator
fields = arrays(np.float64, 31, elements=st.floats(-1e3, 1e3).filter(lambda x: x == 0 or abs(x) > 1e-100))


@settings(max_examples=60, deadline=None)
@given(fields, fields)
def test_laplacian_symmetric(f, g_):
    g = build_grid(1, 31, [1.0])
    a = g.inner(g.neg_laplacian(f), g_)
    b = g.inner(f, g.neg_laplacian(g_))
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a), g.norm(f) * g.norm(g_) * g.lambda_max)


@settings(max_examples=60, deadline=None)
@given(fields)
def test_h1_nonnegative_and_poincare(f):
    g = build_grid(1, 31, [1.0])
    h1 = g.h1_seminorm_sq(f)
    assert h1 >= 0.0
    if np.any(f != 0):
        assert h1 > 0.0
        assert g.inner(f, f) <= h1 / g.lambda_min * (1 + 1e-12)


def test_snapshot_roundtrip_exact(tmp_path, rng):
    for g in (build_grid(1, 17, [2.5]), build_grid(2, 9, [1.0, 1.0])):
        f = rng.standard_normal(g.shape)
        path = tmp_path / f"f{g.dimension}.txt"
        save_snapshot(path, g, f, "config_hash=abc")
        lines = path.read_text().splitlines()
        assert lines[0] == "# config_hash=abc"
        assert lines[1].split()[:2] == [str(g.dimension), str(g.n)]
        g2, f2 = load_snapshot(path)
        assert g2 == g
        assert np.array_equal(f2, f)


def test_snapshot_size_mismatch(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 5 0.16666666666666666 1.0\n1.0\n2.0\n")
    with pytest.raises(ValueError):
        load_snapshot(path)
