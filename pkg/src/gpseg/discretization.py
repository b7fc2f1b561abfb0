"""Uniform Dirichlet grids on intervals and rectangles.

Fields are plain numpy arrays holding the interior node values, shaped
``(n,)`` in 1D and ``(n, n)`` in 2D.  The boundary trace is implicitly zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg.lapack import dgtsv

CG_RTOL = 1e-12


class SolverError(RuntimeError):
    """Raised when an iterative linear solve fails to converge."""


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dimension: int
    n: int
    lengths: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.n < 3:
            raise ValueError(f"n must be >= 3 for the 3-point stencil, got {self.n}")
        if len(self.lengths) != self.dimension:
            raise ValueError("need one length per axis")
        if any(not np.isfinite(L) or L <= 0 for L in self.lengths):
            raise ValueError(f"lengths must be positive, got {self.lengths}")
        spacing = tuple(L / (self.n + 1) for L in self.lengths)
        # cached constants for the hot loops; the dataclass stays frozen
        object.__setattr__(self, "_spacing", spacing)
        object.__setattr__(self, "_cell_volume", float(np.prod(spacing)))
        object.__setattr__(self, "_shape", (self.n,) * self.dimension)

    @property
    def spacing(self) -> tuple[float, ...]:
        return self._spacing

    @property
    def h(self) -> float:
        return self.spacing[0]

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def cell_volume(self) -> float:
        return self._cell_volume

    @property
    def shape(self) -> tuple[int, ...]:
        return self._shape

    @property
    def size(self) -> int:
        return self.n**self.dimension

    def axis(self, i: int = 0) -> np.ndarray:
        """Interior node coordinates along axis ``i``."""
        return self.spacing[i] * np.arange(1, self.n + 1)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        if self.dimension == 1:
            return (self.axis(0),)
        return tuple(np.meshgrid(self.axis(0), self.axis(1), indexing="ij"))

    @property
    def lambda_min(self) -> float:
        """Smallest eigenvalue of the discrete Dirichlet Laplacian."""
        return sum(_axis_eigenvalue(h, L, 1) for h, L in zip(self.spacing, self.lengths))

    @property
    def lambda_max(self) -> float:
        return sum(_axis_eigenvalue(h, L, self.n) for h, L in zip(self.spacing, self.lengths))

    def describe(self) -> str:
        return f"{self.dimension} {self.n} {self.h!r} {self.measure!r}"

    def check(self, f: np.ndarray) -> np.ndarray:
        if f.__class__ is not np.ndarray or f.dtype != np.float64:
            f = np.asarray(f, dtype=float)
        if f.shape != self._shape:
            raise GridMismatchError(f"field of shape {f.shape} does not live on grid {self.shape}")
        return f

    # Operators

    def neg_laplacian(self, f: np.ndarray) -> np.ndarray:
        f = self.check(f)
        if self.dimension == 1:
            c = 1.0 / self._spacing[0] ** 2
            out = (2.0 * c) * f
            out[1:] -= c * f[:-1]
            out[:-1] -= c * f[1:]
            return out
        out = np.zeros_like(f)
        for ax, h in enumerate(self._spacing):
            out += 2.0 * f / h**2
            lo = [slice(None)] * self.dimension
            hi = [slice(None)] * self.dimension
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            out[tuple(hi)] -= f[tuple(lo)] / h**2
            out[tuple(lo)] -= f[tuple(hi)] / h**2
        return out

    def solve_shifted(self, rhs: np.ndarray, shift: float = 0.0, scale: float = 1.0,
                      diag: np.ndarray | None = None) -> np.ndarray:
        """Solve ``(shift + diag + scale * (-Laplacian)) x = rhs``.

        ``diag`` is an optional nonnegative nodewise term.  1D uses a banded
        direct solve, 2D unpreconditioned conjugate gradients.
        """
        rhs = self.check(rhs)
        if self.dimension == 1:
            h2 = self._spacing[0] ** 2
            main = np.full(self.n, shift + 2.0 * scale / h2)
            if diag is not None:
                main += diag
            off = np.full(self.n - 1, -scale / h2)
            *_, x, info = dgtsv(off, main, off.copy(), rhs)
            if info != 0:
                raise SolverError(f"tridiagonal solve failed (info={info})")
            return x

        def op(x):
            y = scale * self.neg_laplacian(x) + shift * x
            if diag is not None:
                y += diag * x
            return y

        return conjugate_gradient(op, rhs)

    def solve_poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the inverse Dirichlet Laplacian."""
        return self.solve_shifted(rhs)

    # Inner products and norms

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        f, g = self.check(f), self.check(g)
        if self.dimension == 1:
            return self._cell_volume * float(f @ g)
        return self._cell_volume * float(np.vdot(f, g))

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def h1_seminorm_sq(self, f: np.ndarray) -> float:
        return self.inner(f, self.neg_laplacian(f))

    def h1_norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.h1_seminorm_sq(f), 0.0)))

    def integral(self, f: np.ndarray) -> float:
        return self.cell_volume * float(np.sum(self.check(f)))


def _axis_eigenvalue(h: float, L: float, j: int) -> float:
    return (2.0 - 2.0 * np.cos(j * np.pi * h / L)) / h**2


def build_grid(dimension: int, n: int, lengths) -> Grid:
    lengths = tuple(float(L) for L in np.atleast_1d(lengths))
    return Grid(dimension, int(n), lengths)


def conjugate_gradient(op, rhs: np.ndarray, rtol: float = CG_RTOL, max_iter: int | None = None) -> np.ndarray:
    b_norm = float(np.linalg.norm(rhs))
    x = np.zeros_like(rhs)
    if b_norm == 0.0:
        return x
    if max_iter is None:
        max_iter = 10 * rhs.size
    r = rhs.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    for _ in range(max_iter):
        ap = op(p)
        alpha = rs / float(np.sum(p * ap))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= rtol * b_norm:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolverError(f"CG did not reach relative residual {rtol:g} in {max_iter} iterations")


# Snapshot files

def save_snapshot(path, grid: Grid, f: np.ndarray, header_comment: str | None = None) -> None:
    f = grid.check(f)
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append(grid.describe())
    lines.extend(repr(float(x)) for x in f.ravel(order="C"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_snapshot(path) -> tuple[Grid, np.ndarray]:
    rows = [ln.strip() for ln in Path(path).read_text().splitlines()]
    rows = [ln for ln in rows if ln and not ln.startswith("#")]
    dim_s, n_s, h_s, measure_s = rows[0].split()
    dim, n, h, measure = int(dim_s), int(n_s), float(h_s), float(measure_s)
    if dim == 1:
        lengths = (measure,)
    else:
        side = h * (n + 1)
        if np.isclose(side * side, measure, rtol=1e-12):
            side = float(np.sqrt(measure))
        lengths = (side, measure / side)
    grid = Grid(dim, n, lengths)
    values = np.array([float(x) for x in rows[1:]])
    if values.size != grid.size:
        raise ValueError(f"snapshot has {values.size} values, grid needs {grid.size}")
    return grid, values.reshape(grid.shape)
