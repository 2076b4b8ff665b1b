"""One-dimensional linear parabolic machinery.

Generator discretization, a fully implicit backward time-stepper for
(d_t + L)phi + c*phi = s, and full backward sweeps.  Central differences
at interior nodes; at the two edge nodes of the lattice the second
derivative is dropped (linear extrapolation) and the first derivative is
one-sided.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .model import Grid, ProblemSpec

__all__ = ["GridField", "KernelError", "PecletWarning", "apply_generator",
           "step_backward", "solve_linear_pde", "dx_profile", "dxx_profile"]


class KernelError(RuntimeError):
    """Tridiagonal solve failed."""


class PecletWarning(UserWarning):
    """Advection dominates diffusion at the grid scale; central
    differencing may oscillate."""


@dataclass
class GridField:
    """A function of (t, x) sampled on the lattice: values[j, i] is the
    value at time slice j and node i."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.times), self.grid.n_x):
            raise ValueError("field shape does not match grid")

    @classmethod
    def full(cls, grid: Grid, T: float, fill) -> "GridField":
        times = grid.times(T)
        vals = np.empty((grid.n_t + 1, grid.n_x))
        vals[:] = fill
        return cls(grid, times, vals)

    def copy(self) -> "GridField":
        return GridField(self.grid, self.times.copy(), self.values.copy())

    def slice_at(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times - t)))
        return self.values[j]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def dx_profile(values: np.ndarray, dx: float) -> np.ndarray:
    """First spatial derivative, central inside, one-sided at the edges."""
    out = np.empty_like(values)
    out[..., 1:-1] = (values[..., 2:] - values[..., :-2]) / (2 * dx)
    out[..., 0] = (values[..., 1] - values[..., 0]) / dx
    out[..., -1] = (values[..., -1] - values[..., -2]) / dx
    return out


def dxx_profile(values: np.ndarray, dx: float) -> np.ndarray:
    """Second spatial derivative, central inside, zero at the edges
    (linear extrapolation)."""
    out = np.zeros_like(values)
    out[..., 1:-1] = (values[..., 2:] - 2 * values[..., 1:-1] + values[..., :-2]) / dx ** 2
    return out


def _coefficients(spec: ProblemSpec, grid: Grid, t: float):
    x = grid.nodes
    b = np.asarray(spec.drift(t, x), dtype=float)
    sig2 = np.asarray(spec.diffusion(t, x), dtype=float) ** 2
    return b, sig2


def apply_generator(spec: ProblemSpec, slice_values: np.ndarray, t: float,
                    grid: Grid) -> np.ndarray:
    """(L phi)(t, .) = 1/2 sigma^2 phi_xx + b phi_x on the lattice."""
    b, sig2 = _coefficients(spec, grid, t)
    dx = grid.dx
    return 0.5 * sig2 * dxx_profile(slice_values, dx) + b * dx_profile(slice_values, dx)


def _generator_bands(spec: ProblemSpec, grid: Grid, t: float):
    """Tridiagonal bands (sub, diag, sup) of L.

    Edge rows drop the second derivative and use a one-sided first
    difference toward the interior.
    """
    b, sig2 = _coefficients(spec, grid, t)
    dx = grid.dx
    n = grid.n_x
    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    # interior rows
    d = 0.5 * sig2[1:-1] / dx ** 2
    a = b[1:-1] / (2 * dx)
    sub[1:-1] = d - a
    diag[1:-1] = -2 * d
    sup[1:-1] = d + a
    # edge rows: no diffusion term, one-sided drift
    diag[0] = -b[0] / dx
    sup[0] = b[0] / dx
    diag[-1] = b[-1] / dx
    sub[-1] = -b[-1] / dx
    if np.any(np.abs(b) * dx > sig2):
        warnings.warn("grid Peclet number exceeds 1: |b|*dx > sigma^2",
                      PecletWarning, stacklevel=3)
    return sub, diag, sup


def step_backward(spec: ProblemSpec, slice_next: np.ndarray, t: float,
                  zero_order: np.ndarray | float, source: np.ndarray | float,
                  dt: float, grid: Grid) -> np.ndarray:
    """One fully implicit backward step of (d_t + L)phi + c*phi = s.

    Solves (I - dt*(L + diag(c))) phi(t) = phi(t+dt) - dt*s, with L and c
    evaluated at the new (earlier) time t.
    """
    if dt <= 0:
        raise KernelError(f"step_backward needs dt > 0, got {dt}")
    n = grid.n_x
    c = np.broadcast_to(np.asarray(zero_order, dtype=float), (n,))
    s = np.broadcast_to(np.asarray(source, dtype=float), (n,))
    sub, diag, sup = _generator_bands(spec, grid, t)
    ab = np.zeros((3, n))
    ab[0, 1:] = -dt * sup[:-1]
    ab[1] = 1.0 - dt * (diag + c)
    ab[2, :-1] = -dt * sub[1:]
    rhs = slice_next - dt * s
    if grid.boundary_kind == "value-clamped-to-f":
        fb = spec.reward_on(grid.nodes)
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
        rhs = rhs.copy()
        rhs[0] = fb[0]
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        rhs[-1] = fb[-1]
    try:
        out = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as e:  # pragma: no cover - scipy raises ValueError mostly
        raise KernelError(f"singular tridiagonal system at dt={dt}") from e
    if not np.all(np.isfinite(out)):
        raise KernelError(f"singular tridiagonal system at dt={dt}")
    return out


def solve_linear_pde(spec: ProblemSpec, terminal: np.ndarray,
                     zero_order: GridField | np.ndarray | float = 0.0,
                     source: GridField | np.ndarray | float = 0.0,
                     grid: Grid | None = None) -> GridField:
    """Backward sweep from t=T to 0 of (d_t + L)phi + c*phi = s.

    zero_order and source may be GridFields (time-varying) or constants.
    """
    if grid is None:
        for arg in (zero_order, source):
            if isinstance(arg, GridField):
                grid = arg.grid
                break
    if grid is None:
        raise KernelError("solve_linear_pde needs a grid")
    T = spec.horizon
    times = grid.times(T)
    dt = T / grid.n_t
    values = np.empty((grid.n_t + 1, grid.n_x))
    values[-1] = np.asarray(terminal, dtype=float)

    def at(arg, j):
        if isinstance(arg, GridField):
            return arg.values[j]
        return arg

    for j in range(grid.n_t - 1, -1, -1):
        values[j] = step_backward(spec, values[j + 1], times[j], at(zero_order, j),
                                  at(source, j), dt, grid)
    return GridField(grid, times, values)
