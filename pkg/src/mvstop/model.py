"""Problem definition: coefficient functions, reward, parameters, grids.

The stopping problem is posed for a one-dimensional diffusion
dX = b(t,X)dt + sigma(t,X)dW on [0,T], reward f(x), risk aversion gamma,
and (for the regularized solvers) an entropy weight lam > 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "CoefficientSpec",
    "ProblemSpec",
    "GeneralObjective",
    "Grid",
    "ValidationReport",
    "build_grid",
    "evaluate_coefficient",
    "validate_problem",
]


class ModelError(ValueError):
    """Invalid problem or grid construction."""


@dataclass(frozen=True)
class CoefficientSpec:
    """A coefficient function of (t, x).

    kinds:
      constant   params=(v,)          -> v
      affine     params=(a, b)        -> a + b*x
      gbm        params=(c,)          -> c*x
      tabulated  table (n_t+1, n_x) sampled on table_grid with horizon table_T
    """

    kind: str
    params: tuple = ()
    table: np.ndarray | None = None
    table_grid: "Grid | None" = None
    table_T: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "gbm", "tabulated"):
            raise ModelError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.table is None or self.table_grid is None or self.table_T is None:
                raise ModelError("tabulated coefficient needs table, table_grid and table_T")
            tab = np.asarray(self.table, dtype=float)
            expect = (self.table_grid.n_t + 1, self.table_grid.n_x)
            if tab.shape != expect:
                raise ModelError(f"table shape {tab.shape} does not match grid {expect}")
            object.__setattr__(self, "table", tab)
        else:
            n_expected = {"constant": 1, "affine": 2, "gbm": 1}[self.kind]
            if len(self.params) != n_expected:
                raise ModelError(f"kind {self.kind!r} takes {n_expected} parameter(s)")
            object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.params[0])
        if self.kind == "affine":
            a, b = self.params
            return a + b * x
        if self.kind == "gbm":
            return self.params[0] * x
        return self._lookup(t, x)

    def _lookup(self, t, x):
        g = self.table_grid
        nodes = g.nodes
        dt = self.table_T / g.n_t
        j = int(round(float(t) / dt))
        if not (0 <= j <= g.n_t) or abs(float(t) - j * dt) > 1e-9 * max(1.0, self.table_T):
            raise ModelError(f"tabulated coefficient has no time slice at t={t}")
        idx = np.rint((np.atleast_1d(x) - g.x_min) / g.dx - 1.0).astype(int)
        ok = (idx >= 0) & (idx < g.n_x)
        if not np.all(ok):
            raise ModelError("tabulated coefficient lookup outside the grid")
        if not np.allclose(nodes[idx], np.atleast_1d(x), rtol=0, atol=1e-9 * max(1.0, g.x_max - g.x_min)):
            raise ModelError("tabulated coefficient evaluated off the grid nodes")
        out = self.table[j, idx]
        return out.reshape(np.shape(x)) if np.shape(x) else float(out[0])


def evaluate_coefficient(c: CoefficientSpec, t: float, x) -> np.ndarray | float:
    """Evaluate a coefficient at (t, x); pure and deterministic."""
    out = c(t, x)
    if np.ndim(x) == 0:
        return float(np.asarray(out))
    return out


def constant(v: float) -> CoefficientSpec:
    return CoefficientSpec("constant", (v,))


def affine(a: float, b: float) -> CoefficientSpec:
    return CoefficientSpec("affine", (a, b))


def gbm(c: float) -> CoefficientSpec:
    return CoefficientSpec("gbm", (c,))


@dataclass(frozen=True)
class Grid:
    """Uniform interior lattice on (x_min, x_max) with n_t time steps.

    Spatial nodes are the n_x interior points x_min + (i+1)*dx with
    dx = (x_max - x_min)/(n_x + 1); the time step is T/n_t with T taken
    from the problem it is used with.
    """

    x_min: float
    x_max: float
    n_x: int
    n_t: int
    boundary_kind: str = "linear-extrapolation"

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ModelError("grid requires x_min < x_max")
        if self.n_x < 3:
            raise ModelError("grid requires n_x >= 3")
        if self.n_t < 1:
            raise ModelError("grid requires n_t >= 1")
        if self.boundary_kind not in ("linear-extrapolation", "value-clamped-to-f"):
            raise ModelError(f"unknown boundary kind {self.boundary_kind!r}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_x) + 1.0) * self.dx

    def times(self, T: float) -> np.ndarray:
        return np.linspace(0.0, T, self.n_t + 1)


def build_grid(x_min: float, x_max: float, n_x: int, n_t: int,
               boundary_kind: str = "linear-extrapolation") -> Grid:
    return Grid(float(x_min), float(x_max), int(n_x), int(n_t), boundary_kind)


@dataclass(frozen=True)
class ProblemSpec:
    """The mean-variance stopping problem data."""

    drift: CoefficientSpec
    diffusion: CoefficientSpec
    reward: CoefficientSpec  # function of x only; evaluated with t=0
    gamma: float
    lam: float
    horizon: float
    dimension: int = 1
    variance_factor: str = "half"  # "half" -> gamma/2, "full" -> gamma

    def __post_init__(self):
        if self.variance_factor not in ("half", "full"):
            raise ModelError("variance_factor must be 'half' or 'full'")

    @property
    def kappa(self) -> float:
        """Coefficient of |sigma dx g|^2 in the value equation."""
        return self.gamma / 2.0 if self.variance_factor == "half" else self.gamma

    def reward_on(self, x) -> np.ndarray:
        return np.asarray(self.reward(0.0, x), dtype=float)

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return ProblemSpec(self.drift, self.diffusion, self.reward, self.gamma,
                           lam, self.horizon, self.dimension, self.variance_factor)


@dataclass(frozen=True)
class GeneralObjective:
    """A nonlinear objective E[f] + G(E[k]) with G twice differentiable."""

    G: Callable[[np.ndarray], np.ndarray]
    dG: Callable[[np.ndarray], np.ndarray]
    d2G: Callable[[np.ndarray], np.ndarray]
    k: CoefficientSpec


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)


def validate_problem(spec: ProblemSpec, grid: Grid, for_solver: bool = True,
                     c_min: float = 0.0) -> ValidationReport:
    """Check the standing assumptions on the grid; violations are reported,
    never raised."""
    rep = ValidationReport()
    if spec.horizon <= 0:
        rep.add("horizon must be positive")
    if spec.gamma < 0:
        rep.add("risk aversion must be nonnegative")
    if spec.lam <= 0:
        rep.add("regularization weight must be positive")
    if for_solver and spec.dimension != 1:
        rep.add("solver requires d=1")
    nodes = grid.nodes
    try:
        sig2_min = np.inf
        for t in grid.times(max(spec.horizon, 1e-300)):
            sig2 = np.asarray(spec.diffusion(t, nodes), dtype=float) ** 2
            sig2_min = min(sig2_min, float(sig2.min()))
        if sig2_min <= c_min:
            rep.add("degenerate diffusion: sigma^2 not uniformly positive on the grid")
    except ModelError as e:
        rep.add(f"diffusion not evaluable on the grid: {e}")
    for name, c in (("drift", spec.drift), ("reward", spec.reward)):
        try:
            vals = np.asarray(c(0.0, nodes), dtype=float)
            if not np.all(np.isfinite(vals)):
                rep.add(f"{name} takes non-finite values on the grid")
        except ModelError as e:
            rep.add(f"{name} not evaluable on the grid: {e}")
    return rep
