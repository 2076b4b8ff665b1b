"""The vanishing-regularization limit.

Two independent routes to the limiting system:

  * a ladder of regularized solves with decreasing entropy weight,
    warm-started rung to rung;
  * a direct backward projected scheme for the variational-inequality
    system, with obstacle psi = f - (gamma/2)(f - g)^2 and the hard reset
    g = f on the stopped region.

Plus free-boundary extraction, the boundary jump inequality check, and
residuals for general (Bregman-gap) objectives.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import GeneralObjective, Grid, ProblemSpec
from .hjb_regularized import HJBSolution, solve_extended_hjb
from .pde_kernel import GridField, apply_generator, dx_profile, step_backward

__all__ = ["VISolution", "ContinuationLadder", "lambda_continuation", "solve_vi",
           "extract_boundary", "check_boundary_inequality", "general_g_residual",
           "continuation_elliptic_residual"]

BIND_TOL = 1e-12


@dataclass
class VISolution:
    value: GridField        # V
    mean_reward: GridField  # g
    h: GridField            # V - (gamma/2) g^2
    stop_mask: np.ndarray   # bool, (n_t+1, n_x); True where the obstacle binds
    boundary: list          # per time slice, increasing crossing locations
    kappa: float
    mask_converged: bool

    @property
    def grid(self) -> Grid:
        return self.value.grid


@dataclass
class ContinuationLadder:
    lambdas: list
    solutions: list          # HJBSolution per rung
    gaps: list = field(default_factory=list)  # sup|V_i - V_{i+1}| per consecutive pair


def lambda_continuation(spec: ProblemSpec, grid: Grid, lambdas,
                        fp_tol: float = 1e-7, fp_max_iter: int = 60,
                        damping: float = 1.0) -> ContinuationLadder:
    """Solve the regularized system along a strictly decreasing lambda ladder,
    warm-starting each fixed point from the previous rung."""
    lambdas = [float(l) for l in lambdas]
    if any(l <= 0 for l in lambdas):
        raise ValueError("ladder lambdas must be positive")
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("ladder lambdas must be strictly decreasing")
    sols = []
    warm = None
    for lam in lambdas:
        sol = solve_extended_hjb(spec.with_lambda(lam), grid, fp_tol=fp_tol,
                                 fp_max_iter=fp_max_iter, damping=damping,
                                 warm_start=warm)
        sols.append(sol)
        warm = sol.mean_reward
    gaps = [float(np.max(np.abs(a.value.values - b.value.values)))
            for a, b in zip(sols, sols[1:])]
    return ContinuationLadder(lambdas, sols, gaps)


def solve_vi(spec: ProblemSpec, grid: Grid, max_inner: int = 50) -> VISolution:
    """Backward projected scheme for the limiting system.

    Per time step, iterate to a within-step fixed point: implicit V step
    sourced by kappa*|sigma dx g|^2, implicit g step, obstacle projection
    with the stopped-node reset g = f, until the stop mask is unchanged.
    """
    f = spec.reward_on(grid.nodes)
    gamma, kappa = spec.gamma, spec.kappa
    T = spec.horizon
    dt = T / grid.n_t
    times = grid.times(T)
    x = grid.nodes
    n_t, n_x = grid.n_t, grid.n_x

    V = np.empty((n_t + 1, n_x))
    g = np.empty((n_t + 1, n_x))
    mask = np.zeros((n_t + 1, n_x), dtype=bool)
    V[-1] = f
    g[-1] = f
    mask[-1] = True  # terminal slice: obstacle binds by construction
    all_converged = True

    for j in range(n_t - 1, -1, -1):
        sig = np.asarray(spec.diffusion(times[j], x), dtype=float)
        g_pde = step_backward(spec, g[j + 1], times[j], 0.0, 0.0, dt, grid)
        m = mask[j + 1].copy()
        converged = False
        for _ in range(max_inner):
            g_cur = np.where(m, f, g_pde)
            grad_term = kappa * (sig * dx_profile(g_cur, grid.dx)) ** 2
            V_pde = step_backward(spec, V[j + 1], times[j], 0.0, grad_term, dt, grid)
            psi = f - 0.5 * gamma * (f - g_cur) ** 2
            m_new = V_pde <= psi + BIND_TOL
            if np.array_equal(m_new, m):
                converged = True
                break
            m = m_new
        all_converged = all_converged and converged
        g_cur = np.where(m, f, g_pde)
        psi = f - 0.5 * gamma * (f - g_cur) ** 2
        V[j] = np.maximum(V_pde, psi)
        g[j] = g_cur
        mask[j] = m

    value = GridField(grid, times, V)
    mean = GridField(grid, times, g)
    h = GridField(grid, times, V - 0.5 * gamma * g ** 2)
    sol = VISolution(value=value, mean_reward=mean, h=h, stop_mask=mask,
                     boundary=[], kappa=kappa, mask_converged=all_converged)
    sol.boundary = extract_boundary(sol, spec)
    return sol


def obstacle_residual(sol: VISolution, spec: ProblemSpec) -> np.ndarray:
    """V + (gamma/2)(f - g)^2 - f on every node; zero where the obstacle
    binds, positive in the continuation region."""
    f = spec.reward_on(sol.grid.nodes)
    return sol.value.values + 0.5 * spec.gamma * (f - sol.mean_reward.values) ** 2 - f


def _crossings(x: np.ndarray, r: np.ndarray) -> list[float]:
    """Sign-change locations of r along x, linearly interpolated.  Exact
    zeros count as the nonpositive side."""
    out = []
    neg = r <= 0.0
    for i in range(len(r) - 1):
        if neg[i] != neg[i + 1]:
            denom = r[i] - r[i + 1]
            frac = 0.5 if denom == 0 else r[i] / denom
            out.append(float(x[i] + frac * (x[i + 1] - x[i])))
    return out


def extract_boundary(sol: VISolution, spec: ProblemSpec) -> list[list[float]]:
    """Per time slice, the interpolated sign-change locations of the
    obstacle residual, in increasing x.  Binding nodes (residual ~ 0 at
    floating point scale) count as the stopped side."""
    res = obstacle_residual(sol, spec)
    scale = max(1.0, float(np.max(np.abs(sol.value.values))))
    x = sol.grid.nodes
    out = []
    for j in range(res.shape[0]):
        r = res[j].copy()
        r[np.abs(r) <= 1e-10 * scale] = 0.0
        if np.all(r > 0):
            out.append([])
        else:
            out.append(_crossings(x, r))
    return out


def _one_sided_quantities(sol: VISolution, spec: ProblemSpec, j: int, xb: float,
                          stencil: int = 3):
    """One-sided (d_t + L)V and dx g on each side of a boundary point."""
    grid = sol.grid
    x = grid.nodes
    dx = grid.dx
    dt = spec.horizon / grid.n_t
    i = int(np.searchsorted(x, xb))
    if i < stencil or i > grid.n_x - stencil:
        raise ValueError("boundary point too close to the domain edge for "
                         "one-sided stencils")
    out = {}
    for side, idx in (("-", np.arange(i - stencil, i)), ("+", np.arange(i, i + stencil))):
        V = sol.value.values
        g = sol.mean_reward.values
        xs = x[idx]
        # quadratic fit on each side gives one-sided first/second derivatives at xb
        cV = np.polyfit(xs - xb, V[j, idx], 2)
        cg = np.polyfit(xs - xb, g[j, idx], 2)
        dV, ddV = cV[1], 2 * cV[0]
        dg = cg[1]
        # one-sided time derivative away from the terminal slice
        if j + 1 <= grid.n_t:
            vt_now = np.polyval(cV, 0.0)
            cV_next = np.polyfit(xs - xb, V[j + 1, idx], 2)
            dtV = (np.polyval(cV_next, 0.0) - vt_now) / dt
        else:
            dtV = 0.0
        b = float(spec.drift(sol.value.times[j], xb))
        sig = float(spec.diffusion(sol.value.times[j], xb))
        out[side] = {
            "dt_plus_L_V": dtV + 0.5 * sig ** 2 * ddV + b * dV,
            "dx_g": float(dg),
        }
    return out


def check_boundary_inequality(sol: VISolution, spec: ProblemSpec, t: float,
                              tol: float = 1e-8) -> list[dict]:
    """Boundary jump inequality at every boundary point of the slice
    nearest t:

        (d_t+L)V(x+) + (d_t+L)V(x-) <= gamma sigma^2 ((dx g(x+)+dx g(x-))/2)^2.

    Also reports the variant with gamma replaced by 2*kappa for audit.
    """
    grid = sol.grid
    times = sol.value.times
    j = int(np.argmin(np.abs(times - t)))
    reports = []
    for xb in sol.boundary[j]:
        q = _one_sided_quantities(sol, spec, j, xb)
        lhs = q["+"]["dt_plus_L_V"] + q["-"]["dt_plus_L_V"]
        sig2 = float(spec.diffusion(times[j], xb)) ** 2
        avg_dg = 0.5 * (q["+"]["dx_g"] + q["-"]["dx_g"])
        rhs = spec.gamma * sig2 * avg_dg ** 2
        rhs_kappa = 2.0 * sol.kappa * sig2 * avg_dg ** 2
        reports.append({
            "t": float(times[j]),
            "x": xb,
            "lhs": float(lhs),
            "rhs": float(rhs),
            "rhs_kappa_convention": float(rhs_kappa),
            "pass": bool(lhs <= rhs + tol),
            "one_sided": q,
        })
    return reports


def general_g_residual(value: GridField, mean_reward: GridField,
                       obj: GeneralObjective, spec: ProblemSpec,
                       grid: Grid) -> dict:
    """Residual fields for the general objective E[f] + G(E[k]).

    delta_G = G(k) - G(g) - G'(g)(k - g) is the Bregman gap; the obstacle
    residual is V + delta_G - (f + G(k)); the drift correction is
    H_G(g) = -1/2 G''(g) |sigma dx g|^2, and the interior residual
    (d_t+L)V + H_G(g) is reported on the continuation region.
    """
    f = spec.reward_on(grid.nodes)
    k = np.asarray(obj.k(0.0, grid.nodes), dtype=float)
    g = mean_reward.values
    V = value.values
    delta = obj.G(k) - obj.G(g) - obj.dG(g) * (k - g)
    obstacle = V + delta - (f + obj.G(k))
    times = value.times
    dt = spec.horizon / grid.n_t
    x = grid.nodes
    interior = np.full_like(V, np.nan)
    hg = np.empty_like(V)
    for j in range(grid.n_t + 1):
        sig = np.asarray(spec.diffusion(times[j], x), dtype=float)
        hg[j] = -0.5 * obj.d2G(g[j]) * (sig * dx_profile(g[j], grid.dx)) ** 2
        if 1 <= j <= grid.n_t - 1:
            dtV = (V[j + 1] - V[j - 1]) / (2 * dt)
            interior[j] = dtV + apply_generator(spec, V[j], times[j], grid) + hg[j]
    cont = obstacle > BIND_TOL
    return {
        "delta_G": delta,
        "obstacle_residual": obstacle,
        "drift_correction": hg,
        "interior_residual": interior,
        "continuation_mask": cont,
    }


def continuation_elliptic_residual(sol: VISolution, spec: ProblemSpec,
                                   x_window: tuple[float, float], t: float = 0.0,
                                   margin_nodes: int = 5) -> float:
    """Sup of |L V - (gamma/2)|sigma dx g|^2| at the slice nearest t over
    continuation nodes inside x_window, skipping nodes within margin_nodes
    of the free boundary.  For long horizons this measures agreement with
    the stationary system and discriminates the two gradient-term
    conventions."""
    grid = sol.grid
    times = sol.value.times
    j = int(np.argmin(np.abs(times - t)))
    x = grid.nodes
    sig = np.asarray(spec.diffusion(times[j], x), dtype=float)
    lv = apply_generator(spec, sol.value.values[j], times[j], grid)
    grad = (sig * dx_profile(sol.mean_reward.values[j], grid.dx)) ** 2
    res = lv - 0.5 * spec.gamma * grad
    cont = ~sol.stop_mask[j]
    # drop a few nodes around every mask transition (kink in g)
    edge = np.zeros_like(cont)
    trans = np.nonzero(cont[:-1] != cont[1:])[0]
    for i in trans:
        lo = max(0, i - margin_nodes + 1)
        hi = min(grid.n_x, i + margin_nodes + 1)
        edge[lo:hi] = True
    sel = cont & ~edge & (x >= x_window[0]) & (x <= x_window[1])
    sel[:margin_nodes] = False
    sel[-margin_nodes:] = False
    if not np.any(sel):
        return 0.0
    return float(np.max(np.abs(res[sel])))
