"""Discrete-time stopping game: backward recursion over N decision dates.

Each date's player stops when the immediate reward is at least the
mean-variance value of continuing; conditional expectations between
dates are computed with one implicit PDE step, so the recursion is
deterministic and reuses the kernel stencils.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Grid, ProblemSpec
from .pde_kernel import step_backward
from .vi_limit import VISolution

__all__ = ["DiscreteEquilibrium", "backward_recursion", "compare_to_vi"]


@dataclass
class DiscreteEquilibrium:
    grid: Grid
    times: np.ndarray
    dt: float
    U: np.ndarray              # continuation value per slice
    value: np.ndarray          # V
    mean_reward: np.ndarray    # g = E[f(X_tau)]
    second_moment: np.ndarray  # m = E[f^2(X_tau)]
    stop_mask: np.ndarray
    # max defect between the moment-form and the Var[g]-form of U
    recursion_identity_defect: float


def backward_recursion(spec: ProblemSpec, grid: Grid, n_steps: int) -> DiscreteEquilibrium:
    """Run the recursion with N = n_steps decision intervals on [0, T]."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    f = spec.reward_on(grid.nodes)
    gamma = spec.gamma
    T = spec.horizon
    dt = T / n_steps
    times = np.linspace(0.0, T, n_steps + 1)
    n_x = grid.n_x

    g = np.empty((n_steps + 1, n_x))
    m = np.empty((n_steps + 1, n_x))
    V = np.empty((n_steps + 1, n_x))
    U = np.empty((n_steps + 1, n_x))
    mask = np.zeros((n_steps + 1, n_x), dtype=bool)
    g[-1] = f
    m[-1] = f ** 2
    V[-1] = f
    U[-1] = f
    mask[-1] = True
    identity_defect = 0.0

    for i in range(n_steps - 1, -1, -1):
        Eg = step_backward(spec, g[i + 1], times[i], 0.0, 0.0, dt, grid)
        Em = step_backward(spec, m[i + 1], times[i], 0.0, 0.0, dt, grid)
        U[i] = Eg - 0.5 * gamma * (Em - Eg ** 2)
        # cross-check: the E[V] - (gamma/2)Var[g] form must agree (tower property)
        EV = step_backward(spec, V[i + 1], times[i], 0.0, 0.0, dt, grid)
        Eg2 = step_backward(spec, g[i + 1] ** 2, times[i], 0.0, 0.0, dt, grid)
        U_alt = EV - 0.5 * gamma * (Eg2 - Eg ** 2)
        identity_defect = max(identity_defect, float(np.max(np.abs(U[i] - U_alt))))
        stop = f >= U[i]  # stop on ties
        mask[i] = stop
        g[i] = np.where(stop, f, Eg)
        m[i] = np.where(stop, f ** 2, Em)
        V[i] = np.where(stop, f, U[i])

    return DiscreteEquilibrium(grid=grid, times=times, dt=dt, U=U, value=V,
                               mean_reward=g, second_moment=m, stop_mask=mask,
                               recursion_identity_defect=identity_defect)


def compare_to_vi(d: DiscreteEquilibrium, v: VISolution,
                  x_window: tuple[float, float] | None = None,
                  t_values: list[float] | None = None) -> dict:
    """Gap report between the discrete equilibrium and a VI solution on a
    shared spatial grid, with time slices aligned by nearest time."""
    if (d.grid.x_min, d.grid.x_max, d.grid.n_x) != (v.grid.x_min, v.grid.x_max, v.grid.n_x):
        raise ValueError("incompatible spatial grids")
    x = d.grid.nodes
    if x_window is None:
        sel = np.ones_like(x, dtype=bool)
    else:
        sel = (x >= x_window[0]) & (x <= x_window[1])
    if t_values is None:
        t_values = list(d.times)
    sup_v = sup_g = 0.0
    l2_v = l2_g = 0.0
    sym_diff = 0
    count = 0
    binding = []
    for t in t_values:
        i = int(np.argmin(np.abs(d.times - t)))
        j = int(np.argmin(np.abs(v.value.times - t)))
        dv = d.value[i, sel] - v.value.values[j, sel]
        dg = d.mean_reward[i, sel] - v.mean_reward.values[j, sel]
        sup_v = max(sup_v, float(np.max(np.abs(dv))))
        sup_g = max(sup_g, float(np.max(np.abs(dg))))
        l2_v += float(np.sum(dv ** 2))
        l2_g += float(np.sum(dg ** 2))
        sym_diff += int(np.count_nonzero(d.stop_mask[i, sel] != v.stop_mask[j, sel]))
        count += int(np.count_nonzero(sel))
        # the discrete game uses the obstacle V >= f, the limiting system
        # V + (gamma/2)(f-g)^2 >= f; their stop masks tell, per node,
        # which obstacle binds on each side of the comparison
        binding.append({
            "t": float(d.times[i]),
            "x": x[sel].copy(),
            "discrete_obstacle_binds": d.stop_mask[i, sel].copy(),
            "vi_obstacle_binds": v.stop_mask[j, sel].copy(),
        })
    return {
        "sup_value": sup_v,
        "sup_mean": sup_g,
        "l2_value": float(np.sqrt(l2_v / max(count, 1))),
        "l2_mean": float(np.sqrt(l2_g / max(count, 1))),
        "stop_mask_symmetric_difference": sym_diff,
        "obstacle_binding": binding,
    }
