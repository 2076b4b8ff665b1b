"""Equilibrium certification by perturbation.

Regularized problem: at every node the equilibrium intensity pi*
maximizes v * A + lam * H(v) over v >= 0, where
A = f - (gamma/2) f^2 - h - gamma g^2 + gamma g f  (= f - V - (gamma/2)(f-g)^2)
and H(v) = v - v log v; the first-order gain of deviating to any probe v
is therefore nonpositive, and the check is analytic (no tolerance chase).
A Monte-Carlo counterpart perturbs the intensity to v on a short window
[t0, t0+eps] and estimates the Definition-2.2 rate on common random
numbers.  For the lambda = 0 limit, interior points are certified through
the affine-in-v rate of the variational inequality and boundary points
through the jump inequality.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hjb_regularized import HJBSolution
from .model import ProblemSpec
from .pde_kernel import GridField, apply_generator, dx_profile
from .simulate import MCConfig, estimate_objective, intensity_function, \
    sample_cox_stopping, simulate_paths
from .vi_limit import VISolution, check_boundary_inequality, \
    continuation_elliptic_residual

__all__ = ["PerturbationResult", "DEFAULT_PROBES",
           "analytic_perturbation_regularized", "mc_perturbation_regularized",
           "vi_interior_perturbation", "vi_boundary_perturbation",
           "certification_ok"]

DEFAULT_PROBES = (0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0)


@dataclass
class PerturbationResult:
    location: tuple          # (t, x) of the worst / probed node
    probe: float | str       # deviation intensity v (or a tag)
    gain: float              # first-order rate J(perturbed) - J(equilibrium)
    method: str              # "analytic" | "monte-carlo"
    tol: float
    passed: bool
    se: float = 0.0


def _H(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] - v[pos] * np.log(v[pos])
    return out


def analytic_perturbation_regularized(sol: HJBSolution, spec: ProblemSpec,
                                      probes=DEFAULT_PROBES,
                                      intensity: GridField | None = None,
                                      tol: float = 1e-8) -> list[PerturbationResult]:
    """One result per probe, each reporting the worst-node gain over the
    whole grid.  The probe set is augmented with the solution's own pi*
    field (gain exactly zero at equilibrium; strictly positive somewhere
    when `intensity` passes a corrupted candidate instead)."""
    grid = sol.grid
    f = spec.reward_on(grid.nodes)
    lam = sol.lam
    times = sol.value.times
    x = grid.nodes
    pi = (intensity.values if intensity is not None else sol.intensity.values)
    A = f - sol.value.values - 0.5 * spec.gamma * (f - sol.mean_reward.values) ** 2
    base = pi * A + lam * _H(pi)
    results = []
    candidates = [(float(v), np.full_like(pi, float(v))) for v in probes]
    candidates.append(("pi_star", sol.intensity.values))
    for tag, v in candidates:
        gain = v * A + lam * _H(v) - base
        j, i = np.unravel_index(int(np.argmax(gain)), gain.shape)
        worst = float(gain[j, i])
        results.append(PerturbationResult(
            location=(float(times[j]), float(x[i])), probe=tag, gain=worst,
            method="analytic", tol=tol, passed=worst <= tol))
    return results


def certification_ok(results: list[PerturbationResult]) -> bool:
    return all(r.passed for r in results)


def mc_perturbation_regularized(sol: HJBSolution, spec: ProblemSpec,
                                location: tuple, v: float, eps_list,
                                mc: MCConfig, tol_se: float = 3.0) -> list[PerturbationResult]:
    """Definition-2.2 rate by simulation: intensity v on [t0, t0+eps],
    pi* afterwards; reports (J^lam(perturbed) - J^lam(pi*)) / eps per eps
    with common random numbers.  passed means the gain rate does not
    exceed tol_se standard errors."""
    t0, x0 = location
    base_fn = intensity_function(sol.intensity)
    paths = simulate_paths(spec, t0, x0, mc)
    est_base = estimate_objective(sample_cox_stopping(paths, base_fn), spec,
                                  kind="conditional", lam=sol.lam)
    results = []
    for eps in eps_list:
        eps = float(eps)
        if eps <= 0 or t0 + eps > spec.horizon:
            raise ValueError("eps must lie in (0, T - t0]")

        def dev_fn(t, xx, _e=eps):
            if t < t0 + _e:
                return np.full_like(np.asarray(xx, dtype=float), v)
            return base_fn(t, xx)

        est_dev = estimate_objective(sample_cox_stopping(paths, dev_fn), spec,
                                     kind="conditional", lam=sol.lam)
        rate = (est_dev.objective.mean - est_base.objective.mean) / eps
        se = float(np.hypot(est_dev.objective.se, est_base.objective.se)) / eps
        results.append(PerturbationResult(
            location=(t0, x0), probe=float(v), gain=float(rate),
            method="monte-carlo", tol=tol_se * se, passed=rate <= tol_se * se,
            se=se))
    return results


def vi_interior_perturbation(sol: VISolution, spec: ProblemSpec,
                             points, t: float = 0.0,
                             probes=(0.0, 100.0), tol: float | None = None,
                             min_boundary_nodes: int = 3) -> list[PerturbationResult]:
    """First-order rate of the limiting system at interior sample points:

        rate(v) = (d_t+L)V - kappa |sigma dx g|^2 + v (f - (V + (gamma/2)(f-g)^2))

    The rate is affine in v with nonpositive slope (obstacle) and
    nonpositive intercept (interior equation), so the probe endpoints
    suffice.  Default tol is O(dx + dt).  Points within min_boundary_nodes
    nodes of a free-boundary crossing raise (use the boundary check there).
    """
    grid = sol.grid
    times = sol.value.times
    j = int(np.argmin(np.abs(times - t)))
    if j >= grid.n_t:
        raise ValueError("terminal slice has no interior rate")
    x = grid.nodes
    dx = grid.dx
    dt = spec.horizon / grid.n_t
    if tol is None:
        tol = 10.0 * (dx + dt)
    f = spec.reward_on(x)
    V = sol.value.values
    g = sol.mean_reward.values
    sig = np.asarray(spec.diffusion(times[j], x), dtype=float)
    dtV = (V[j + 1] - V[j]) / dt
    lv = apply_generator(spec, V[j], times[j], grid)
    grad = sol.kappa * (sig * dx_profile(g[j], dx)) ** 2
    slope = f - (V[j] + 0.5 * spec.gamma * (f - g[j]) ** 2)
    intercept = dtV + lv - grad
    results = []
    for xp in np.atleast_1d(points):
        i = int(np.argmin(np.abs(x - float(xp))))
        for xb in sol.boundary[j]:
            if abs(x[i] - xb) < min_boundary_nodes * dx:
                raise ValueError(f"point x={x[i]:.6g} is within {min_boundary_nodes} "
                                 "nodes of the free boundary; use the boundary check")
        for v in probes:
            rate = float(intercept[i] + v * slope[i])
            results.append(PerturbationResult(
                location=(float(times[j]), float(x[i])), probe=float(v),
                gain=rate, method="analytic", tol=tol, passed=rate <= tol))
    return results


def vi_boundary_perturbation(sol: VISolution, spec: ProblemSpec, t: float,
                             tol: float = 1e-8) -> list[PerturbationResult]:
    """Boundary jump inequality at every free-boundary point of the slice
    nearest t, wrapped as certification results."""
    reports = check_boundary_inequality(sol, spec, t, tol=tol)
    return [PerturbationResult(location=(r["t"], r["x"]), probe="boundary-jump",
                               gain=r["lhs"] - r["rhs"], method="analytic",
                               tol=tol, passed=r["pass"]) for r in reports]


def vi_interior_residual(sol: VISolution, spec: ProblemSpec,
                         x_window, t: float = 0.0, margin_nodes: int = 5) -> float:
    """Convenience re-export of the continuation-region elliptic residual."""
    return continuation_elliptic_residual(sol, spec, x_window, t=t,
                                          margin_nodes=margin_nodes)
