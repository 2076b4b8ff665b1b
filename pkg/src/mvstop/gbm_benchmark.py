"""Closed-form infinite-horizon benchmark for geometric Brownian motion
with reward f(x) = x.

With rho = 2*mu/sigma^2 in (0, 1/2) the equilibrium threshold is
threshold = 2*rho/(gamma*(1-rho)); below it

    V(x) = (1 - (gamma/2) b) b^rho x^(1-rho) + (gamma/2) b^(2 rho) x^(2-2 rho),
    g(x) = b^rho x^(1-rho),

and V(x) = g(x) = x at and above it.  All derivatives are available in
closed form, which makes this the ground-truth oracle for the numerical
solvers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GBMClosedForm", "closed_form_eval", "verify_elliptic_system",
           "boundary_jump_quantities"]


@dataclass(frozen=True)
class GBMClosedForm:
    mu: float
    sigma_sq: float
    gamma: float

    def __post_init__(self):
        rho = self.rho
        if not 0.0 < rho < 0.5:
            raise ValueError(f"requires rho = 2*mu/sigma^2 in (0, 1/2); got {rho}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def rho(self) -> float:
        return 2.0 * self.mu / self.sigma_sq

    @property
    def threshold(self) -> float:
        return 2.0 * self.rho / (self.gamma * (1.0 - self.rho))

    # branch coefficients
    @property
    def _c1(self) -> float:
        b = self.threshold
        return (1.0 - 0.5 * self.gamma * b) * b ** self.rho

    @property
    def _c2(self) -> float:
        return 0.5 * self.gamma * self.threshold ** (2.0 * self.rho)


def closed_form_eval(cf: GBMClosedForm, x):
    """(V, g) at x > 0; vectorized."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("closed form requires x > 0")
    rho, b = cf.rho, cf.threshold
    below = x < b
    V = np.where(below, cf._c1 * x ** (1 - rho) + cf._c2 * x ** (2 - 2 * rho), x)
    g = np.where(below, b ** rho * x ** (1 - rho), x)
    if V.ndim == 0:
        return float(V), float(g)
    return V, g


def _generator(cf: GBMClosedForm, x, d1, d2):
    return 0.5 * cf.sigma_sq * x ** 2 * d2 + cf.mu * x * d1


def derivatives_below(cf: GBMClosedForm, x):
    """dV, ddV, dg on the continuation branch x < threshold."""
    x = np.asarray(x, dtype=float)
    rho, b = cf.rho, cf.threshold
    dV = (1 - rho) * cf._c1 * x ** (-rho) + (2 - 2 * rho) * cf._c2 * x ** (1 - 2 * rho)
    ddV = (-rho) * (1 - rho) * cf._c1 * x ** (-rho - 1) \
        + (2 - 2 * rho) * (1 - 2 * rho) * cf._c2 * x ** (-2 * rho)
    dg = (1 - rho) * b ** rho * x ** (-rho)
    return dV, ddV, dg


def kappa_function(cf: GBMClosedForm, z):
    """The auxiliary function whose monotonicity on [1, inf) proves the
    strict obstacle margin below the threshold."""
    rho, b = cf.rho, cf.threshold
    z = np.asarray(z, dtype=float)
    return 0.5 * cf.gamma * b * z ** (2 * rho - 1) + (1 - 0.5 * cf.gamma * b) * z ** rho


def verify_elliptic_system(cf: GBMClosedForm, x_grid, tol: float = 1e-10) -> dict:
    """Analytic residual checks of the stationary system on a grid of
    positive points.

    Continuation branch: L V - (gamma/2)|sigma x dx g|^2 and L g both
    vanish; stopped branch: L V - (gamma/2) sigma^2 x^2 <= 0; below the
    threshold the obstacle V + (gamma/2)(x - g)^2 - x is strictly positive.
    """
    x = np.asarray(x_grid, dtype=float)
    if np.any(x <= 0):
        raise ValueError("grid must avoid x <= 0")
    rho, b = cf.rho, cf.threshold
    below = x < b
    out = {"tol": tol}

    xb = x[below]
    if xb.size:
        dV, ddV, dg = derivatives_below(cf, xb)
        rv = _generator(cf, xb, dV, ddV) - 0.5 * cf.gamma * (np.sqrt(cf.sigma_sq) * xb * dg) ** 2
        dgb = (1 - rho) * b ** rho * xb ** (-rho)
        rg = _generator(cf, xb, dgb, -rho * (1 - rho) * b ** rho * xb ** (-rho - 1))
        V, g = closed_form_eval(cf, xb)
        margin = V + 0.5 * cf.gamma * (xb - g) ** 2 - xb
        out["continuation_value_residual"] = float(np.max(np.abs(rv)))
        out["continuation_mean_residual"] = float(np.max(np.abs(rg)))
        out["obstacle_margin_min"] = float(np.min(margin))
        out["obstacle_strict"] = bool(np.all(margin > 0))
    else:
        out["continuation_value_residual"] = 0.0
        out["continuation_mean_residual"] = 0.0
        out["obstacle_margin_min"] = np.inf
        out["obstacle_strict"] = True

    xs = x[~below]
    if xs.size:
        # stopped branch: V = g = x, so L V = mu*x and the gradient term is
        # (gamma/2) sigma^2 x^2
        sign = cf.mu * xs - 0.5 * cf.gamma * cf.sigma_sq * xs ** 2
        out["stopped_sign_max"] = float(np.max(sign))
        out["stopped_sign_ok"] = bool(np.all(sign <= tol))
    else:
        out["stopped_sign_max"] = -np.inf
        out["stopped_sign_ok"] = True

    out["ok"] = (out["continuation_value_residual"] <= tol
                 and out["continuation_mean_residual"] <= tol
                 and out["stopped_sign_ok"] and out["obstacle_strict"])
    return out


def boundary_jump_quantities(cf: GBMClosedForm) -> dict:
    """One-sided quantities at the threshold and the boundary inequality.

    Note: direct substitution of the one-sided values gives
    L V(b-) + L V(b+) = sigma^2 b rho (3 - 2 rho)/2; the intermediate
    simplification sigma^2 b rho (2 - rho) floating around in derivations
    of this kind uses mu*b = sigma^2 b rho instead of sigma^2 b rho / 2
    and is flagged here for audit.
    """
    rho, b = cf.rho, cf.threshold
    sig2b = cf.sigma_sq * b ** 2
    lv_minus = 0.5 * cf.gamma * sig2b * (1 - rho) ** 2
    lv_plus = cf.mu * b
    dg_minus = 1.0 - rho
    dg_plus = 1.0
    lhs = lv_minus + lv_plus
    rhs = cf.gamma * sig2b * (0.5 * (dg_plus + dg_minus)) ** 2
    dV_minus, _, _ = derivatives_below(cf, np.asarray(b))  # one-sided limit at b
    return {
        "LV_minus": float(lv_minus),
        "LV_plus": float(lv_plus),
        "dx_g_minus": dg_minus,
        "dx_g_plus": dg_plus,
        "lhs": float(lhs),
        "rhs": float(rhs),
        "pass": bool(lhs <= rhs),
        "margin": float(rhs - lhs),
        "smooth_fit_defect": float(abs(float(dV_minus) - 1.0)),
        "g_kink": float(dg_plus - dg_minus),
        "direct_sum": float(lhs),
        "simplified_sum_in_derivation": float(cf.sigma_sq * b * rho * (2 - rho)),
    }
