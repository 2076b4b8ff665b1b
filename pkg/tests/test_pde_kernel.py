import numpy as np
import pytest

from mvstop import (GridField, KernelError, PecletWarning, ProblemSpec,
                    affine, apply_generator, build_grid, constant, gbm,
                    solve_linear_pde, step_backward)

RHO = 0.2


def _spec(drift, diffusion, T=1.0):
    return ProblemSpec(drift=drift, diffusion=diffusion, reward=constant(0.0),
                       gamma=0.0, lam=0.1, horizon=T)


def test_generator_constant_slice():
    spec = _spec(gbm(0.05), gbm(np.sqrt(0.5)))
    grid = build_grid(0.01, 3.0, 50, 10)
    out = apply_generator(spec, np.full(grid.n_x, 3.7), 0.0, grid)
    assert np.allclose(out, 0.0, atol=1e-12)


def test_generator_gbm_harmonic():
    # L x^{1-rho} = (1/2) sigma^2 (1-rho)(-rho+rho) x^{1-rho} = 0 for the
    # benchmark parameters; discretization leaves O(dx^2) at interior nodes
    spec = _spec(gbm(0.05), gbm(np.sqrt(0.5)))
    grid = build_grid(0.1, 2.0, 400, 10)
    x = grid.nodes
    out = apply_generator(spec, x ** (1 - RHO), 0.0, grid)
    assert np.max(np.abs(out[1:-1])) < 5e-4


def test_generator_quadratic():
    spec = _spec(constant(1.0), constant(np.sqrt(2.0)))
    grid = build_grid(0.0, 2.0, 100, 10)
    x = grid.nodes
    out = apply_generator(spec, x ** 2, 0.0, grid)
    assert np.allclose(out[1:-1], 2 * x[1:-1] + 2, atol=1e-9)


def test_step_constant_preserved():
    spec = _spec(constant(0.3), constant(1.0))
    grid = build_grid(0.0, 1.0, 20, 10)
    v0 = np.full(grid.n_x, 4.2)
    out = step_backward(spec, v0, 0.0, 0.0, 0.0, 0.1, grid)
    assert np.allclose(out, 4.2, atol=1e-12)


def test_step_zero_order_scalar_ode():
    # with a constant profile the spatial terms vanish and c=-1 gives the
    # backward-Euler step of phi' = phi: v0/(1+dt)
    spec = _spec(constant(0.0), constant(1.0))
    grid = build_grid(0.0, 1.0, 20, 10)
    v0 = np.full(grid.n_x, 2.0)
    out = step_backward(spec, v0, 0.0, -1.0, 0.0, 0.25, grid)
    assert np.allclose(out, 2.0 / 1.25, atol=1e-12)


def test_step_source_scalar_ode():
    spec = _spec(constant(0.0), constant(1.0))
    grid = build_grid(0.0, 1.0, 20, 10)
    out = step_backward(spec, np.zeros(grid.n_x), 0.0, 0.0, 1.0, 0.25, grid)
    assert np.allclose(out, -0.25, atol=1e-12)


def test_step_rejects_bad_dt():
    spec = _spec(constant(0.0), constant(1.0))
    grid = build_grid(0.0, 1.0, 20, 10)
    with pytest.raises(KernelError):
        step_backward(spec, np.zeros(grid.n_x), 0.0, 0.0, 0.0, -0.1, grid)


def test_step_clamped_boundary():
    spec = ProblemSpec(drift=constant(0.0), diffusion=constant(1.0),
                       reward=affine(0.0, 1.0), gamma=0.0, lam=0.1, horizon=1.0)
    grid = build_grid(0.0, 1.0, 20, 10, boundary_kind="value-clamped-to-f")
    out = step_backward(spec, np.zeros(grid.n_x), 0.0, 0.0, 0.0, 0.1, grid)
    assert np.isclose(out[0], grid.nodes[0], rtol=0, atol=1e-14)
    assert np.isclose(out[-1], grid.nodes[-1], rtol=0, atol=1e-14)


def test_sweep_constant_one():
    spec = _spec(constant(0.0), constant(1.0))
    grid = build_grid(0.0, 1.0, 20, 16)
    field = solve_linear_pde(spec, np.ones(grid.n_x), 0.0, 0.0, grid)
    assert np.allclose(field.values, 1.0, atol=1e-12)


def _scalar_ode_errors(n_t):
    spec = _spec(constant(0.0), constant(1.0))
    grid = build_grid(0.0, 1.0, 10, n_t)
    t = grid.times(1.0)[:, None]
    errs = []
    # phi_t + s = 0 backward from 0 with s = 1: phi = -(1 - t)
    f1 = solve_linear_pde(spec, np.zeros(grid.n_x), 0.0, 1.0, grid)
    errs.append(np.max(np.abs(f1.values + (1 - t))))
    # phi_t + c phi = 0, c = -1, phi(T) = 1: phi = exp(-(1 - t))
    f2 = solve_linear_pde(spec, np.ones(grid.n_x), -1.0, 0.0, grid)
    errs.append(np.max(np.abs(f2.values - np.exp(-(1 - t)))))
    # both combined: phi_t - phi + 1 = 0 from 2: phi = 1 + exp(-(1-t))
    f3 = solve_linear_pde(spec, 2.0 * np.ones(grid.n_x), -1.0, -1.0, grid)
    errs.append(np.max(np.abs(f3.values - (1 + np.exp(-(1 - t))))))
    return np.array(errs)


def test_scalar_ode_oracles():
    errs = _scalar_ode_errors(200)
    assert errs[0] < 1e-12        # source-only case is exact
    assert np.all(errs < 5e-3)


def test_refinement_factor():
    coarse = _scalar_ode_errors(100)
    fine = _scalar_ode_errors(200)
    # skip the exact case; backward Euler halves the O(dt) error
    assert np.all(coarse[1:] / fine[1:] >= 1.8)


def _random_problem(rng):
    T = float(rng.uniform(0.3, 1.5))
    spec = _spec(affine(float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.2, 0.2))),
                 constant(float(rng.uniform(0.8, 1.5))), T=T)
    grid = build_grid(-1.0, 1.0, 40, int(rng.integers(20, 60)))
    nodes = grid.nodes
    f = np.polyval(rng.normal(size=3), nodes) + rng.normal(size=grid.n_x) * 0.1
    s = np.polyval(rng.normal(size=3), nodes)
    c = -np.abs(np.polyval(rng.normal(size=2), nodes))
    return spec, grid, f, s, c


def test_maximum_principle_bound_suite():
    # phi_t + L phi + c phi + s = 0 backward from f, c <= 0:
    # max phi <= max f+ + T max s+ and min phi >= -(max f- + T max s-)
    rng = np.random.default_rng(42)
    for _ in range(20):
        spec, grid, f, s, c = _random_problem(rng)
        field = solve_linear_pde(spec, f, c, -s, grid)
        T = spec.horizon
        up = np.max(np.maximum(f, 0.0)) + T * np.max(np.maximum(s, 0.0))
        lo = -(np.max(np.maximum(-f, 0.0)) + T * np.max(np.maximum(-s, 0.0)))
        assert np.max(field.values) <= up + 1e-6
        assert np.min(field.values) >= lo - 1e-6


def test_comparison_property():
    rng = np.random.default_rng(7)
    spec, grid, f, s, c = _random_problem(rng)
    lo_field = solve_linear_pde(spec, f, c, -s, grid)
    hi_field = solve_linear_pde(spec, f + 0.5, c, -(s + 0.2), grid)
    assert np.all(hi_field.values >= lo_field.values - 1e-12)


def test_peclet_warning():
    spec = _spec(constant(5.0), constant(0.1))
    grid = build_grid(0.0, 1.0, 20, 10)
    with pytest.warns(PecletWarning):
        step_backward(spec, np.zeros(grid.n_x), 0.0, 0.0, 0.0, 0.1, grid)


def test_gridfield_shape_checked():
    grid = build_grid(0.0, 1.0, 5, 4)
    with pytest.raises(ValueError):
        GridField(grid, grid.times(1.0), np.zeros((3, 5)))


def test_gridfield_helpers():
    grid = build_grid(0.0, 1.0, 5, 4)
    fld = GridField.full(grid, 1.0, -2.0)
    assert fld.sup_norm() == 2.0
    assert np.array_equal(fld.slice_at(0.51), fld.values[2])
    cp = fld.copy()
    cp.values[0, 0] = 9.0
    assert fld.values[0, 0] == -2.0
