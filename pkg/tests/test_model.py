import numpy as np
import pytest

from mvstop import (CoefficientSpec, ModelError, ProblemSpec, affine,
                    build_grid, constant, evaluate_coefficient, gbm,
                    validate_problem)
from conftest import gbm_problem


def test_constant_coefficient():
    c = constant(0.3)
    assert evaluate_coefficient(c, 0.0, 1.7) == 0.3
    assert evaluate_coefficient(c, 5.0, -2.0) == 0.3


def test_gbm_coefficient():
    assert evaluate_coefficient(gbm(0.5), 0.0, 2.0) == 1.0


def test_affine_coefficient():
    assert evaluate_coefficient(affine(1.0, -1.0), 0.0, 1.0) == 0.0


def test_coefficient_purity():
    c = affine(0.3, 1.7)
    x = np.linspace(-1, 1, 11)
    a = c(0.2, x)
    b = c(0.2, x)
    assert np.array_equal(a, b)


def test_unknown_kind_rejected():
    with pytest.raises(ModelError):
        CoefficientSpec("quadratic", (1.0,))


def test_wrong_arity_rejected():
    with pytest.raises(ModelError):
        CoefficientSpec("affine", (1.0,))


def test_tabulated_coefficient_roundtrip():
    g = build_grid(0.0, 1.0, 3, 2)
    table = np.arange(9.0).reshape(3, 3)
    c = CoefficientSpec("tabulated", table=table, table_grid=g, table_T=1.0)
    assert evaluate_coefficient(c, 0.5, 0.5) == 4.0
    vals = c(1.0, g.nodes)
    assert np.array_equal(vals, table[2])


def test_tabulated_off_grid_rejected():
    g = build_grid(0.0, 1.0, 3, 2)
    c = CoefficientSpec("tabulated", table=np.zeros((3, 3)), table_grid=g, table_T=1.0)
    with pytest.raises(ModelError):
        c(0.5, 0.3)
    with pytest.raises(ModelError):
        c(0.31, 0.5)


def test_tabulated_shape_checked():
    g = build_grid(0.0, 1.0, 3, 2)
    with pytest.raises(ModelError):
        CoefficientSpec("tabulated", table=np.zeros((2, 3)), table_grid=g, table_T=1.0)


def test_grid_small_example():
    g = build_grid(0.0, 1.0, 3, 2)
    assert np.allclose(g.nodes, [0.25, 0.5, 0.75], atol=0, rtol=0)
    assert g.dx == 0.25
    assert np.array_equal(g.times(1.0), [0.0, 0.5, 1.0])


def test_grid_too_few_nodes():
    with pytest.raises(ModelError):
        build_grid(0.0, 1.0, 1, 1)


def test_grid_spacing_exact():
    g = build_grid(-1.0, 1.0, 199, 100)
    assert g.dx == 0.01
    # node coordinates must be x_min + (i+1)*dx bit-exactly
    i = np.arange(g.n_x)
    assert np.array_equal(g.nodes, -1.0 + (i + 1.0) * g.dx)


def test_grid_bounds_checked():
    with pytest.raises(ModelError):
        build_grid(1.0, 0.0, 10, 10)
    with pytest.raises(ModelError):
        build_grid(0.0, 1.0, 10, 0)
    with pytest.raises(ModelError):
        build_grid(0.0, 1.0, 10, 10, boundary_kind="periodic")


def test_validate_gbm_ok():
    rep = validate_problem(gbm_problem(), build_grid(0.01, 3.0, 100, 100))
    assert rep.ok
    assert rep.violations == []


def test_validate_degenerate_diffusion():
    spec = ProblemSpec(drift=constant(0.1), diffusion=constant(0.0),
                       reward=constant(1.0), gamma=1.0, lam=0.1, horizon=1.0)
    rep = validate_problem(spec, build_grid(0.0, 1.0, 10, 10))
    assert not rep.ok
    assert any("degenerate diffusion" in v for v in rep.violations)


def test_validate_dimension():
    spec = ProblemSpec(drift=constant(0.0), diffusion=constant(1.0),
                       reward=constant(1.0), gamma=1.0, lam=0.1, horizon=1.0,
                       dimension=2)
    rep = validate_problem(spec, build_grid(0.0, 1.0, 10, 10))
    assert any("solver requires d=1" in v for v in rep.violations)


def test_validate_parameter_signs():
    spec = ProblemSpec(drift=constant(0.0), diffusion=constant(1.0),
                       reward=constant(1.0), gamma=-1.0, lam=0.0, horizon=-1.0)
    rep = validate_problem(spec, build_grid(0.0, 1.0, 10, 10))
    assert len(rep.violations) >= 3


def test_kappa_convention():
    assert gbm_problem(variance_factor="half").kappa == 0.5
    assert gbm_problem(variance_factor="full").kappa == 1.0
    with pytest.raises(ModelError):
        gbm_problem(variance_factor="double")


def test_with_lambda():
    spec = gbm_problem(lam=0.4)
    other = spec.with_lambda(0.1)
    assert other.lam == 0.1
    assert other.drift is spec.drift
    assert other.horizon == spec.horizon
