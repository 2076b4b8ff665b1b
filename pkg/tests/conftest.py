import numpy as np
import pytest

from mvstop import (ProblemSpec, affine, build_grid, constant, gbm,
                    solve_extended_hjb, solve_vi)

# GBM benchmark parameterization used throughout: rho = 0.2, threshold 0.5
MU = 0.05
SIGMA_SQ = 0.5
GAMMA = 1.0


def gbm_problem(lam=0.1, horizon=10.0, variance_factor="half"):
    return ProblemSpec(drift=gbm(MU), diffusion=gbm(np.sqrt(SIGMA_SQ)),
                       reward=affine(0.0, 1.0), gamma=GAMMA, lam=lam,
                       horizon=horizon, variance_factor=variance_factor)


def constant_f_problem(lam=0.3, horizon=1.0, gamma=1.0):
    """f == 1 fixture with the scalar closed form V = 1 + lam*ln(1 + T - t)."""
    return ProblemSpec(drift=constant(0.0), diffusion=constant(1.0),
                       reward=constant(1.0), gamma=gamma, lam=lam,
                       horizon=horizon)


@pytest.fixture(scope="session")
def const_grid():
    return build_grid(-2.0, 2.0, 49, 400)


@pytest.fixture(scope="session")
def const_hjb(const_grid):
    return solve_extended_hjb(constant_f_problem(), const_grid)


@pytest.fixture(scope="session")
def gbm_grid_small():
    return build_grid(0.01, 3.0, 400, 800)


@pytest.fixture(scope="session")
def gbm_vi_small(gbm_grid_small):
    return solve_vi(gbm_problem(), gbm_grid_small)
