import numpy as np
import pytest

from mvstop import (MCConfig, ProblemSpec, StopRegion, affine, build_grid,
                    constant, estimate_hitting_objective,
                    estimate_local_time_relation, estimate_objective, gbm,
                    sample_cox_stopping, simulate_paths)
from mvstop.simulate import intensity_function
from mvstop.pde_kernel import GridField


def _bm(gamma=0.0, T=1.0, lam=0.1, sigma=1.0, mu=0.0, reward=None):
    return ProblemSpec(drift=constant(mu), diffusion=constant(sigma),
                       reward=reward if reward is not None else affine(0.0, 1.0),
                       gamma=gamma, lam=lam, horizon=T)


MC = MCConfig(n_paths=20_000, dt_sim=1e-2, master_seed=7)


def test_zero_coefficients_constant_paths():
    spec = _bm(sigma=0.0, mu=0.0)
    paths = simulate_paths(spec, 0.0, 1.3, MCConfig(100, 0.1, 1))
    for _, states in paths.iter_chunks():
        assert np.all(states == 1.3)


def test_pure_drift():
    spec = _bm(sigma=0.0, mu=1.0)
    paths = simulate_paths(spec, 0.0, 0.0, MCConfig(64, 0.01, 1))
    term = paths.terminal_states()
    assert np.allclose(term, 1.0, atol=1e-12)


def test_gbm_terminal_mean():
    spec = ProblemSpec(drift=gbm(0.05), diffusion=gbm(np.sqrt(0.5)),
                       reward=affine(0.0, 1.0), gamma=0.0, lam=0.1, horizon=1.0)
    paths = simulate_paths(spec, 0.0, 1.0, MC)
    term = paths.terminal_states()
    se = np.std(term, ddof=1) / np.sqrt(len(term))
    assert abs(term.mean() - np.exp(0.05)) <= 3 * se


def test_reproducibility_bit_identical():
    spec = _bm()
    a = simulate_paths(spec, 0.0, 0.0, MC).terminal_states()
    b = simulate_paths(spec, 0.0, 0.0, MC).terminal_states()
    assert np.array_equal(a, b)


def test_antithetic_pairs_mirror():
    spec = _bm()
    mc = MCConfig(n_paths=8, dt_sim=0.25, master_seed=3, antithetic=True)
    term = simulate_paths(spec, 0.0, 0.0, mc).terminal_states()
    # driftless: odd paths are exact mirrors of their even twins
    assert np.allclose(term[1::2], -term[0::2], atol=1e-14)


def test_zero_intensity_never_stops():
    spec = _bm()
    sample = sample_cox_stopping(simulate_paths(spec, 0.0, 0.0, MC), 0.0)
    assert not sample.stopped_by_intensity.any()
    assert np.all(sample.tau == 1.0)


def test_constant_intensity_exponential_law():
    v, T = 2.0, 1.0
    spec = _bm(T=T)
    sample = sample_cox_stopping(simulate_paths(spec, 0.0, 0.0, MC), v)
    p = sample.stopped_by_intensity.mean()
    target = 1.0 - np.exp(-v * T)
    se = np.sqrt(target * (1 - target) / MC.n_paths)
    assert abs(p - target) <= 3 * se
    # stopped times follow the truncated exponential: check the mean
    tau_mean_exact = 1.0 / v - T * np.exp(-v * T) / (1 - np.exp(-v * T))
    taus = sample.tau[sample.stopped_by_intensity]
    assert abs(taus.mean() - tau_mean_exact) <= 3 * taus.std(ddof=1) / np.sqrt(len(taus))


def test_negative_intensity_rejected():
    spec = _bm()
    with pytest.raises(ValueError):
        sample_cox_stopping(simulate_paths(spec, 0.0, 0.0, MCConfig(128, 0.1, 1)),
                            lambda t, x: np.full_like(x, -1.0))


def test_intensity_function_gridfield_interpolation():
    grid = build_grid(0.0, 1.0, 3, 2)
    fld = GridField(grid, grid.times(1.0), np.tile(grid.nodes, (3, 1)))
    fn = intensity_function(fld)
    assert np.isclose(fn(0.0, np.array([0.5]))[0], 0.5)
    # clamped beyond the node range
    assert np.isclose(fn(0.0, np.array([5.0]))[0], 0.75)


def test_objective_driftless_linear_reward():
    # pi = 0: tau = T, f(X_T) = X_T with E = x0, and J = E f - (gamma/2) Var f
    gamma, T, x0 = 1.0, 1.0, 0.3
    spec = _bm(gamma=gamma, T=T)
    sample = sample_cox_stopping(simulate_paths(spec, 0.0, x0, MC), 0.0)
    est = estimate_objective(sample, spec, kind="raw")
    assert abs(est.mean_reward.mean - x0) <= 3 * est.mean_reward.se
    j_exact = x0 - 0.5 * gamma * T
    assert abs(est.objective.mean - j_exact) <= 3 * est.objective.se
    var = est.variance
    assert abs(var.mean - T) <= 3 * var.se


def test_raw_vs_conditional_agreement():
    spec = _bm(gamma=1.0)
    sample = sample_cox_stopping(simulate_paths(spec, 0.0, 0.2, MC), 1.5)
    raw = estimate_objective(sample, spec, kind="raw", lam=spec.lam)
    cond = estimate_objective(sample, spec, kind="conditional", lam=spec.lam)
    z = abs(raw.objective.mean - cond.objective.mean) \
        / np.hypot(raw.objective.se, cond.objective.se)
    assert z <= 3.0
    assert cond.objective.se < raw.objective.se  # conditioning reduces variance


def test_unknown_estimator_kind():
    spec = _bm()
    sample = sample_cox_stopping(simulate_paths(spec, 0.0, 0.0, MCConfig(128, 0.1, 1)), 1.0)
    with pytest.raises(ValueError):
        estimate_objective(sample, spec, kind="bogus")


def test_hitting_all_stop():
    spec = _bm(gamma=1.0, reward=affine(0.0, 1.0))
    grid = build_grid(-2.0, 2.0, 20, 10)
    region = StopRegion.from_threshold(grid, 1.0, -10.0, side="above")
    est = estimate_hitting_objective(spec, region, 0.0, 0.7, MCConfig(256, 0.1, 5))
    assert np.isclose(est.mean_reward.mean, 0.7, atol=1e-12)
    assert est.mean_reward.se <= 1e-12
    assert np.isclose(est.objective.mean, 0.7, atol=1e-14)


def test_hitting_all_continue():
    # no stop region: tau = T and the estimate reduces to terminal moments
    spec = _bm(gamma=1.0)
    grid = build_grid(-5.0, 5.0, 20, 10)
    region = StopRegion.from_threshold(grid, 1.0, 100.0, side="above")
    mc = MCConfig(20_000, 1e-2, 11)
    est = estimate_hitting_objective(spec, region, 0.0, 0.0, mc)
    assert abs(est.mean_reward.mean - 0.0) <= 3 * est.mean_reward.se
    assert abs(est.variance.mean - 1.0) <= 3 * est.variance.se


def test_local_time_degenerate_diffusion():
    # sigma = 0 with nonzero drift: the path leaves the curve immediately
    # and the occupation estimate of the local time is 0
    spec = _bm(sigma=0.0, mu=1.0, T=5.0)
    reports = estimate_local_time_relation(spec, lambda t: 0.0, 0.0, 0.0,
                                           [0.1], MCConfig(512, 1e-3, 3))
    assert reports[0]["local_time"].mean == 0.0


def test_local_time_bm_relation():
    spec = _bm(T=5.0)
    mc = MCConfig(50_000, 2e-4, 17)
    reports = estimate_local_time_relation(spec, lambda t: 0.0, 0.0, 0.0,
                                           [0.1, 0.05], mc)
    errs = [r["abs_error"] for r in reports]
    assert errs[0] < 0.15 and errs[1] < 0.15
    assert reports[0]["sigma_sq"] == 1.0


def test_local_time_input_validation():
    spec = _bm(T=5.0)
    with pytest.raises(ValueError):
        estimate_local_time_relation(spec, lambda t: 1.0, 0.0, 0.0, [0.1],
                                     MCConfig(16, 1e-2, 1))
    with pytest.raises(ValueError):
        estimate_local_time_relation(spec, lambda t: 0.0, 0.0, 0.0, [-0.1],
                                     MCConfig(16, 1e-2, 1))


def test_mcconfig_validation():
    with pytest.raises(ValueError):
        MCConfig(0, 0.1, 1)
    with pytest.raises(ValueError):
        MCConfig(10, 0.0, 1)
