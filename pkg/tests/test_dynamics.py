import math

import numpy as np
import pytest

from csaswitch.curve import YieldCurve, build_curve, engine_curve_quotes
from csaswitch.dynamics import (
    CIRParams,
    G2Params,
    PathSet,
    TimeGrid,
    b_factor,
    dump_paths_csv,
    fit_phi,
    no_default_sentinel,
    sample_default_times,
    simulate,
    simulate_cir,
    simulate_g2pp,
)

PAPER_G2 = G2Params(mu=0.00013, nu=0.06730, sigma=0.12924, eta=0.14014, rho=-0.99948)
CIR_LOW = CIRParams(kappa=1.03921, gamma=0.02120, upsilon=0.20122, lambda0=0.04031)
CIR_HIGH = CIRParams(kappa=0.30821, gamma=0.11220, upsilon=0.44214, lambda0=0.20316)

DAILY = TimeGrid(n_steps=252, dt=1.0 / 252.0)


def flat_curve(rate, max_t=5.0):
    times = np.linspace(0.05, max_t, 200)
    return YieldCurve(times, np.exp(-rate * times))


@pytest.fixture(scope="module")
def engine_curve():
    return build_curve(engine_curve_quotes(), use_quoted_dfs=False)


def test_param_validation():
    with pytest.raises(ValueError):
        G2Params(mu=-0.1, nu=0.1, sigma=0.01, eta=0.01, rho=0.0)
    with pytest.raises(ValueError):
        G2Params(mu=0.1, nu=0.1, sigma=0.01, eta=0.01, rho=1.5)
    with pytest.raises(ValueError):
        CIRParams(kappa=1.0, gamma=0.02, upsilon=0.2, lambda0=0.0)
    with pytest.raises(ValueError):
        TimeGrid(n_steps=0, dt=0.1)


def test_grid_matches_maturity():
    assert DAILY.matches_maturity(1.0)
    assert not DAILY.matches_maturity(1.5)
    assert DAILY.times.shape == (253,)


def test_b_factor_limits():
    assert b_factor(0.0, 2.0) == 2.0
    assert b_factor(1e-12, 2.0) == pytest.approx(2.0, rel=1e-9)
    assert b_factor(0.5, 2.0) == pytest.approx((1 - math.exp(-1.0)) / 0.5, rel=1e-14)


def test_phi_zero_vol_flat_curve_is_flat():
    params = G2Params(mu=0.1, nu=0.2, sigma=0.0, eta=0.0, rho=0.0)
    grid = TimeGrid(50, 0.02)
    phi = fit_phi(params, flat_curve(0.03), grid)
    assert np.allclose(phi, 0.03, atol=1e-9)


def test_phi_at_zero_equals_short_end_forward(engine_curve):
    phi = fit_phi(PAPER_G2, engine_curve, DAILY)
    f0 = engine_curve.instantaneous_forward(0.0, h=DAILY.dt / 2)
    assert phi[0] == pytest.approx(f0, abs=1e-12)


def test_phi_requires_curve_coverage():
    with pytest.raises(ValueError):
        fit_phi(PAPER_G2, flat_curve(0.02, max_t=0.5), DAILY)


def test_r0_consistency_check(engine_curve):
    bad = G2Params(mu=0.1, nu=0.2, sigma=0.01, eta=0.01, rho=0.0, r0=0.10)
    with pytest.raises(ValueError):
        fit_phi(bad, engine_curve, DAILY)


def test_g2_zero_vol_is_deterministic():
    params = G2Params(mu=0.3, nu=0.7, sigma=0.0, eta=0.0, rho=0.0)
    grid = TimeGrid(40, 0.025)
    phi = np.linspace(0.01, 0.02, 41)
    y, z, r = simulate_g2pp(params, phi, grid, n_paths=3, seed=1)
    assert np.all(y == 0) and np.all(z == 0)
    assert np.allclose(r, phi[:, None])


def test_g2_factor_variance_matches_ou_formula():
    grid = TimeGrid(252, 1.0 / 252.0)
    phi = np.zeros(253)
    y, z, _ = simulate_g2pp(PAPER_G2, phi, grid, n_paths=4000, seed=7)
    var_exact = PAPER_G2.sigma**2 * (1 - math.exp(-2 * PAPER_G2.mu)) / (2 * PAPER_G2.mu)
    sample = y[-1]
    se = np.std(sample**2, ddof=1) / math.sqrt(sample.size)
    assert abs(np.var(sample, ddof=1) - var_exact) < 3 * se


def test_g2_uncorrelated_increments():
    params = G2Params(mu=0.1, nu=0.3, sigma=0.02, eta=0.03, rho=0.0)
    grid = TimeGrid(10, 0.1)
    y, z, _ = simulate_g2pp(params, np.zeros(11), grid, n_paths=5000, seed=11)
    dy, dz = np.diff(y[:2], axis=0).ravel(), np.diff(z[:2], axis=0).ravel()
    corr = np.corrcoef(dy, dz)[0, 1]
    assert abs(corr) < 0.05


def test_g2_negative_correlation_reproduced():
    grid = TimeGrid(5, 0.2)
    y, z, _ = simulate_g2pp(PAPER_G2, np.zeros(6), grid, n_paths=6000, seed=3)
    corr = np.corrcoef(np.diff(y, axis=0).ravel(), np.diff(z, axis=0).ravel())[0, 1]
    assert corr == pytest.approx(PAPER_G2.rho, abs=0.05)


def test_cir_zero_vol_matches_ode():
    params = CIRParams(kappa=0.8, gamma=0.03, upsilon=0.0, lambda0=0.10)
    lam, _ = simulate_cir(params, DAILY, n_paths=2, seed=5)
    t = DAILY.times
    exact = params.gamma + (params.lambda0 - params.gamma) * np.exp(-params.kappa * t)
    assert np.max(np.abs(lam[:, 0] - exact)) < 1e-4


def test_cir_constant_when_started_at_mean():
    params = CIRParams(kappa=0.8, gamma=0.03, upsilon=0.0, lambda0=0.03)
    lam, _ = simulate_cir(params, DAILY, n_paths=1, seed=5)
    assert np.allclose(lam, 0.03, atol=1e-15)


def test_cir_low_mean_matches_formula():
    lam, _ = simulate_cir(CIR_LOW, DAILY, n_paths=4000, seed=9)
    exact = CIR_LOW.gamma + (CIR_LOW.lambda0 - CIR_LOW.gamma) * math.exp(-CIR_LOW.kappa)
    sample = lam[-1]
    se = np.std(sample, ddof=1) / math.sqrt(sample.size)
    # allow the O(dt) Euler bias on top of the Monte Carlo band
    assert abs(np.mean(sample) - exact) < 3 * se + 1e-4


def test_cir_positivity_and_hazard_monotone():
    with pytest.warns(RuntimeWarning, match="Feller"):
        lam, cum = simulate_cir(CIR_HIGH, DAILY, n_paths=500, seed=13)
    assert np.all(lam >= 0)
    assert np.all(np.diff(cum, axis=0) >= -1e-15)


def test_feller_warning_only_when_violated():
    import warnings as _w

    with _w.catch_warnings():
        _w.simplefilter("error")
        simulate_cir(CIR_LOW, TimeGrid(10, 0.01), n_paths=2, seed=1)
    assert CIR_LOW.feller_satisfied and not CIR_HIGH.feller_satisfied


def test_defaults_zero_intensity_never_default():
    cum = np.zeros((11, 50))
    steps = sample_default_times(cum, seed=1)
    assert np.all(steps == 11)


def test_defaults_constant_intensity_law():
    lam = 0.2
    n_paths = 10_000
    grid = TimeGrid(252, 1.0 / 252.0)
    cum = np.outer(grid.times, np.full(n_paths, lam))
    steps = sample_default_times(cum, seed=21)
    p_hat = np.mean(steps <= grid.n_steps)
    p = 1.0 - math.exp(-lam)
    se = math.sqrt(p * (1 - p) / n_paths)
    assert abs(p_hat - p) < 3 * se


def test_defaults_tower_property_high(engine_curve):
    # empirical survival must match an independent estimate of E[e^{-Lambda(1)}]
    with pytest.warns(RuntimeWarning):
        paths = simulate(PAPER_G2, CIR_HIGH, engine_curve, DAILY, 4000, seed=17)
    surv_emp = np.mean(~paths.defaulted)
    with pytest.warns(RuntimeWarning):
        _, cum2 = simulate_cir(CIR_HIGH, DAILY, 4000, seed=23)
    surv_exp = np.mean(np.exp(-cum2[-1]))
    se = math.sqrt(
        np.var(np.exp(-cum2[-1]), ddof=1) / 4000 + surv_emp * (1 - surv_emp) / 4000
    )
    assert abs(surv_emp - surv_exp) < 3 * se


def test_martingale_fit_small(engine_curve):
    # ZCB prices from simulated short rates must reproduce the curve; the
    # acceptance suite runs the full-size version of this check
    grid = TimeGrid(126, 1.0 / 252.0)
    paths = simulate(PAPER_G2, CIR_LOW, engine_curve, grid, 4000, seed=29)
    disc = np.exp(-np.trapezoid(paths.short_rate, dx=grid.dt, axis=0))
    se = np.std(disc, ddof=1) / math.sqrt(paths.n_paths)
    assert abs(np.mean(disc) - engine_curve.discount_factor(0.5)) < 3 * se


def test_simulate_bit_identical_and_chunk_invariant(engine_curve):
    a = simulate(PAPER_G2, CIR_LOW, engine_curve, TimeGrid(20, 0.01), 16, seed=31)
    b = simulate(PAPER_G2, CIR_LOW, engine_curve, TimeGrid(20, 0.01), 16, seed=31)
    assert np.array_equal(a.short_rate, b.short_rate)
    assert np.array_equal(a.default_step, b.default_step)
    # per-path substreams: a wider run reproduces the narrower one exactly
    c = simulate(PAPER_G2, CIR_LOW, engine_curve, TimeGrid(20, 0.01), 32, seed=31)
    assert np.array_equal(c.short_rate[:, :16], a.short_rate)
    assert np.array_equal(c.intensity[:, :16], a.intensity)


def test_rate_paths_do_not_depend_on_intensity_params(engine_curve):
    grid = TimeGrid(30, 0.01)
    low = simulate(PAPER_G2, CIR_LOW, engine_curve, grid, 8, seed=37)
    with pytest.warns(RuntimeWarning):
        high = simulate(PAPER_G2, CIR_HIGH, engine_curve, grid, 8, seed=37)
    assert np.array_equal(low.short_rate, high.short_rate)


def test_rate_intensity_correlation_switch(engine_curve):
    grid = TimeGrid(8, 0.05)
    paths = simulate(
        PAPER_G2, CIR_LOW, engine_curve, grid, 6000, seed=41, rho_rate_intensity=0.7
    )
    dr = np.diff(paths.short_rate, axis=0) - np.diff(paths.phi)[:, None]
    dlam = np.diff(paths.intensity, axis=0)
    keep = np.abs(dlam) > 0  # intensity pinned at 0 has no shock to correlate
    corr = np.corrcoef(dr[keep].ravel(), dlam[keep].ravel())[0, 1]
    assert corr == pytest.approx(0.7, abs=0.05)


def test_initial_state_and_alive(engine_curve):
    paths = simulate(PAPER_G2, CIR_LOW, engine_curve, TimeGrid(10, 0.01), 5, seed=43)
    assert np.allclose(paths.short_rate[0], paths.phi[0])
    assert paths.alive(0).all()
    assert no_default_sentinel(paths.grid) == 11


def test_dump_csv(tmp_path, engine_curve):
    paths = simulate(PAPER_G2, CIR_LOW, engine_curve, TimeGrid(3, 0.01), 2, seed=47)
    out = tmp_path / "paths.csv"
    dump_paths_csv(paths, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "step,path,y,z,r,lambda,Lambda,defaulted"
    assert len(lines) == 1 + 4 * 2
