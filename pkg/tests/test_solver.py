import numpy as np
import pytest

from csaswitch.costs import CostConfig, RegimeCostPaths, build_cost_paths
from csaswitch.curve import build_curve, engine_curve_quotes, par_swap_rate
from csaswitch.dynamics import CIRParams, G2Params, TimeGrid, simulate
from csaswitch.solver import (
    BASIS_COLLATERALIZED,
    BASIS_UNCOLLATERALIZED,
    COLLATERALIZED,
    NEVER,
    REGIMES,
    UNCOLLATERALIZED,
    RegressionBasis,
    extract_boundary,
    min_remaining_switches,
    other_regime,
    regress_continuation,
    reprice_strategy,
    solve_switching,
    solve_switching_lattice,
    total_switches,
    value_no_switch,
)
from csaswitch.swap import SwapSpec, npv_matrix

PAPER_G2 = G2Params(mu=0.00013, nu=0.06730, sigma=0.12924, eta=0.14014, rho=-0.99948)
CIR_LOW = CIRParams(kappa=1.03921, gamma=0.02120, upsilon=0.20122, lambda0=0.04031)


@pytest.fixture(scope="module")
def setup():
    curve = build_curve(engine_curve_quotes(), use_quoted_dfs=False)
    grid = TimeGrid(42, 1.0 / 42.0)
    paths = simulate(PAPER_G2, CIR_LOW, curve, grid, 800, seed=8)
    spec = SwapSpec(notional=1000.0, fixed_rate=par_swap_rate(curve, 1.0, 2))
    npv = npv_matrix(paths, spec, PAPER_G2, curve)
    cfg = CostConfig()
    cp = build_cost_paths(paths, npv, cfg)
    return paths, cp, cfg


# --- regression primitive ---------------------------------------------------


def test_regression_constant_targets():
    rng = np.random.default_rng(0)
    r = rng.normal(0.01, 0.002, 200)
    lam = rng.uniform(0.01, 0.2, 200)
    fitted, report = regress_continuation(BASIS_UNCOLLATERALIZED, r, lam, np.full(200, 3.5))
    assert np.allclose(fitted, 3.5, atol=1e-10)
    assert report.n_obs == 200


def test_regression_exact_linear():
    rng = np.random.default_rng(1)
    r = rng.normal(0.01, 0.002, 300)
    lam = rng.uniform(0.01, 0.2, 300)
    targets = 2.0 + 3.0 * r - 1.5 * lam
    fitted, _ = regress_continuation(BASIS_UNCOLLATERALIZED, r, lam, targets)
    assert np.max(np.abs(fitted - targets)) < 1e-10


def test_regression_recovers_quadratic_coefficient():
    rng = np.random.default_rng(2)
    r = rng.normal(0.0, 1.0, 500)
    targets = r**2
    fitted, report = regress_continuation(BASIS_COLLATERALIZED, r, np.zeros(500), targets)
    coef = dict(zip(report.features, report.coefficients))
    assert coef["r2"] == pytest.approx(1.0, abs=1e-8)
    assert np.max(np.abs(fitted - targets)) < 1e-8


def test_regression_prunes_degenerate_features():
    # fully degenerate state (grid origin): everything collapses to the mean
    r = np.full(100, 0.01)
    lam = np.full(100, 0.04)
    targets = np.linspace(0.0, 1.0, 100)
    fitted, report = regress_continuation(BASIS_UNCOLLATERALIZED, r, lam, targets)
    assert report.features == ("const",)
    assert np.allclose(fitted, targets.mean())


def test_regression_collinear_after_pruning_is_an_error():
    # constant r with varying lam makes r_lam proportional to lam
    r = np.full(100, 0.01)
    lam = np.linspace(0.01, 0.2, 100)
    with pytest.raises(ValueError, match="rank-deficient.*lam"):
        regress_continuation(BASIS_UNCOLLATERALIZED, r, lam, 1.0 + 2.0 * lam)


def test_regression_rank_deficiency_reported():
    rng = np.random.default_rng(3)
    r = rng.normal(0.0, 1.0, 200)
    basis = RegressionBasis(("const", "r2", "r_lam"))
    # lam == r makes r_lam identical to r2 -> singular design
    with pytest.raises(ValueError, match="rank-deficient"):
        regress_continuation(basis, r, r.copy(), r**2)


def test_regression_requires_ten_observations_per_feature():
    with pytest.raises(ValueError, match="observations"):
        regress_continuation(
            BASIS_COLLATERALIZED, np.linspace(0, 1, 12), np.zeros(12), np.zeros(12)
        )


def test_basis_validation():
    with pytest.raises(ValueError):
        RegressionBasis(("r",))
    with pytest.raises(ValueError):
        RegressionBasis(("const", "cubic"))


# --- switching solver on simulated paths ------------------------------------


def test_prohibitive_switch_costs_reduce_to_no_switch(setup):
    paths, cp, _ = setup
    # scale costs down so the 2%-of-notional cap is above any differential
    small = RegimeCostPaths(bcva=0.01 * np.asarray(cp.bcva),
                            coll_cost=0.01 * np.asarray(cp.coll_cost))
    cfg = CostConfig(switch_to_coll_cost=20.0, switch_to_uncoll_cost=20.0)
    sol = solve_switching(paths, small, cfg)
    assert total_switches(sol) == 0
    assert sol.v_star == pytest.approx(sol.v_cva, abs=1e-12)
    assert sol.v_start[COLLATERALIZED] == pytest.approx(sol.v_coll, abs=1e-12)
    assert np.all(sol.min_switch_time[UNCOLLATERALIZED] == NEVER)
    series = min_remaining_switches(sol)
    assert np.all(series == 0)
    for g in REGIMES:
        assert all(band.count == 0 for band in sol.boundary[g])


def test_value_not_above_no_switch_values(setup):
    paths, cp, cfg = setup
    sol = solve_switching(paths, cp, cfg)
    guard = 3 * max(sol.v_cva_se, sol.v_coll_se, sol.v_star_se)
    assert sol.v_star <= min(sol.v_cva, sol.v_coll) + guard
    assert sol.v_start[COLLATERALIZED] <= sol.v_coll + guard


def test_monotone_in_switch_costs(setup):
    paths, cp, _ = setup
    values = []
    for c in (0.0, 0.005, 0.02):
        cfg = CostConfig(switch_to_coll_cost=c, switch_to_uncoll_cost=c)
        values.append(solve_switching(paths, cp, cfg).v_star)
    assert values[0] <= values[1] + 1e-12 <= values[2] + 2e-12


def test_policy_value_self_consistency(setup):
    paths, cp, cfg = setup
    sol = solve_switching(paths, cp, cfg)
    repriced = reprice_strategy(sol, paths, cp, cfg)
    assert repriced.mean() == pytest.approx(sol.v_star, abs=1e-10)
    assert np.allclose(repriced, sol.value_paths[UNCOLLATERALIZED], atol=1e-10)


def test_deterministic_rerun(setup):
    paths, cp, cfg = setup
    a = solve_switching(paths, cp, cfg)
    b = solve_switching(paths, cp, cfg)
    assert a.v_star == b.v_star
    assert np.array_equal(a.indicators, b.indicators)


def test_value_no_switch_zero_costs(setup):
    paths, _, cfg = setup
    shape = (paths.grid.n_steps + 1, paths.n_paths)
    cp0 = RegimeCostPaths(bcva=np.zeros(shape), coll_cost=np.zeros(shape))
    for g in REGIMES:
        value, se = value_no_switch(paths, cp0, cfg, g)
        assert value == 0.0 and se == 0.0


def test_value_no_switch_single_path_hand_sum():
    from csaswitch.dynamics import PathSet

    grid = TimeGrid(2, 0.5)
    paths = PathSet(
        grid=grid,
        n_paths=1,
        y_factor=np.zeros((3, 1)),
        z_factor=np.zeros((3, 1)),
        short_rate=np.zeros((3, 1)),
        intensity=np.zeros((3, 1)),
        cum_hazard=np.zeros((3, 1)),
        default_step=np.array([3]),
        seed=0,
    )
    cp = RegimeCostPaths(
        bcva=np.array([[0.2], [0.4], [0.0]]), coll_cost=np.zeros((3, 1))
    )
    cfg = CostConfig(delta=0.0)
    value, se = value_no_switch(paths, cp, cfg, UNCOLLATERALIZED)
    # running: (0.2^2 + 0.4^2) * dt, terminal (0 - 0)^2 as a lump
    assert value == pytest.approx((0.04 + 0.16) * 0.5, abs=1e-15)
    assert se == 0.0


def test_nan_abort_names_step(setup):
    paths, cp, cfg = setup
    bad = np.array(cp.bcva, copy=True)
    bad[5, 0] = np.nan
    with pytest.raises(RuntimeError, match="step 5"):
        solve_switching(paths, RegimeCostPaths(bad, cp.coll_cost), cfg)


def test_indicators_track_initial_regime(setup):
    paths, cp, cfg = setup
    sol_u = solve_switching(paths, cp, cfg, initial_regime=UNCOLLATERALIZED)
    sol_c = solve_switching(paths, cp, cfg, initial_regime=COLLATERALIZED)
    if total_switches(sol_u) == 0:
        assert np.all(sol_u.indicators == 1)
    assert sol_c.indicators[0].min() in (0, 1)
    assert other_regime(UNCOLLATERALIZED) == COLLATERALIZED


def test_boundary_entries_on_forced_switch(setup):
    # make collateralized strictly cheaper so the uncollateralized start
    # switches immediately: boundary entries appear at step 0
    paths, cp, cfg = setup
    forced = RegimeCostPaths(
        bcva=np.full_like(cp.bcva, 2.0), coll_cost=np.zeros_like(cp.coll_cost)
    )
    sol = solve_switching(paths, forced, cfg)
    assert total_switches(sol) == paths.n_paths
    bands = sol.boundary[UNCOLLATERALIZED]
    assert bands[0].count == paths.n_paths
    assert bands[0].q50 == pytest.approx(2.0)
    assert extract_boundary(sol) is sol.boundary
    assert np.all(min_remaining_switches(sol)[: 1] == 1)


# --- exact lattice mode ------------------------------------------------------


def test_lattice_decisions_at_known_threshold():
    # state 1 makes the uncollateralized regime expensive; switching is
    # optimal there and only there
    t = np.eye(2)
    running = {
        UNCOLLATERALIZED: [np.array([0.0, 5.0])] * 3,
        COLLATERALIZED: [np.array([1.0, 1.0])] * 3,
    }
    terminal = {g: np.zeros(2) for g in REGIMES}
    values, decisions = solve_switching_lattice(
        [t] * 3, running, terminal,
        {UNCOLLATERALIZED: 0.5, COLLATERALIZED: 0.5},
        1.0, 0.0, UNCOLLATERALIZED,
    )
    assert values[UNCOLLATERALIZED][0] == pytest.approx(0.0)
    # from state 1: pay 0.5 once, then 1.0 per step in the cheap regime
    assert values[UNCOLLATERALIZED][1] == pytest.approx(3.5)
    assert decisions[UNCOLLATERALIZED][0][1] and not decisions[UNCOLLATERALIZED][0][0]


def test_lattice_ladder_budget_one():
    # with one switch allowed the holder still escapes the expensive regime
    t = np.eye(1)
    running = {
        UNCOLLATERALIZED: [np.array([2.0])] * 4,
        COLLATERALIZED: [np.array([0.0])] * 4,
    }
    terminal = {g: np.zeros(1) for g in REGIMES}
    v1, _ = solve_switching_lattice(
        [t] * 4, running, terminal, {g: 0.0 for g in REGIMES},
        1.0, 0.0, UNCOLLATERALIZED, max_switches=1,
    )
    assert v1[UNCOLLATERALIZED][0] == pytest.approx(0.0)


def test_mc_ladder_budget_zero_equals_no_switch(setup):
    paths, cp, cfg = setup
    sol = solve_switching(paths, cp, cfg, max_switches=0)
    assert total_switches(sol) == 0
    assert sol.v_star == pytest.approx(sol.v_cva, abs=1e-12)


def test_mc_ladder_large_budget_close_to_collapsed(setup):
    paths, cp, cfg = setup
    collapsed = solve_switching(paths, cp, cfg)
    laddered = solve_switching(paths, cp, cfg, max_switches=3)
    # both are realised values of feasible strategies bounded by no-switch
    assert laddered.v_star <= collapsed.v_cva + 1e-12
    assert collapsed.v_star <= collapsed.v_cva + 1e-12


def test_min_switch_time_surface_recursion(setup):
    paths, cp, cfg = setup
    sol = solve_switching(paths, cp, cfg)
    for g in REGIMES:
        surf = sol.min_switch_time_all[g]
        dec = sol.switch_decisions[g]
        assert np.array_equal(surf[0], sol.min_switch_time[g])
        assert np.all(surf[-1] == NEVER)
        for n in range(paths.grid.n_steps):
            no_switch = ~(dec[n] & paths.alive(n))
            # no-switch branch copies the next step's value unchanged
            assert np.array_equal(surf[n, no_switch], surf[n + 1, no_switch])
            assert np.all(surf[n, ~no_switch] == n)


def test_more_switching_activity_without_fees(setup):
    paths, cp, _ = setup
    free = solve_switching(paths, cp, CostConfig())
    priced = solve_switching(
        paths, cp, CostConfig(switch_to_coll_cost=0.05, switch_to_uncoll_cost=0.05)
    )
    assert total_switches(free) > total_switches(priced)
    series = min_remaining_switches(free)
    assert np.all(np.diff(series) <= 0)
