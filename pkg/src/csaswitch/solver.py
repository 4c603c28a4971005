"""Least-squares Monte Carlo solver for the two-regime switching problem.

The contract holder minimises accumulated squared running costs over a
daily grid, choosing at every step between staying in the current
collateral regime and switching to the other one against a fixed cost:

    V_Z(t_n) = min( F_Z(t_n) dt + e^{-r dt} E[ V_Z(t_{n+1}) | state ],
                    c_Z + F_W(t_n) dt + e^{-r dt} E[ V_W(t_{n+1}) | state ] )

with Z the current regime, W the other one, F_Z the regime's squared
cost density and V_Z(T) the terminal reward. Both regime surfaces are
carried through one backward sweep (for two regimes with one switch
opportunity per step this equals the iterated optimal-stopping ladder
whenever c >= 0; the explicit ladder with a capped number of remaining
switches is available for cross-checking).

Conditional expectations come from per-step ordinary least squares on
polynomial features of the state (Longstaff-Schwartz style), fitted on
all alive paths since running costs accrue everywhere. An exact-
expectation variant on a discrete lattice (transition-matrix products
instead of regressions) shares the same recursion and backs the
brute-force validation in :mod:`csaswitch.oracle`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

UNCOLLATERALIZED = "uncollateralized"  # no CSA: credit-loss (BCVA) cost runs
COLLATERALIZED = "collateralized"  # perfect CSA: collateral funding cost runs
REGIMES = (UNCOLLATERALIZED, COLLATERALIZED)


def other_regime(regime: str) -> str:
    if regime == UNCOLLATERALIZED:
        return COLLATERALIZED
    if regime == COLLATERALIZED:
        return UNCOLLATERALIZED
    raise ValueError(f"unknown regime {regime!r}")


# ---------------------------------------------------------------------------
# regression primitive
# ---------------------------------------------------------------------------

_FEATURE_FNS = {
    "const": lambda r, lam: np.ones_like(r),
    "r": lambda r, lam: r,
    "lam": lambda r, lam: lam,
    "r2": lambda r, lam: r * r,
    "lam2": lambda r, lam: lam * lam,
    "r_lam": lambda r, lam: r * lam,
}


@dataclass(frozen=True)
class RegressionBasis:
    """Named polynomial features over (short rate, intensity)."""

    features: tuple[str, ...]

    def __post_init__(self):
        unknown = [f for f in self.features if f not in _FEATURE_FNS]
        if unknown:
            raise ValueError(f"unknown features {unknown}")
        if "const" not in self.features:
            raise ValueError("basis must contain the constant feature")

    def design(self, short_rate, intensity) -> np.ndarray:
        r = np.asarray(short_rate, dtype=float)
        lam = np.asarray(intensity, dtype=float)
        return np.column_stack([_FEATURE_FNS[f](r, lam) for f in self.features])


# intensity enters only where credit risk is alive
BASIS_UNCOLLATERALIZED = RegressionBasis(("const", "r", "lam", "r2", "lam2", "r_lam"))
BASIS_COLLATERALIZED = RegressionBasis(("const", "r", "r2"))


@dataclass
class RegressionReport:
    features: tuple[str, ...]
    coefficients: np.ndarray  # raw-feature space, aligned with ``features``
    n_obs: int
    prediction_se: np.ndarray | None = None  # per-point fitted-value std error


def regress_continuation(
    basis: RegressionBasis, short_rate, intensity, targets, with_prediction_se=False
):
    """OLS fit of targets on the basis features; returns (fitted, report).

    Degenerate (constant) non-intercept features are pruned before the
    fit. Requires at least 10 observations per kept feature; a design
    that is still rank deficient after pruning is an error naming the
    offending features. ``with_prediction_se`` adds the per-point
    standard error of the fitted values to the report.
    """
    targets = np.asarray(targets, dtype=float)
    x = basis.design(short_rate, intensity)
    n = targets.size
    keep = []
    for j, name in enumerate(basis.features):
        if name == "const" or np.std(x[:, j]) > 1e-12:
            keep.append(j)
    names = tuple(basis.features[j] for j in keep)
    x = x[:, keep]
    k = x.shape[1]
    # an intercept-only fit (degenerate state) is just the mean and is
    # defined for any sample size; real regressions need 10x headroom
    if k > 1 and n < 10 * k:
        raise ValueError(f"need >= {10 * k} observations for {k} features, got {n}")

    # centre/scale non-constant columns for conditioning; coefficients are
    # mapped back to the raw features afterwards
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    const_col = [i for i, name in enumerate(names) if name == "const"][0]
    mean[const_col] = 0.0
    scale[const_col] = 1.0
    scale[scale == 0.0] = 1.0
    xs = (x - mean) / scale

    beta_s, _, rank, _ = np.linalg.lstsq(xs, targets, rcond=None)
    if rank < k:
        raise ValueError(
            f"rank-deficient regression design after pruning (features {names})"
        )
    fitted = xs @ beta_s
    beta = beta_s / scale
    beta[const_col] -= np.sum(beta_s * mean / scale)

    pred_se = None
    if with_prediction_se:
        if n > k:
            s2 = float(np.sum((targets - fitted) ** 2)) / (n - k)
            q, _ = np.linalg.qr(xs)
            pred_se = np.sqrt(s2 * np.sum(q * q, axis=1))
        else:
            pred_se = np.zeros(n)
    return fitted, RegressionReport(names, beta, n, pred_se)


# ---------------------------------------------------------------------------
# solution container
# ---------------------------------------------------------------------------

NEVER = -1  # min_switch_time value for "no switch before maturity"


@dataclass
class BoundaryBand:
    """Per-step summary of the cost-state values of paths that first
    switch out of a regime at that step."""

    step: int
    count: int
    q05: float = np.nan
    q50: float = np.nan
    q95: float = np.nan
    lo: float = np.nan
    hi: float = np.nan


@dataclass
class SwitchingSolution:
    """Solved switching problem.

    v_star/v_start/indicators/strategy_trace describe the SELECTED
    strategy (the better of the recovered rule and never-switch, by
    realised mean); switch_decisions/min_switch_time/boundary keep the
    raw backward-recursion diagnostics of the estimated switch regions.
    """

    initial_regime: str
    v_star: float
    v_star_se: float
    v_start: dict  # t=0 value per starting regime
    v_start_se: dict
    v_cva: float  # locked uncollateralized, no switching
    v_cva_se: float
    v_coll: float  # locked collateralized, no switching
    v_coll_se: float
    indicators: np.ndarray  # (n_steps+1, n_paths); 1 = uncollateralized
    switch_decisions: dict  # regime -> (n_steps, n_paths) bool
    min_switch_time: dict  # regime -> (n_paths,) first optimal switch step seen from 0
    strategy_trace: list  # per path: list of (step, new_regime)
    boundary: dict = field(default=None, repr=False)  # regime -> [BoundaryBand]
    value_paths: dict = field(default=None, repr=False)  # regime -> realised per-path cost
    v_smoothed: dict = field(default=None, repr=False)  # regressed t=0 surfaces
    # regime -> (n_steps+1, n_paths) recursive surface: entry (n, p) is the
    # first step >= n at which leaving the regime is optimal (NEVER if none)
    min_switch_time_all: dict = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# Monte Carlo backward sweep
# ---------------------------------------------------------------------------


def _running_costs(cost_paths, cfg):
    f_u = (np.asarray(cost_paths.bcva) - cfg.delta) ** 2
    f_c = (np.asarray(cost_paths.coll_cost) - cfg.delta) ** 2
    return f_u, f_c


def value_no_switch(paths, cost_paths, cfg, regime: str):
    """Discounted expected cost of never leaving ``regime``.

    Returns (value, standard error). Running costs accrue at every
    alive grid point, the final grid point contributing the terminal
    reward (a lump, not a density).
    """
    f_u, f_c = _running_costs(cost_paths, cfg)
    if regime == UNCOLLATERALIZED:
        f = f_u
    elif regime == COLLATERALIZED:
        f = f_c
    else:
        raise ValueError(f"unknown regime {regime!r}")
    per_path = _accumulate_no_switch(f, paths, cfg)
    se = per_path.std(ddof=1) / np.sqrt(per_path.size) if per_path.size > 1 else 0.0
    return float(per_path.mean()), float(se)


def _accumulate_no_switch(f, paths, cfg):
    n_steps = paths.grid.n_steps
    disc = np.exp(-cfg.r_free * paths.grid.times)
    alive = np.stack([paths.alive(i) for i in range(n_steps + 1)])
    weights = np.full(n_steps + 1, paths.grid.dt)
    weights[-1] = 1.0  # terminal reward enters as a lump, not a density
    return ((disc * weights)[:, None] * f * alive).sum(axis=0)


def solve_switching(
    paths,
    cost_paths,
    cfg,
    initial_regime: str = UNCOLLATERALIZED,
    basis_uncollateralized: RegressionBasis = BASIS_UNCOLLATERALIZED,
    basis_collateralized: RegressionBasis = BASIS_COLLATERALIZED,
    max_switches: int | None = None,
    decision_margin_se: float = 1.0,
) -> SwitchingSolution:
    """Backward induction with regressed continuations on simulated paths.

    Each step takes the minimum of the regime's own stay value
    (running cost + discounted fitted continuation) and the other
    regime's stay value plus the switch cost; the value surfaces carry
    the fitted quantities. Updating with fitted rather than realised
    continuations keeps one regime's regression noise from leaking
    permanently into the other surface (realised updates compound every
    mis-switch backward). The reported v_star is the realised forward
    cost of the better of the recovered strategy and never-switch
    (``value_paths`` holds the per-path totals), so policy and value are
    self-consistent by construction; the smoothed backward surfaces stay
    available as ``v_smoothed``.

    ``decision_margin_se``: a switch is taken only when the estimated
    gain clears this many prediction standard errors of the difference
    regression. With zero switch costs the difference targets vanish
    identically, so the margin is exactly zero there and the rule stays
    the (then optimal) myopic running-cost comparison.
    """
    if initial_regime not in REGIMES:
        raise ValueError(f"unknown regime {initial_regime!r}")
    f_u, f_c = _running_costs(cost_paths, cfg)
    n_steps = paths.grid.n_steps
    n_paths = paths.n_paths
    if f_u.shape != (n_steps + 1, n_paths):
        raise ValueError("cost matrices do not match the path grid")
    dt = paths.grid.dt
    disc = float(np.exp(-cfg.r_free * dt))
    c_from_u = cfg.switch_to_coll_cost
    c_from_c = cfg.switch_to_uncoll_cost

    if max_switches is not None:
        return _solve_ladder(
            paths, cost_paths, cfg, initial_regime, max_switches,
            basis_uncollateralized, basis_collateralized,
        )

    alive_T = paths.alive(n_steps)
    v_u = f_u[n_steps] * alive_T  # terminal rewards
    v_c = f_c[n_steps] * alive_T
    dec_u = np.zeros((n_steps, n_paths), dtype=bool)
    dec_c = np.zeros((n_steps, n_paths), dtype=bool)

    for n in range(n_steps - 1, -1, -1):
        a = paths.alive(n)
        new_u = np.zeros(n_paths)
        new_c = np.zeros(n_paths)
        if a.any():
            r_n = paths.short_rate[n, a]
            lam_n = paths.intensity[n, a]
            fit_u, _ = regress_continuation(basis_uncollateralized, r_n, lam_n, v_u[a])
            fit_c, _ = regress_continuation(basis_collateralized, r_n, lam_n, v_c[a])
            # the switch comparison goes through ONE regression of the value
            # difference: with equal switch costs of zero the two surfaces
            # coincide identically, the difference targets are exact zeros and
            # the decision degenerates to the (then rigorously optimal) myopic
            # running-cost comparison instead of a cross-basis noise race
            fit_d, rep_d = regress_continuation(
                basis_uncollateralized, r_n, lam_n, v_c[a] - v_u[a],
                with_prediction_se=True,
            )
            # the difference surface is provably confined to
            # [-c_from_u, +c_from_c] (each regime value is within one
            # switch fee of the other); clip fit excursions back into
            # the feasible band before comparing
            fit_d = np.clip(fit_d, -c_from_u, c_from_c)
            margin = decision_margin_se * disc * rep_d.prediction_se
            delta_stay = (f_c[n, a] - f_u[n, a]) * dt + disc * fit_d
            sw_u = delta_stay + c_from_u < -margin
            sw_c = delta_stay > c_from_c + margin
            dec_u[n, a] = sw_u
            dec_c[n, a] = sw_c
            # value surfaces are sums of squares, hence >= 0: flooring the
            # fits removes artifacts where the polynomial undershoots
            stay_u = f_u[n, a] * dt + disc * np.maximum(fit_u, 0.0)
            stay_c = f_c[n, a] * dt + disc * np.maximum(fit_c, 0.0)
            new_u[a] = np.where(sw_u, c_from_u + stay_c, stay_u)
            new_c[a] = np.where(sw_c, c_from_c + stay_u, stay_c)
        v_u, v_c = new_u, new_c
        if not np.isfinite(v_u).all() or not np.isfinite(v_c).all():
            raise RuntimeError(f"non-finite value surface at step {n}")

    return _finalize(paths, cost_paths, cfg, initial_regime, v_u, v_c, dec_u, dec_c)


def _solve_ladder(
    paths, cost_paths, cfg, initial_regime, max_switches,
    basis_u, basis_c,
):
    """Explicit iterated-optimal-stopping ladder with <= max_switches left.

    Level l's switch target is level l-1's same-step value including
    that regime's running cost. Kept for validation on small problems;
    the collapsed sweep is the production path.
    """
    f_u, f_c = _running_costs(cost_paths, cfg)
    n_steps, n_paths = paths.grid.n_steps, paths.n_paths
    dt = paths.grid.dt
    disc = float(np.exp(-cfg.r_free * dt))
    cost_from = {UNCOLLATERALIZED: cfg.switch_to_coll_cost,
                 COLLATERALIZED: cfg.switch_to_uncoll_cost}
    alive = np.stack([paths.alive(i) for i in range(n_steps + 1)])
    bases = {UNCOLLATERALIZED: basis_u, COLLATERALIZED: basis_c}
    f = {UNCOLLATERALIZED: f_u, COLLATERALIZED: f_c}

    def sweep(prev):
        """One ladder level; ``prev`` is None for the no-switch level."""
        vals = {}
        dec = {g: np.zeros((n_steps, n_paths), dtype=bool) for g in REGIMES}
        for g in REGIMES:
            vg = np.zeros((n_steps + 1, n_paths))
            vg[n_steps] = f[g][n_steps] * alive[n_steps]
            vals[g] = vg
        for n in range(n_steps - 1, -1, -1):
            a = alive[n]
            if not a.any():
                continue
            stay = {}
            for g in REGIMES:
                fit, _ = regress_continuation(
                    bases[g], paths.short_rate[n, a], paths.intensity[n, a],
                    vals[g][n + 1, a],
                )
                stay[g] = f[g][n, a] * dt + disc * np.maximum(fit, 0.0)
            for g in REGIMES:
                w = other_regime(g)
                if prev is None:
                    vals[g][n, a] = stay[g]
                else:
                    target = cost_from[g] + prev[w][n, a]
                    sw = target < stay[g]
                    dec[g][n, a] = sw
                    vals[g][n, a] = np.where(sw, target, stay[g])
        return vals, dec

    vals, _ = sweep(None)
    decisions = []
    for _level in range(max_switches):
        vals, dec = sweep(vals)
        decisions.append(dec)

    top = (
        decisions[-1]
        if decisions
        else {g: np.zeros((n_steps, n_paths), bool) for g in REGIMES}
    )
    return _finalize(
        paths, cost_paths, cfg, initial_regime,
        vals[UNCOLLATERALIZED][0], vals[COLLATERALIZED][0],
        top[UNCOLLATERALIZED], top[COLLATERALIZED],
        ladder_decisions=decisions,
    )


def _forward_strategy(paths, dec_u, dec_c, initial_regime, ladder_decisions=None):
    """Realised regime per grid point and the switch indicator per step."""
    n_steps, n_paths = dec_u.shape
    regime_code = {UNCOLLATERALIZED: 1, COLLATERALIZED: 0}
    name_of = {1: UNCOLLATERALIZED, 0: COLLATERALIZED}
    indicators = np.zeros((n_steps + 1, n_paths), dtype=np.int8)
    current = np.full(n_paths, regime_code[initial_regime], dtype=np.int8)
    switched = np.zeros((n_steps, n_paths), dtype=bool)
    if ladder_decisions is None:
        for n in range(n_steps):
            d = np.where(current == 1, dec_u[n], dec_c[n]) & paths.alive(n)
            switched[n] = d
            current = np.where(d, 1 - current, current).astype(np.int8)
            indicators[n] = current
    else:
        levels = np.full(n_paths, len(ladder_decisions))
        for n in range(n_steps):
            alive_n = paths.alive(n)
            d = np.zeros(n_paths, dtype=bool)
            for p in np.nonzero(alive_n & (levels > 0))[0]:
                g = name_of[int(current[p])]
                d[p] = ladder_decisions[levels[p] - 1][g][n, p]
            switched[n] = d
            levels = np.where(d, levels - 1, levels)
            current = np.where(d, 1 - current, current).astype(np.int8)
            indicators[n] = current
    indicators[n_steps] = current
    return indicators, switched


def _realized_cost(paths, cost_paths, cfg, indicators, switched):
    """Forward accumulation of discounted costs under a realised strategy."""
    f_u, f_c = _running_costs(cost_paths, cfg)
    n_steps = paths.grid.n_steps
    alive = np.stack([paths.alive(i) for i in range(n_steps + 1)])
    disc = np.exp(-cfg.r_free * paths.grid.times)
    weights = np.full(n_steps + 1, paths.grid.dt)
    weights[-1] = 1.0
    f_sel = np.where(indicators == 1, f_u, f_c)
    totals = ((disc * weights)[:, None] * f_sel * alive).sum(axis=0)
    # a switch recorded at step n flipped INTO indicators[n]; the fee is
    # the one charged for leaving the previous regime
    fee = np.where(
        indicators[:n_steps] == 0, cfg.switch_to_coll_cost, cfg.switch_to_uncoll_cost
    )
    totals += (disc[:n_steps, None] * fee * switched).sum(axis=0)
    return totals


def _min_switch_surface(paths, dec):
    """tau(n, p): first step >= n at which leaving the regime is optimal.

    Recursive form: tau(n) = n on a switch decision, else tau(n+1);
    NEVER past the last decision. Constant along no-switch stretches.
    """
    n_steps, n_paths = dec.shape
    out = np.full((n_steps + 1, n_paths), NEVER)
    for n in range(n_steps - 1, -1, -1):
        out[n] = np.where(paths.alive(n) & dec[n], n, out[n + 1])
    return out


def _finalize(
    paths, cost_paths, cfg, initial_regime,
    v_u0, v_c0, dec_u, dec_c,
    ladder_decisions=None,
):
    n_steps, n_paths = paths.grid.n_steps, paths.n_paths
    tau_all = {
        UNCOLLATERALIZED: _min_switch_surface(paths, dec_u),
        COLLATERALIZED: _min_switch_surface(paths, dec_c),
    }
    tau_u = tau_all[UNCOLLATERALIZED][0]
    tau_c = tau_all[COLLATERALIZED][0]
    # smoothed (regressed) t=0 surfaces: diagnostics only; the reported
    # values are the realised costs of the recovered strategy, so policy
    # and value are self-consistent by construction
    v_smoothed = {
        UNCOLLATERALIZED: float(v_u0.mean()),
        COLLATERALIZED: float(v_c0.mean()),
    }
    v_cva, v_cva_se = value_no_switch(paths, cost_paths, cfg, UNCOLLATERALIZED)
    v_coll, v_coll_se = value_no_switch(paths, cost_paths, cfg, COLLATERALIZED)

    decisions = {UNCOLLATERALIZED: dec_u, COLLATERALIZED: dec_c}
    f_u, f_c = _running_costs(cost_paths, cfg)
    no_switch_pp = {
        UNCOLLATERALIZED: _accumulate_no_switch(f_u, paths, cfg),
        COLLATERALIZED: _accumulate_no_switch(f_c, paths, cfg),
    }
    realized = {}
    v_start = {}
    v_start_se = {}
    name_of = {1: UNCOLLATERALIZED, 0: COLLATERALIZED}
    regime_code = {UNCOLLATERALIZED: 1, COLLATERALIZED: 0}
    for g in REGIMES:
        ind_g, sw_g = _forward_strategy(paths, dec_u, dec_c, g, ladder_decisions)
        cand = _realized_cost(paths, cost_paths, cfg, ind_g, sw_g)
        # the reported strategy is the better of the two evaluated feasible
        # policies: the recovered switching rule or plain never-switch
        if no_switch_pp[g].mean() < cand.mean():
            realized[g] = no_switch_pp[g]
            ind_g = np.full_like(ind_g, regime_code[g])
            sw_g = np.zeros_like(sw_g)
        else:
            realized[g] = cand
        v_start[g] = float(realized[g].mean())
        v_start_se[g] = (
            float(realized[g].std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
        )
        if g == initial_regime:
            indicators, switched = ind_g, sw_g

    trace = [[] for _ in range(n_paths)]
    for n, p in zip(*np.nonzero(switched)):
        trace[p].append((int(n), name_of[int(indicators[n, p])]))

    return SwitchingSolution(
        initial_regime=initial_regime,
        v_star=v_start[initial_regime],
        v_star_se=v_start_se[initial_regime],
        v_start=v_start,
        v_start_se=v_start_se,
        v_cva=v_cva,
        v_cva_se=v_cva_se,
        v_coll=v_coll,
        v_coll_se=v_coll_se,
        indicators=indicators,
        switch_decisions=decisions,
        min_switch_time={UNCOLLATERALIZED: tau_u, COLLATERALIZED: tau_c},
        strategy_trace=trace,
        boundary=extract_boundary_from(
            {UNCOLLATERALIZED: tau_u, COLLATERALIZED: tau_c}, cost_paths, n_steps
        ),
        value_paths=realized,
        v_smoothed=v_smoothed,
        min_switch_time_all=tau_all,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def extract_boundary_from(min_switch_time, cost_paths, n_steps):
    """Empirical switching bands: stats of the regime's cost-state values
    over the paths whose first optimal switch from that regime is step n."""
    state = {
        UNCOLLATERALIZED: np.asarray(cost_paths.bcva),
        COLLATERALIZED: np.asarray(cost_paths.coll_cost),
    }
    out = {}
    for g in REGIMES:
        tau = min_switch_time[g]
        bands = []
        for n in range(n_steps + 1):
            vals = state[g][n, tau == n]
            if vals.size:
                q05, q50, q95 = np.quantile(vals, [0.05, 0.5, 0.95])
                bands.append(
                    BoundaryBand(n, int(vals.size), q05, q50, q95,
                                 float(vals.min()), float(vals.max()))
                )
            else:
                bands.append(BoundaryBand(n, 0))
        out[g] = bands
    return out


def extract_boundary(solution: SwitchingSolution, paths=None):
    """Per-step empirical switching bands of a solved problem."""
    return solution.boundary


def min_remaining_switches(solution: SwitchingSolution) -> np.ndarray:
    """Minimum over paths of the optimal switches still ahead at each step."""
    n_steps = solution.indicators.shape[0] - 1
    n_paths = solution.indicators.shape[1]
    counts = np.zeros((n_steps + 1, n_paths), dtype=int)
    for p, trace in enumerate(solution.strategy_trace):
        for step, _ in trace:
            counts[: step + 1, p] += 1
    return counts.min(axis=1)


def total_switches(solution: SwitchingSolution) -> int:
    return sum(len(t) for t in solution.strategy_trace)


def reprice_strategy(solution: SwitchingSolution, paths, cost_paths, cfg) -> np.ndarray:
    """Forward re-accumulation of costs along the recovered strategy.

    Returns per-path discounted totals; their mean must reproduce the
    reported v_star (policy/value self-consistency).
    """
    f_u, f_c = _running_costs(cost_paths, cfg)
    f = {1: f_u, 0: f_c}
    cost_from = {1: cfg.switch_to_coll_cost, 0: cfg.switch_to_uncoll_cost}
    n_steps, n_paths = paths.grid.n_steps, paths.n_paths
    dt = paths.grid.dt
    disc = np.exp(-cfg.r_free * paths.grid.times)
    regime_code = {UNCOLLATERALIZED: 1, COLLATERALIZED: 0}
    acc = np.zeros(n_paths)
    switch_at = [dict(t) for t in solution.strategy_trace]
    for p in range(n_paths):
        g = regime_code[solution.initial_regime]
        for n in range(n_steps):
            if not paths.alive(n)[p]:
                break
            if n in switch_at[p]:
                acc[p] += disc[n] * cost_from[g]
                g = 1 - g
            acc[p] += disc[n] * f[g][n, p] * dt
        if paths.alive(n_steps)[p]:
            acc[p] += disc[n_steps] * f[g][n_steps, p]
    return acc


# ---------------------------------------------------------------------------
# exact-expectation variant on a discrete lattice
# ---------------------------------------------------------------------------


def solve_switching_lattice(
    transitions,
    running,
    terminal,
    switch_cost_from,
    dt: float,
    rate: float,
    initial_regime: str,
    max_switches: int | None = None,
):
    """Same recursion with exact conditional expectations on a lattice.

    ``transitions``: list (len n_steps) of row-stochastic matrices
    (S_n x S_{n+1}); ``running``: dict regime -> list of per-state cost
    densities; ``terminal``: dict regime -> terminal rewards at step
    n_steps; ``switch_cost_from``: dict regime -> cost. Returns
    ``(values, decisions)`` where values[regime] is the per-state value
    at step 0 and decisions[regime][n] the per-state switch indicator.
    """
    n_steps = len(transitions)
    disc = float(np.exp(-rate * dt))

    if max_switches is None:
        v = {g: np.asarray(terminal[g], dtype=float).copy() for g in REGIMES}
        decisions = {g: [None] * n_steps for g in REGIMES}
        for n in range(n_steps - 1, -1, -1):
            p = np.asarray(transitions[n], dtype=float)
            stay = {
                g: np.asarray(running[g][n], dtype=float) * dt + disc * (p @ v[g])
                for g in REGIMES
            }
            new = {}
            for g in REGIMES:
                w = other_regime(g)
                sw = switch_cost_from[g] + stay[w] < stay[g]
                decisions[g][n] = sw
                new[g] = np.where(sw, switch_cost_from[g] + stay[w], stay[g])
            v = new
        return v, decisions

    # ladder: value with l switches left; switch target is level l-1
    levels = [{g: np.asarray(terminal[g], dtype=float).copy() for g in REGIMES}]
    vals0 = {g: None for g in REGIMES}
    v_prev = None
    for level in range(0, max_switches + 1):
        v = {g: np.asarray(terminal[g], dtype=float).copy() for g in REGIMES}
        vs = {g: [None] * (n_steps + 1) for g in REGIMES}
        for g in REGIMES:
            vs[g][n_steps] = v[g]
        decisions = {g: [None] * n_steps for g in REGIMES}
        for n in range(n_steps - 1, -1, -1):
            p = np.asarray(transitions[n], dtype=float)
            new = {}
            for g in REGIMES:
                stay = np.asarray(running[g][n], dtype=float) * dt + disc * (p @ vs[g][n + 1])
                if level == 0:
                    new[g] = stay
                    decisions[g][n] = np.zeros_like(stay, dtype=bool)
                else:
                    w = other_regime(g)
                    target = switch_cost_from[g] + v_prev[w][n]
                    sw = target < stay
                    decisions[g][n] = sw
                    new[g] = np.where(sw, target, stay)
            for g in REGIMES:
                vs[g][n] = new[g]
        v_prev = vs
        vals0 = {g: vs[g][0] for g in REGIMES}
    return vals0, decisions


def write_values_csv(solution: SwitchingSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value", "standard_error"])
        w.writerow(["v_star", solution.v_star, solution.v_star_se])
        w.writerow(["v_cva", solution.v_cva, solution.v_cva_se])
        w.writerow(["v_coll", solution.v_coll, solution.v_coll_se])
        for g in REGIMES:
            w.writerow([f"v_start_{g}", solution.v_start[g], solution.v_start_se[g]])


def write_indicators_csv(solution: SwitchingSolution, path) -> None:
    ind = solution.indicators
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "path", "regime"])  # 1 = uncollateralized
        for i in range(ind.shape[0]):
            for p in range(ind.shape[1]):
                w.writerow([i, p, int(ind[i, p])])


def write_boundary_csv(solution: SwitchingSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "regime", "count", "q05", "q50", "q95", "min", "max"])
        for g in REGIMES:
            for band in solution.boundary[g]:
                w.writerow(
                    [band.step, g, band.count, band.q05, band.q50, band.q95, band.lo, band.hi]
                )


def write_switches_csv(solution: SwitchingSolution, path) -> None:
    series = min_remaining_switches(solution)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "min_remaining_switches"])
        for i, v in enumerate(series):
            w.writerow([i, int(v)])
