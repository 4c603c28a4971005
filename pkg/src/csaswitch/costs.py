"""Regime cost processes and the pieces of the switching objective.

Uncollateralized regime: the bilateral credit valuation adjustment is
accumulated backward over the surviving part of each path,

    BCVA(t_i) = (1-R) * E[NPV(t_{i+1}) | state_i] * lambda(t_i) * dt
                + e^{-r dt} * BCVA(t_{i+1}),        BCVA(T) = 0,

with the conditional expectation regressed per step (the symmetric
bilateral form nets the counterparty and own-default legs into a single
signed term; ``split_epe_ene`` regresses the positive and negative parts
separately instead, which differs only by regression noise).

Collateralized regime: posting/holding cash collateral accrues a funding
spread on the expected mark (opportunity spread when holding, borrowing
spread when posting, both entering as positive costs) and carries the
spot collateral itself:

    Fund(t_i) = [ (r_opp-r) E[NPV]^+ + (r_borr-r) E[NPV]^- ] * dt
                + e^{-r dt} * Fund(t_{i+1}),        Fund(T) = 0,
    Coll(t_i) = Fund(t_i) - NPV(t_i),               Coll(T) = -NPV(T).

Both processes freeze at a path's default step (no accrual after
extinction). Running costs are squared deviations from the threshold
``delta``, so the objective is a variance-style penalty and the terminal
reward equals the squared cost state at maturity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .solver import (
    BASIS_COLLATERALIZED,
    BASIS_UNCOLLATERALIZED,
    COLLATERALIZED,
    UNCOLLATERALIZED,
    regress_continuation,
)


@dataclass(frozen=True)
class CostConfig:
    """Contract-level economics of the switching objective."""

    r_free: float = 0.0
    r_borr: float = 0.01
    r_opp: float = 0.03
    recovery: float = 0.4
    switch_to_coll_cost: float = 0.0  # paid when leaving the uncollateralized regime
    switch_to_uncoll_cost: float = 0.0  # paid when leaving the collateralized regime
    delta: float = 0.0
    notional: float = 1000.0
    split_epe_ene: bool = False

    def __post_init__(self):
        if not 0.0 <= self.recovery <= 1.0:
            raise ValueError("recovery must lie in [0, 1]")
        if self.switch_to_coll_cost < 0 or self.switch_to_uncoll_cost < 0:
            raise ValueError("switch costs must be non-negative")
        if self.r_borr < self.r_free or self.r_opp < self.r_free:
            raise ValueError("funding rates cannot undercut the risk-free rate")
        bound = 0.02 * self.notional
        if self.switch_to_coll_cost > bound or self.switch_to_uncoll_cost > bound:
            raise ValueError("switch costs above 2% of notional")


@dataclass(frozen=True)
class RegimeCostPaths:
    """Per step/path cost states for both regimes, shape (n_steps+1, n_paths)."""

    bcva: np.ndarray
    coll_cost: np.ndarray


def _alive_matrix(paths):
    return np.stack([paths.alive(i) for i in range(paths.grid.n_steps + 1)])


def _check_grid(paths, npv):
    shape = (paths.grid.n_steps + 1, paths.n_paths)
    if np.asarray(npv).shape != shape:
        raise ValueError(f"npv matrix shape {np.asarray(npv).shape} != grid shape {shape}")


def _expected_next_npv(paths, npv, step, basis, split):
    """Regressed E[NPV(t_{i+1}) | state_i] on paths alive at ``step``."""
    a = paths.alive(step)
    r = paths.short_rate[step, a]
    lam = paths.intensity[step, a]
    target = npv[step + 1, a]
    if split:
        pos, _ = regress_continuation(basis, r, lam, np.maximum(target, 0.0))
        neg, _ = regress_continuation(basis, r, lam, np.maximum(-target, 0.0))
        fitted = pos - neg
    else:
        fitted, _ = regress_continuation(basis, r, lam, target)
    out = np.zeros(paths.n_paths)
    out[a] = fitted
    return out, a


def bcva_paths(paths, npv, cfg: CostConfig, basis=BASIS_UNCOLLATERALIZED) -> np.ndarray:
    """Backward-accumulated bilateral expected default loss per path."""
    _check_grid(paths, npv)
    n_steps = paths.grid.n_steps
    dt = paths.grid.dt
    disc = np.exp(-cfg.r_free * dt)
    lgd = 1.0 - cfg.recovery
    out = np.zeros((n_steps + 1, paths.n_paths))
    if lgd == 0.0:
        return out
    for i in range(n_steps - 1, -1, -1):
        alive = paths.alive(i)
        if not alive.any():
            continue
        expected, a = _expected_next_npv(paths, npv, i, basis, cfg.split_epe_ene)
        increment = lgd * expected * paths.intensity[i] * dt
        out[i] = np.where(a, increment + disc * out[i + 1], 0.0)
    return out


def coll_cost_paths(paths, npv, cfg: CostConfig, basis=BASIS_COLLATERALIZED) -> np.ndarray:
    """Funding-spread accumulation minus the spot collateral, per path."""
    _check_grid(paths, npv)
    n_steps = paths.grid.n_steps
    dt = paths.grid.dt
    disc = np.exp(-cfg.r_free * dt)
    fund = np.zeros((n_steps + 1, paths.n_paths))
    for i in range(n_steps - 1, -1, -1):
        alive = paths.alive(i)
        if not alive.any():
            continue
        expected, a = _expected_next_npv(paths, npv, i, basis, cfg.split_epe_ene)
        increment = (
            (cfg.r_opp - cfg.r_free) * np.maximum(expected, 0.0)
            + (cfg.r_borr - cfg.r_free) * np.maximum(-expected, 0.0)
        ) * dt
        fund[i] = np.where(a, increment + disc * fund[i + 1], 0.0)
    alive = _alive_matrix(paths)
    return np.where(alive, fund - np.asarray(npv), 0.0)


def build_cost_paths(paths, npv, cfg: CostConfig) -> RegimeCostPaths:
    return RegimeCostPaths(
        bcva=bcva_paths(paths, npv, cfg), coll_cost=coll_cost_paths(paths, npv, cfg)
    )


def running_cost_matrix(regime: str, cost_paths: RegimeCostPaths, cfg: CostConfig):
    """Squared deviation of the regime's cost state from the threshold."""
    if regime == UNCOLLATERALIZED:
        return (np.asarray(cost_paths.bcva) - cfg.delta) ** 2
    if regime == COLLATERALIZED:
        return (np.asarray(cost_paths.coll_cost) - cfg.delta) ** 2
    raise ValueError(f"unknown regime {regime!r}")


def running_cost(regime: str, cost_paths: RegimeCostPaths, step: int, path: int, cfg: CostConfig) -> float:
    return float(running_cost_matrix(regime, cost_paths, cfg)[step, path])


def terminal_reward(regime_at_maturity: str, npv_at_maturity, cfg: CostConfig):
    """Squared terminal cost: returned collateral if active, else the threshold."""
    npv_at_maturity = np.asarray(npv_at_maturity, dtype=float)
    if regime_at_maturity == COLLATERALIZED:
        return (-npv_at_maturity - cfg.delta) ** 2
    if regime_at_maturity == UNCOLLATERALIZED:
        return np.full_like(npv_at_maturity, cfg.delta**2)
    raise ValueError(f"unknown regime {regime_at_maturity!r}")


def switch_cost(from_regime: str, t: float, cfg: CostConfig) -> float:
    """Discounted instantaneous cost of leaving ``from_regime`` at time t."""
    if from_regime == UNCOLLATERALIZED:
        c = cfg.switch_to_coll_cost
    elif from_regime == COLLATERALIZED:
        c = cfg.switch_to_uncoll_cost
    else:
        raise ValueError(f"unknown regime {from_regime!r}")
    return float(np.exp(-cfg.r_free * t) * c)


def dump_cost_csv(cost_paths: RegimeCostPaths, path) -> None:
    bcva = np.asarray(cost_paths.bcva)
    coll = np.asarray(cost_paths.coll_cost)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "path", "bcva", "coll_cost"])
        for i in range(bcva.shape[0]):
            for p in range(bcva.shape[1]):
                w.writerow([i, p, f"{bcva[i, p]:.10g}", f"{coll[i, p]:.10g}"])
