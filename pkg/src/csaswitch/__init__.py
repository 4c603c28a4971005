"""Monte Carlo valuation of a defaultable interest-rate swap whose
collateral agreement can be switched on and off at a cost.

Modules: ``curve`` (discount curve), ``dynamics`` (rate/intensity/default
simulation), ``swap`` (path-wise NPV and exposure), ``costs`` (regime
cost processes), ``solver`` (regression-based switching solver),
``oracle`` (brute-force validation), ``cli`` (scenario runner).
"""

from .costs import CostConfig, RegimeCostPaths, build_cost_paths
from .curve import MarketQuote, YieldCurve, build_curve, bundled_market_quotes, par_swap_rate
from .dynamics import CIRParams, G2Params, PathSet, TimeGrid, simulate
from .solver import (
    COLLATERALIZED,
    UNCOLLATERALIZED,
    SwitchingSolution,
    solve_switching,
    value_no_switch,
)
from .swap import ExposureProfile, SwapSpec, exposure_profile, npv_matrix, swap_npv

__version__ = "0.1.0"
