"""Simulation of the correlated market/credit state and default times.

State vector per path: two additive Gaussian short-rate factors (G2++,
exact Ornstein-Uhlenbeck transitions), a CIR default intensity
(full-truncation Euler), the trapezoidal cumulated hazard and a default
step sampled by inverting the hazard against a unit-exponential draw
(Cox / doubly-stochastic default time, cf. Brigo & Mercurio 2006, ch. 22).

Short rate: r(t) = y(t) + z(t) + phi(t), with

    dy = -mu * y dt + sigma  dW1,   y(0) = 0
    dz = -nu * z dt + eta    dW2,   z(0) = 0,   d<W1,W2> = rho dt

and phi the deterministic shift that fits the initial discount curve.

CIR intensity:

    dlam = kappa * (gamma - lam) dt + upsilon * sqrt(lam) dW_lam

Randomness is counter-based: path i draws from a dedicated Philox
stream keyed (seed, i) with a fixed block layout, so a path is
bit-identical no matter how paths are batched or parallelised, and the
rate-factor draws do not move when intensity parameters change.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .curve import YieldCurve


@dataclass(frozen=True)
class G2Params:
    """Two-factor Gaussian short-rate parameters."""

    mu: float  # mean-reversion speed of factor y (1/years)
    nu: float  # mean-reversion speed of factor z (1/years)
    sigma: float  # vol of y (per sqrt-year)
    eta: float  # vol of z (per sqrt-year)
    rho: float  # instantaneous factor correlation
    r0: float | None = None  # initial short rate; None = take f(0,0) from the curve

    def __post_init__(self):
        for name in ("mu", "nu", "sigma", "eta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [-1, 1], got {self.rho}")


@dataclass(frozen=True)
class CIRParams:
    """Square-root mean-reverting intensity parameters."""

    kappa: float
    gamma: float
    upsilon: float
    lambda0: float

    def __post_init__(self):
        for name in ("kappa", "gamma", "upsilon", "lambda0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")

    @property
    def feller_satisfied(self) -> bool:
        return 2.0 * self.kappa * self.gamma >= self.upsilon**2


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with n_steps intervals of width dt (n_steps+1 points)."""

    n_steps: int
    dt: float

    def __post_init__(self):
        if self.n_steps < 1 or self.dt <= 0:
            raise ValueError("need n_steps >= 1 and dt > 0")

    @property
    def maturity(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def matches_maturity(self, maturity: float, tol: float = 1e-12) -> bool:
        return abs(self.maturity - maturity) <= tol


# default_step value meaning "no default on the grid"
def no_default_sentinel(grid: TimeGrid) -> int:
    return grid.n_steps + 1


@dataclass(frozen=True)
class PathSet:
    """Immutable bundle of simulated state, shape (n_steps+1, n_paths)."""

    grid: TimeGrid
    n_paths: int
    y_factor: np.ndarray
    z_factor: np.ndarray
    short_rate: np.ndarray
    intensity: np.ndarray
    cum_hazard: np.ndarray
    default_step: np.ndarray  # first grid index with Lambda >= xi, else sentinel
    seed: int
    phi: np.ndarray = field(default=None, repr=False)

    def alive(self, step: int) -> np.ndarray:
        """Paths not yet defaulted at grid index ``step``."""
        return step < self.default_step

    @property
    def defaulted(self) -> np.ndarray:
        return self.default_step <= self.grid.n_steps


def _path_rng(seed: int, path: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_blocks(seed: int, n_paths: int, n_steps: int):
    """Per-path fixed-layout draws: (n_steps, 3) normals + 1 exponential.

    Columns: 0 -> y shock, 1 -> z shock, 2 -> intensity shock. The
    exponential is the default-time threshold. Fixed layout keeps rate
    draws identical across intensity-parameter changes at a given seed.
    """
    normals = np.empty((n_steps, 3, n_paths))
    exps = np.empty(n_paths)
    for p in range(n_paths):
        rng = _path_rng(seed, p)
        normals[:, :, p] = rng.standard_normal((n_steps, 3))
        exps[p] = rng.standard_exponential()
    return normals, exps


def b_factor(a: float, t) -> np.ndarray:
    """(1 - exp(-a t)) / a with the a -> 0 limit t."""
    t = np.asarray(t, dtype=float)
    if a == 0.0:
        return t.copy()
    return -np.expm1(-a * t) / a


def fit_phi(params: G2Params, curve: YieldCurve, grid: TimeGrid) -> np.ndarray:
    """Deterministic shift fitting the initial term structure, on the grid.

    phi(t) = f(0,t) + sigma^2/(2 mu^2) (1-e^{-mu t})^2
                    + eta^2/(2 nu^2) (1-e^{-nu t})^2
                    + rho sigma eta/(mu nu) (1-e^{-mu t})(1-e^{-nu t})

    with f(0,t) the curve's instantaneous forward (finite difference of
    -ln df). The b_factor form keeps the mu,nu -> 0 limits finite.
    """
    if curve.max_time + 1e-12 < grid.maturity:
        raise ValueError("curve does not cover the grid horizon")
    t = grid.times
    fwd_h = min(grid.dt / 2.0, 1e-3)
    f0 = curve.instantaneous_forward(t, h=fwd_h)
    by = b_factor(params.mu, t)
    bz = b_factor(params.nu, t)
    phi = (
        f0
        + 0.5 * (params.sigma * by) ** 2
        + 0.5 * (params.eta * bz) ** 2
        + params.rho * params.sigma * params.eta * by * bz
    )
    if params.r0 is not None and abs(phi[0] - params.r0) > 1e-6:
        raise ValueError(
            f"stated r0={params.r0} is inconsistent with the curve's "
            f"short-end forward f(0,0)={phi[0]:.8f}"
        )
    return phi


def simulate_g2pp(
    params: G2Params,
    phi: np.ndarray,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    normals: np.ndarray | None = None,
    literal_cross_drift: bool = False,
):
    """Exact-transition simulation of the two OU factors.

    Returns (y, z, short_rate), each (n_steps+1, n_paths). ``normals``
    allows an orchestrator to supply the shared draw block.
    ``literal_cross_drift`` reproduces, via Euler, the variant drift
    dz = -nu * y dt (a comparison mode; the default is the named model).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n = grid.n_steps
    dt = grid.dt
    if normals is None:
        normals, _ = _draw_blocks(seed, n_paths, n)

    sd_y = params.sigma * np.sqrt(b_factor(2.0 * params.mu, dt))
    sd_z = params.eta * np.sqrt(b_factor(2.0 * params.nu, dt))
    cov = params.rho * params.sigma * params.eta * b_factor(params.mu + params.nu, dt)
    if sd_y > 0 and sd_z > 0:
        rho_step = np.clip(cov / (sd_y * sd_z), -1.0, 1.0)
    else:
        rho_step = 0.0

    decay_y = np.exp(-params.mu * dt)
    decay_z = np.exp(-params.nu * dt)

    y = np.zeros((n + 1, n_paths))
    z = np.zeros((n + 1, n_paths))
    for i in range(n):
        e1 = normals[i, 0]
        e2 = rho_step * e1 + np.sqrt(max(1.0 - rho_step**2, 0.0)) * normals[i, 1]
        y[i + 1] = y[i] * decay_y + sd_y * e1
        if literal_cross_drift:
            z[i + 1] = z[i] - params.nu * y[i] * dt + params.eta * np.sqrt(dt) * e2
        else:
            z[i + 1] = z[i] * decay_z + sd_z * e2

    short_rate = y + z + phi[:, None]
    return y, z, short_rate


def simulate_cir(
    params: CIRParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    normals: np.ndarray | None = None,
):
    """Full-truncation Euler for the intensity; returns (intensity, cum_hazard).

    The auxiliary process may go negative; drift and diffusion use its
    positive part and the stored intensity is the positive part, so the
    intensity matrix is >= 0 everywhere. Cumulated hazard is the
    trapezoidal integral of the stored intensity.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if not params.feller_satisfied:
        warnings.warn(
            f"Feller condition violated (2*kappa*gamma = "
            f"{2 * params.kappa * params.gamma:.5f} < upsilon^2 = "
            f"{params.upsilon ** 2:.5f}); full truncation keeps the intensity >= 0",
            RuntimeWarning,
            stacklevel=2,
        )
    n = grid.n_steps
    dt = grid.dt
    if normals is None:
        blocks, _ = _draw_blocks(seed, n_paths, n)
        shocks = blocks[:, 2, :]
    else:
        shocks = normals

    aux = np.full(n_paths, params.lambda0)
    lam = np.empty((n + 1, n_paths))
    lam[0] = params.lambda0
    sqdt = np.sqrt(dt)
    for i in range(n):
        pos = np.maximum(aux, 0.0)
        aux = aux + params.kappa * (params.gamma - pos) * dt + params.upsilon * np.sqrt(pos) * sqdt * shocks[i]
        lam[i + 1] = np.maximum(aux, 0.0)

    cum = np.zeros_like(lam)
    np.cumsum(0.5 * dt * (lam[:-1] + lam[1:]), axis=0, out=cum[1:])
    return lam, cum


def sample_default_times(
    cum_hazard: np.ndarray, seed: int, exponentials: np.ndarray | None = None
) -> np.ndarray:
    """First grid index where the cumulated hazard crosses an Exp(1) draw.

    Paths whose hazard never reaches their threshold before the horizon
    get the sentinel n_steps + 1.
    """
    if np.any(np.diff(cum_hazard, axis=0) < -1e-12):
        raise ValueError("cum_hazard must be non-decreasing along each path")
    n_steps = cum_hazard.shape[0] - 1
    n_paths = cum_hazard.shape[1]
    if exponentials is None:
        _, exponentials = _draw_blocks(seed, n_paths, n_steps)
    crossed = cum_hazard >= exponentials[None, :]
    first = np.argmax(crossed, axis=0)
    never = ~crossed.any(axis=0)
    first[never] = n_steps + 1
    return first


def simulate(
    g2: G2Params,
    cir: CIRParams,
    curve: YieldCurve,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    rho_rate_intensity: float = 0.0,
    literal_cross_drift: bool = False,
) -> PathSet:
    """Full correlated simulation producing an immutable PathSet.

    ``rho_rate_intensity`` correlates the intensity shock with the
    (normalised) short-rate shock; the reference runs leave it at 0.
    """
    if not -1.0 <= rho_rate_intensity <= 1.0:
        raise ValueError("rho_rate_intensity must be in [-1, 1]")
    phi = fit_phi(g2, curve, grid)
    normals, exps = _draw_blocks(seed, n_paths, grid.n_steps)

    lam_shocks = normals[:, 2, :]
    if rho_rate_intensity != 0.0:
        # unit-variance combination of the correlated factor shocks
        sd_y = g2.sigma * np.sqrt(b_factor(2.0 * g2.mu, grid.dt))
        sd_z = g2.eta * np.sqrt(b_factor(2.0 * g2.nu, grid.dt))
        cov = g2.rho * g2.sigma * g2.eta * b_factor(g2.mu + g2.nu, grid.dt)
        rho_step = cov / (sd_y * sd_z) if sd_y > 0 and sd_z > 0 else 0.0
        e1 = normals[:, 0, :]
        e2 = rho_step * e1 + np.sqrt(max(1.0 - rho_step**2, 0.0)) * normals[:, 1, :]
        rate_shock = sd_y * e1 + sd_z * e2
        var = sd_y**2 + sd_z**2 + 2.0 * rho_step * sd_y * sd_z
        if var > 0:
            u = rate_shock / np.sqrt(var)
            lam_shocks = (
                rho_rate_intensity * u
                + np.sqrt(1.0 - rho_rate_intensity**2) * normals[:, 2, :]
            )

    y, z, r = simulate_g2pp(
        g2, phi, grid, n_paths, seed, normals=normals, literal_cross_drift=literal_cross_drift
    )
    lam, cum = simulate_cir(cir, grid, n_paths, seed, normals=lam_shocks)
    default_step = sample_default_times(cum, seed, exponentials=exps)
    return PathSet(
        grid=grid,
        n_paths=n_paths,
        y_factor=y,
        z_factor=z,
        short_rate=r,
        intensity=lam,
        cum_hazard=cum,
        default_step=default_step,
        seed=seed,
        phi=phi,
    )


def dump_paths_csv(paths: PathSet, path) -> None:
    """Columnar debug dump: one row per (step, path)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "path", "y", "z", "r", "lambda", "Lambda", "defaulted"])
        for i in range(paths.grid.n_steps + 1):
            dead = ~paths.alive(i)
            for p in range(paths.n_paths):
                w.writerow(
                    [
                        i,
                        p,
                        f"{paths.y_factor[i, p]:.10g}",
                        f"{paths.z_factor[i, p]:.10g}",
                        f"{paths.short_rate[i, p]:.10g}",
                        f"{paths.intensity[i, p]:.10g}",
                        f"{paths.cum_hazard[i, p]:.10g}",
                        int(dead[p]),
                    ]
                )
