"""Closed-form machinery for optimal liquidation schedules with quadratic costs.

A trader sells down an inventory over [0, T] against three quadratic costs:
an instantaneous impact cost lam * u^2 on the trading rate u, a running
inventory penalty gamma * X^2, and a terminal penalty big_gamma * X_T^2.
Everything in this module derives from the scalar kernel

    G(t) = beta * cosh(beta * t) + (big_gamma / lam) * sinh(beta * t),
    beta = sqrt(gamma / lam),

which solves G'' = beta^2 * G with G(0) = beta and G'(0) = beta * big_gamma / lam.
The optimal selling rate decomposes as

    u(t) = urgency(t) * X_t - v1(t),

where urgency(t) = G'(T - t) / G(T - t) is the signal-free liquidation speed
per unit of inventory and v1(t) is a market signal term (nonpositive when the
price is predicted to fall, so -v1 adds selling pressure).  The signal-free
trajectory is X_t = x0 * G(T - t) / G(T), and a signal bends it via

    X_t = G(T - t) / G(T) * x0 + int_0^t G(T - t) / G(T - s) * v1(s) ds.

All evaluators below are overflow safe: for beta * t > 30 they switch to a
scaled exponential form, and ratios are computed through log differences so
that urgency and positions stay finite far beyond the range where G itself
overflows a double.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CostParams",
    "GKernel",
    "TradePlan",
    "g_value",
    "urgency",
    "ac_position",
    "optimal_rate",
    "trajectory_from_signal",
    "value_formula",
]

# raw cosh/sinh up to here; scaled exponential form beyond
_EXP_SWITCH = 30.0
# below here a short Taylor series replaces cosh/sinh
_SERIES_SWITCH = 1e-4


def _positive(name: str, value: float) -> float:
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise ValueError(f"{name} must be strictly positive and finite, got {value!r}")
    return v


@dataclass(frozen=True)
class CostParams:
    """Cost and problem-size parameters of one liquidation problem.

    lam        impact cost coefficient (price per unit rate)
    gamma      running inventory penalty coefficient
    big_gamma  terminal inventory penalty coefficient
    horizon    trading horizon T
    x0         initial inventory (shares)
    """

    lam: float
    gamma: float
    big_gamma: float
    horizon: float
    x0: float

    def __post_init__(self):
        for name in ("lam", "gamma", "big_gamma", "horizon", "x0"):
            _positive(name, getattr(self, name))


@dataclass(frozen=True)
class GKernel:
    """Reduced kernel parameters: beta = sqrt(gamma/lam), gamma_ratio = big_gamma/lam."""

    beta: float
    gamma_ratio: float
    horizon: float

    def __post_init__(self):
        for name in ("beta", "gamma_ratio", "horizon"):
            _positive(name, getattr(self, name))

    @classmethod
    def from_costs(cls, costs: CostParams) -> "GKernel":
        return cls(
            beta=math.sqrt(costs.gamma / costs.lam),
            gamma_ratio=costs.big_gamma / costs.lam,
            horizon=costs.horizon,
        )


@dataclass(frozen=True)
class TradePlan:
    """A schedule sampled on a time grid: positions and selling rates.

    Positions and rates have the same length as grid.  rates[i] is the selling
    rate applied on [grid[i], grid[i+1]); rates[-1] is the terminal rate.  For
    plans built by forward Euler the identity
    positions[i+1] = positions[i] - rates[i] * dt holds exactly; closed-form
    plans satisfy it to O(dt^2) per step (see max_euler_residual).
    """

    grid: np.ndarray
    positions: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be a 1-d array with at least two points")
        if not np.all(np.diff(grid) > 0.0):
            raise ValueError("grid must be strictly increasing")
        if pos.shape != grid.shape or rates.shape != grid.shape:
            raise ValueError("positions and rates must match the grid shape")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "rates", rates)

    def max_euler_residual(self) -> float:
        """Largest |positions[i+1] - (positions[i] - rates[i] * dt)| over the grid."""
        dt = np.diff(self.grid)
        pred = self.positions[:-1] - self.rates[:-1] * dt
        return float(np.max(np.abs(self.positions[1:] - pred)))


def _g_raw(beta: float, g: float, x: float) -> float:
    # series branch keeps full relative accuracy for tiny arguments
    if x < _SERIES_SWITCH:
        x2 = x * x
        c = 1.0 + x2 * (0.5 + x2 * (1.0 / 24.0 + x2 / 720.0))
        s = x * (1.0 + x2 * (1.0 / 6.0 + x2 * (1.0 / 120.0 + x2 / 5040.0)))
        return beta * c + g * s
    return beta * math.cosh(x) + g * math.sinh(x)


def _log_g(beta: float, g: float, x: float) -> float:
    """log G(t) evaluated at x = beta * t, stable for arbitrarily large x."""
    if x <= _EXP_SWITCH:
        return math.log(_g_raw(beta, g, x))
    r = (beta - g) / (beta + g)
    return math.log(0.5 * (beta + g)) + x + math.log1p(r * math.exp(-2.0 * x))


def _log_g_array(beta: float, g: float, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= _EXP_SWITCH
    xs = x[small]
    out[small] = np.log(beta * np.cosh(xs) + g * np.sinh(xs))
    if not np.all(small):
        xl = x[~small]
        r = (beta - g) / (beta + g)
        out[~small] = math.log(0.5 * (beta + g)) + xl + np.log1p(r * np.exp(-2.0 * xl))
    return out


def g_value(kernel: GKernel, t: float) -> float:
    """The kernel G at argument t >= 0.

    G(0) = beta exactly.  For beta * t > 30 a scaled exponential form
    0.5 * (beta + g) * exp(beta t) * (1 + r * exp(-2 beta t)) avoids
    overflow of the intermediate cosh/sinh for as long as the value itself
    is representable.
    """
    t = float(t)
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    beta, g = kernel.beta, kernel.gamma_ratio
    x = beta * t
    if x <= _EXP_SWITCH:
        return _g_raw(beta, g, x)
    r = (beta - g) / (beta + g)
    return 0.5 * (beta + g) * math.exp(x) * (1.0 + r * math.exp(-2.0 * x))


def urgency(kernel: GKernel, t: float) -> float:
    """Signal-free liquidation speed per unit inventory, G'(T-t) / G(T-t).

    Evaluated in a tanh form that never overflows:
    beta * (beta * tanh(beta tau) + g) / (beta + g * tanh(beta tau)), tau = T - t.
    At t = T this is exactly gamma_ratio; as tau grows it saturates at beta.
    The value always lies between min(beta, gamma_ratio) and max(beta, gamma_ratio).
    """
    t = float(t)
    tau = kernel.horizon - t
    if t < 0.0 or tau < 0.0:
        raise ValueError(f"t must lie in [0, horizon], got {t!r}")
    beta, g = kernel.beta, kernel.gamma_ratio
    if tau == 0.0:
        return g
    th = math.tanh(beta * tau)
    return beta * (beta * th + g) / (beta + g * th)


def ac_position(kernel: GKernel, t: float, x0: float) -> float:
    """Signal-free optimal inventory at time t: x0 * G(T - t) / G(T)."""
    t = float(t)
    tau = kernel.horizon - t
    if t < 0.0 or tau < 0.0:
        raise ValueError(f"t must lie in [0, horizon], got {t!r}")
    beta, g = kernel.beta, kernel.gamma_ratio
    if beta * kernel.horizon <= _EXP_SWITCH:
        return x0 * _g_raw(beta, g, beta * tau) / _g_raw(beta, g, beta * kernel.horizon)
    return x0 * math.exp(_log_g(beta, g, beta * tau) - _log_g(beta, g, beta * kernel.horizon))


def optimal_rate(kernel: GKernel, t: float, x: float, v1_signal: float = 0.0) -> float:
    """Optimal selling rate at time t with inventory x and signal term v1.

    v1_signal is nonpositive for a price pushed down (a cap above), so the
    rate exceeds the signal-free one; positive v1 (an upward drift) slows
    selling and may flip the rate negative (buying).
    """
    return urgency(kernel, t) * x - v1_signal


def trajectory_from_signal(kernel, x0, v1_curve, grid) -> TradePlan:
    """Optimal trajectory on a grid given a sampled signal curve v1.

    v1_curve is either an array aligned with grid, or a pair (times, values)
    sampled on a refinement of grid (times must contain every grid point).
    The position integral is evaluated by composite trapezoid on the sampled
    curve, propagated stepwise through ratios of G so that no intermediate
    overflows; rates are urgency * X - v1 at the grid points.

    Raises ValueError for grids that are not strictly increasing, do not
    start at 0, or run past the horizon.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d array with at least two points")
    if not np.all(np.diff(grid) > 0.0):
        raise ValueError("grid must be strictly increasing")
    if grid[0] != 0.0:
        raise ValueError("grid must start at t = 0")
    if grid[-1] > kernel.horizon * (1.0 + 1e-12):
        raise ValueError("grid runs past the horizon")

    if isinstance(v1_curve, tuple):
        times, values = v1_curve
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("v1 curve times and values must be 1-d arrays of equal length")
        if not np.all(np.diff(times) > 0.0):
            raise ValueError("v1 curve times must be strictly increasing")
        # every grid point must appear in the refinement
        idx = np.searchsorted(times, grid)
        if np.any(idx >= times.size) or np.any(np.abs(times[np.minimum(idx, times.size - 1)] - grid) > 1e-9 * max(kernel.horizon, 1.0)):
            raise ValueError("v1 curve must be sampled on a refinement containing the grid")
    else:
        values = np.asarray(v1_curve, dtype=float)
        if values.shape != grid.shape:
            raise ValueError("v1 curve must align with the grid (or pass a (times, values) refinement)")
        times = grid
        idx = np.arange(grid.size)

    beta, g, horizon = kernel.beta, kernel.gamma_ratio, kernel.horizon
    lg = _log_g_array(beta, g, beta * (horizon - times))
    # step ratio rho_j = G(T - s_{j+1}) / G(T - s_j) <= 1
    rho = np.exp(np.diff(lg))
    h = np.diff(times)

    x_fine = np.empty(times.size)
    x_fine[0] = x0 * math.exp(lg[0] - _log_g(beta, g, beta * horizon))
    for j in range(times.size - 1):
        x_fine[j + 1] = rho[j] * x_fine[j] + 0.5 * h[j] * (rho[j] * values[j] + values[j + 1])

    positions = x_fine[idx]
    v1_grid = values[idx]
    rates = np.array([urgency(kernel, t) for t in grid]) * positions - v1_grid
    return TradePlan(grid=grid, positions=positions, rates=rates)


def value_formula(kernel: GKernel, costs: CostParams, p0: float, v0_0: float, v1_0: float) -> float:
    """Expected goal value of the optimal schedule started at price p0.

    p0 * x0 + lam * (v0_0 + 2 * v1_0 * x0 + v2_0 * x0^2) with
    v2_0 = -urgency(0).  v1_0 is the signal term at time 0 and v0_0 the
    expected integral of the squared signal along the optimal path.
    """
    x = costs.x0
    v2_0 = -urgency(kernel, 0.0)
    return p0 * x + costs.lam * (v0_0 + 2.0 * v1_0 * x + v2_0 * x * x)
