"""Monte Carlo simulation of capped prices and strategy evaluation.

Paths are driven by the Philox 4x64-10 counter-based generator (numpy's
np.random.Philox, Salmon et al. round constants), one stream per path keyed
by the 128-bit value (master_seed << 64) | path_index.  Streams make every
estimate bit-for-bit reproducible for a given (seed, n_paths, n_steps,
model) regardless of batch size, and common random numbers across policies
come free: the same master seed replays the same paths.

The realized goal of a strategy on a path is accumulated with left-endpoint
Riemann sums and a forward-Euler inventory update,

    total = sum_i (P_i - lam u_i) u_i dt + P_N X_N
            - gamma sum_i X_i^2 dt - big_gamma X_N^2,

which is exactly the discrete objective the verification oracle maximizes.
Reductions over paths always run in path-index order.

Policies are callables (t, x, state) -> selling rate, where x and the state
components may be scalars or aligned arrays (one entry per path).  The
optimal capped-model policy evaluates its signal term from per-time-step
tables in a scaled moneyness variable, built with the same Gauss-Legendre
panel scheme as the quadrature in liqzone.signals and interpolated linearly
on a uniform grid; table resolution keeps the rate error below ~1e-4
relative.

Batch arrays are laid out time-major, shape (n_steps + 1, n_paths): the
per-step loop then touches contiguous rows, which is what makes 10^5 paths
at 4096 steps affordable on one core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import ndtr

from .schedule import CostParams, GKernel, TradePlan, urgency
from .signals import (
    CappedBachelier,
    CappedBlackScholes,
    DeterministicDrift,
    Martingale,
    _norm_pdf,
    _panel_nodes,
    _discount_ratio,
    _PANELS_FINE,
    v1_curve_deterministic,
)

__all__ = [
    "MarketState",
    "PathSample",
    "GoalBreakdown",
    "MCEstimate",
    "PairedComparison",
    "OptimalityProbe",
    "path_stream",
    "simulate_path",
    "run_strategy",
    "estimate_value",
    "paired_value_difference",
    "estimate_v0",
    "probe_optimality",
    "ac_policy",
    "optimal_policy",
]

_BATCH_DEFAULT = 2048


class MarketState(NamedTuple):
    """Per-path market info handed to policies: capped price p, uncapped level m."""

    p: object
    m: object


@dataclass(frozen=True)
class PathSample:
    """One simulated path: uncapped level m, its running max, and capped price p."""

    grid: np.ndarray
    m: np.ndarray
    m_star: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        m = np.asarray(self.m, dtype=float)
        m_star = np.asarray(self.m_star, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or not np.all(np.diff(grid) > 0.0):
            raise ValueError("grid must be 1-d, length >= 2, strictly increasing")
        for name, arr in (("m", m), ("m_star", m_star), ("p", p)):
            if arr.shape != grid.shape:
                raise ValueError(f"{name} must match the grid shape")
        if not np.array_equal(np.maximum.accumulate(m), m_star):
            raise ValueError("m_star must be the running maximum of m")
        if np.any(p > m):
            raise ValueError("capped price cannot exceed the uncapped level")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "m_star", m_star)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class GoalBreakdown:
    """Realized goal of one strategy run; total is the exact signed sum of the parts."""

    cash: float
    terminal_asset: float
    running_penalty: float
    terminal_penalty: float
    total: float

    @classmethod
    def build(cls, cash, terminal_asset, running_penalty, terminal_penalty):
        return cls(
            cash=cash,
            terminal_asset=terminal_asset,
            running_penalty=running_penalty,
            terminal_penalty=terminal_penalty,
            total=cash + terminal_asset - running_penalty - terminal_penalty,
        )


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int


@dataclass(frozen=True)
class PairedComparison:
    """Two policies on common random numbers, and their per-path difference."""

    value_a: MCEstimate
    value_b: MCEstimate
    difference: MCEstimate


def _check_seed(master_seed: int) -> int:
    master_seed = int(master_seed)
    if not 0 <= master_seed < 2**64:
        raise ValueError("master_seed must fit in 64 bits")
    return master_seed


def path_stream(master_seed: int, path_index: int) -> np.random.Generator:
    """The Philox stream of one path: 128-bit key (master_seed << 64) | path_index."""
    master_seed = _check_seed(master_seed)
    path_index = int(path_index)
    if not 0 <= path_index < 2**64:
        raise ValueError("path_index must fit in 64 bits")
    # the key is passed as its little-endian 64-bit words, identical to the
    # int form but cheaper to build (unit-tested equivalence)
    key = np.array([path_index, master_seed], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _drift_price(model: DeterministicDrift, grid: np.ndarray) -> np.ndarray:
    a = np.interp(grid, model.times, model.values)
    out = np.empty_like(grid)
    out[0] = model.p0
    np.cumsum(0.5 * np.diff(grid) * (a[:-1] + a[1:]), out=out[1:])
    out[1:] += model.p0
    return out


def simulate_path(model, horizon: float, n_steps: int, rng: np.random.Generator) -> PathSample:
    """Simulate one path of the model on a uniform grid over [0, horizon].

    Gaussian increments are exact for the arithmetic models and exact in log
    space for the geometric one; the running maximum is taken over grid
    points only (no continuous-time correction).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if horizon <= 0.0:
        raise ValueError("horizon must be strictly positive")
    grid = np.linspace(0.0, horizon, n_steps + 1)
    if isinstance(model, DeterministicDrift):
        m = _drift_price(model, grid)
    elif isinstance(model, Martingale) and model.sigma == 0.0:
        m = np.full(n_steps + 1, model.p0)
    else:
        z = rng.standard_normal(n_steps)
        start = model.m0 if isinstance(model, (CappedBachelier, CappedBlackScholes)) else model.p0
        w = np.concatenate(([0.0], np.cumsum(z))) * math.sqrt(horizon / n_steps)
        if isinstance(model, CappedBlackScholes):
            m = start * np.exp(model.sigma * w - 0.5 * model.sigma**2 * grid)
        else:
            m = start + model.sigma * w
    m_star = np.maximum.accumulate(m)
    if isinstance(model, (CappedBachelier, CappedBlackScholes)):
        p = m - np.maximum(m_star - model.p_bar, 0.0)
    else:
        p = m
    return PathSample(grid=grid, m=m, m_star=m_star, p=p)


def _simulate_batch(model, horizon, n_steps, master_seed, first_index, count):
    """(grid, m, p), with m and p time-major arrays of shape (n_steps + 1, count)."""
    master_seed = _check_seed(master_seed)
    grid = np.linspace(0.0, horizon, n_steps + 1)
    if isinstance(model, DeterministicDrift):
        m = np.broadcast_to(_drift_price(model, grid)[:, None], (n_steps + 1, count)).copy()
        return grid, m, m
    if isinstance(model, Martingale) and model.sigma == 0.0:
        m = np.full((n_steps + 1, count), model.p0)
        return grid, m, m

    z = np.empty((count, n_steps))
    for j in range(count):
        key = np.array([first_index + j, master_seed], dtype=np.uint64)
        np.random.Generator(np.random.Philox(key=key)).standard_normal(out=z[j])
    sigma = model.sigma
    start = model.m0 if isinstance(model, (CappedBachelier, CappedBlackScholes)) else model.p0
    m = np.empty((n_steps + 1, count))
    m[0] = 0.0
    m[1:] = z.T
    del z
    # running sums and maxima row by row: each row is one contiguous,
    # cache-resident vector, much faster than an axis-0 ufunc accumulate
    for i in range(1, n_steps + 1):
        m[i] += m[i - 1]
    m *= sigma * math.sqrt(horizon / n_steps)
    if isinstance(model, CappedBlackScholes):
        m -= 0.5 * sigma * sigma * grid[:, None]
        np.exp(m, out=m)
        m *= start
    else:
        m += start
    if isinstance(model, (CappedBachelier, CappedBlackScholes)):
        p = np.empty_like(m)
        run = np.array(m[0])
        tmp = np.empty(count)
        for i in range(n_steps + 1):
            np.maximum(run, m[i], out=run)
            np.subtract(run, model.p_bar, out=tmp)
            np.maximum(tmp, 0.0, out=tmp)
            np.subtract(m[i], tmp, out=p[i])
    else:
        p = m
    return grid, m, p


# ---------------------------------------------------------------------------
# policies


def ac_policy(kernel: GKernel) -> Callable:
    """Signal-free policy u = urgency(t) * x."""

    def policy(t, x, state):
        return urgency(kernel, t) * np.asarray(x, dtype=float)

    return policy


class _CappedSignalTable:
    """Extra selling rate of a capped model, tabulated per time step.

    For each queried time t the extra rate is a function of a single scaled
    moneyness variable z; a table over a fixed uniform z grid is built with
    the fine Gauss-Legendre panel scheme and cached, then linearly
    interpolated (beyond the last z node the rate is 0, where it is below
    1e-30 of scale anyway).
    """

    def __init__(self, model, kernel: GKernel, lam: float):
        self.model = model
        self.kernel = kernel
        self.lam = lam
        self.y, self.w = _panel_nodes(_PANELS_FINE)
        if isinstance(model, CappedBachelier):
            self.z_grid = np.linspace(0.0, 13.0, 1301)
            with np.errstate(over="ignore"):
                self._phi_over_y = _norm_pdf(self.z_grid[:, None] / self.y[None, :])
        else:
            self.z_grid = np.linspace(0.0, 16.0, 1601)
        self._inv_step = (self.z_grid.size - 1) / self.z_grid[-1]
        self._tables: dict[float, np.ndarray] = {}

    def _build(self, t: float) -> np.ndarray:
        tau = self.kernel.horizon - t
        sig = self.model.sigma
        root = sig * math.sqrt(tau)
        ratio_w = _discount_ratio(self.kernel, t, tau, self.y) * self.w
        if isinstance(self.model, CappedBachelier):
            return root / self.lam * (self._phi_over_y @ ratio_w)
        with np.errstate(over="ignore"):
            f = 0.5 * root * self.y[None, :] - self.z_grid[:, None] / self.y[None, :]
        return (2.0 * root * (_norm_pdf(f) @ ratio_w)
                + sig * sig * tau * (ndtr(f) @ (ratio_w * self.y))) / (2.0 * self.lam)

    def extra_values(self, t: float, p, m):
        """Extra rate -v1 at time t for price/level arrays p, m."""
        tau = self.kernel.horizon - t
        if tau <= 0.0:
            return np.zeros_like(np.asarray(p, dtype=float))
        tab = self._tables.get(t)
        if tab is None:
            tab = self._tables[t] = self._build(t)
        root = self.model.sigma * math.sqrt(tau)
        money = self.model.p_bar - np.asarray(p, dtype=float)
        if isinstance(self.model, CappedBachelier):
            z = money / root
        else:
            z = np.log1p(money / np.asarray(m, dtype=float)) / root
        # manual linear interpolation: the z grid is uniform, so the cell
        # index is one multiply instead of a binary search per element
        pos = np.asarray(z * self._inv_step)
        idx = np.minimum(pos.astype(np.int64), self.z_grid.size - 2)
        frac = pos - idx
        vals = np.where(pos > self.z_grid.size - 1, 0.0,
                        tab[idx] * (1.0 - frac) + tab[idx + 1] * frac)
        if isinstance(self.model, CappedBlackScholes):
            vals = vals * np.asarray(m, dtype=float)
        return vals


class _DriftSignalTable:
    """Extra rate -v1(t) of a deterministic drift curve (state independent).

    The whole curve is solved once on a dense grid; lookups interpolate.
    """

    _N_NODES = 8193

    def __init__(self, model: DeterministicDrift, kernel: GKernel, lam: float):
        self.kernel = kernel
        self._grid = np.linspace(0.0, kernel.horizon, self._N_NODES)
        self._curve = -v1_curve_deterministic(model, kernel, lam, self._grid)

    def extra_values(self, t: float, p, m):
        v = float(np.interp(t, self._grid, self._curve))
        return np.broadcast_to(np.float64(v), np.asarray(p, dtype=float).shape)


class _ZeroSignalTable:
    def extra_values(self, t: float, p, m):
        return np.zeros_like(np.asarray(p, dtype=float))


def _signal_table(model, kernel: GKernel, lam: float):
    if isinstance(model, (CappedBachelier, CappedBlackScholes)):
        return _CappedSignalTable(model, kernel, lam)
    if isinstance(model, DeterministicDrift):
        return _DriftSignalTable(model, kernel, lam)
    return _ZeroSignalTable()


def optimal_policy(model, kernel: GKernel, costs: CostParams) -> Callable:
    """Feedback policy u = urgency(t) * x + extra(t, state) for the given model."""
    table = _signal_table(model, kernel, costs.lam)

    def policy(t, x, state):
        return urgency(kernel, t) * np.asarray(x, dtype=float) + table.extra_values(t, state.p, state.m)

    policy.signal_table = table
    return policy


# ---------------------------------------------------------------------------
# strategy evaluation


def run_strategy(path: PathSample, policy: Callable, costs: CostParams):
    """Run a policy down one path; returns (TradePlan, GoalBreakdown).

    Inventory follows forward Euler, all goal integrals use left-endpoint
    Riemann sums on the path grid.
    """
    grid = path.grid
    n_steps = grid.size - 1
    dt = float(grid[1] - grid[0])
    x = costs.x0
    cash = 0.0
    run_pen = 0.0
    positions = np.empty(n_steps + 1)
    rates = np.empty(n_steps + 1)
    for i in range(n_steps):
        positions[i] = x
        u = float(policy(float(grid[i]), x, MarketState(p=float(path.p[i]), m=float(path.m[i]))))
        rates[i] = u
        cash += (path.p[i] - costs.lam * u) * u * dt
        run_pen += costs.gamma * x * x * dt
        x -= u * dt
    positions[n_steps] = x
    rates[n_steps] = float(policy(float(grid[-1]), x, MarketState(p=float(path.p[-1]), m=float(path.m[-1]))))
    breakdown = GoalBreakdown.build(
        cash=cash,
        terminal_asset=float(path.p[-1]) * x,
        running_penalty=run_pen,
        terminal_penalty=costs.big_gamma * x * x,
    )
    return TradePlan(grid=grid, positions=positions, rates=rates), breakdown


def _run_batch(grid, p, m, policy, costs, collect=False):
    """Per-path goal totals for one time-major batch; optionally keep (X, U)."""
    n_grid, count = p.shape
    n_steps = n_grid - 1
    dt = float(grid[1] - grid[0])
    x = np.full(count, float(costs.x0))
    cash = np.zeros(count)
    run_pen = np.zeros(count)
    xs = np.empty((n_grid, count)) if collect else None
    us = np.empty((n_steps, count)) if collect else None
    for i in range(n_steps):
        p_i = p[i]
        u = np.asarray(policy(float(grid[i]), x, MarketState(p=p_i, m=m[i])), dtype=float)
        if u.shape != x.shape:
            u = np.broadcast_to(u, x.shape)
        if collect:
            xs[i] = x
            us[i] = u
        cash += (p_i - costs.lam * u) * u * dt
        run_pen += costs.gamma * np.square(x) * dt
        x = x - u * dt
    if collect:
        xs[n_steps] = x
    totals = cash + p[-1] * x - run_pen - costs.big_gamma * np.square(x)
    return (totals, xs, us) if collect else totals


def _check_mc_args(n_paths, n_steps):
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")


def _batched_totals(model, policies, costs, n_paths, n_steps, master_seed, batch_size):
    """Per-path totals for each policy on common paths, in path-index order."""
    out = [np.empty(n_paths) for _ in policies]
    done = 0
    while done < n_paths:
        count = min(batch_size, n_paths - done)
        grid, m, p = _simulate_batch(model, costs.horizon, n_steps, master_seed, done, count)
        for sl, policy in zip(out, policies):
            sl[done:done + count] = _run_batch(grid, p, m, policy, costs)
        done += count
    return out


def _estimate(totals: np.ndarray, seed: int) -> MCEstimate:
    n = totals.size
    return MCEstimate(
        mean=float(np.mean(totals)),
        std_error=float(np.std(totals, ddof=1) / math.sqrt(n)),
        n_paths=n,
        seed=int(seed),
    )


def estimate_value(model, policy, costs, n_paths, n_steps, master_seed,
                   batch_size=_BATCH_DEFAULT) -> MCEstimate:
    """Mean realized goal of a policy over n_paths streams of master_seed."""
    _check_mc_args(n_paths, n_steps)
    totals, = _batched_totals(model, [policy], costs, n_paths, n_steps, master_seed, batch_size)
    return _estimate(totals, master_seed)


def paired_value_difference(model, policy_a, policy_b, costs, n_paths, n_steps,
                            master_seed, batch_size=_BATCH_DEFAULT) -> PairedComparison:
    """Both policies on the same paths; difference = per-path (a - b)."""
    _check_mc_args(n_paths, n_steps)
    tot_a, tot_b = _batched_totals(model, [policy_a, policy_b], costs, n_paths, n_steps,
                                   master_seed, batch_size)
    return PairedComparison(
        value_a=_estimate(tot_a, master_seed),
        value_b=_estimate(tot_b, master_seed),
        difference=_estimate(tot_a - tot_b, master_seed),
    )


def estimate_v0(model, kernel, costs, n_paths, n_steps, master_seed,
                batch_size=_BATCH_DEFAULT) -> MCEstimate:
    """Estimate v0(0) = E int_0^T v1(t)^2 dt along simulated paths.

    v1 at each left grid point is the state's signal term (zero for a
    martingale, deterministic for a drift curve); left-endpoint Riemann sum.
    """
    _check_mc_args(n_paths, n_steps)
    table = _signal_table(model, kernel, costs.lam)
    dt = costs.horizon / n_steps
    totals = np.empty(n_paths)
    done = 0
    while done < n_paths:
        count = min(batch_size, n_paths - done)
        grid, m, p = _simulate_batch(model, costs.horizon, n_steps, master_seed, done, count)
        acc = np.zeros(count)
        for i in range(n_steps):
            e = np.asarray(table.extra_values(float(grid[i]), p[i], m[i]), dtype=float)
            acc += np.square(e) * dt
        totals[done:done + count] = acc
        done += count
    return _estimate(totals, master_seed)


# ---------------------------------------------------------------------------
# perturbation probes


@dataclass(frozen=True)
class OptimalityProbe:
    """Goal changes from perturbing the optimal control by eps * alpha(t).

    mean_gain[d, e] estimates V(u + eps_e * alpha_d) - V(u); a probe passes
    when the gain does not exceed 3 standard errors.  value is the Monte
    Carlo estimate of V(u) on the same paths.
    """

    epsilons: np.ndarray
    mean_gain: np.ndarray
    std_error: np.ndarray
    curvature: np.ndarray
    value: MCEstimate

    @property
    def margins(self) -> np.ndarray:
        """mean_gain - 3 * std_error; all entries <= 0 when every probe passes."""
        return self.mean_gain - 3.0 * self.std_error

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.margins <= 0.0))


def _probe_alphas(probe_seed: int, n_directions: int, n_knots: int) -> np.ndarray:
    """Bounded piecewise-constant directions: n_knots values in [-1, 1] each."""
    rng = np.random.Generator(np.random.Philox(key=int(probe_seed)))
    return rng.uniform(-1.0, 1.0, size=(n_directions, n_knots))


def probe_optimality(model, kernel, costs, n_paths, n_steps, master_seed,
                     n_directions=20, n_knots=8, epsilons=(-0.2, -0.05, 0.05, 0.2),
                     probe_seed=7, batch_size=_BATCH_DEFAULT) -> OptimalityProbe:
    """Test first-order optimality of the model's policy by perturbation.

    For each random direction alpha (piecewise constant on n_knots equal time
    intervals) and each eps, the realized goal of the open-loop control
    u + eps * alpha is compared with u on common paths.  The goal is exactly
    quadratic in the control, so the per-path difference

        D = eps * L + eps^2 * Q

    is evaluated from the linear path functional L (price, rate and position
    inner products with deterministic weights) and the deterministic
    curvature Q = -lam int alpha^2 - gamma int da^2 - big_gamma da_T^2 < 0,
    where da(t) = -int_0^t alpha.  This is algebraically identical to
    rerunning the perturbed control, and is unit-tested to be.
    """
    _check_mc_args(n_paths, n_steps)
    policy = optimal_policy(model, kernel, costs)
    dt = costs.horizon / n_steps
    alphas = _probe_alphas(probe_seed, n_directions, n_knots)
    # sample each direction on the step grid (left endpoints)
    knot_of_step = np.minimum((np.arange(n_steps) * n_knots) // n_steps, n_knots - 1)
    alpha_steps = alphas[:, knot_of_step]                        # (D, n_steps)
    da = -dt * np.concatenate((np.zeros((n_directions, 1)), np.cumsum(alpha_steps, axis=1)), axis=1)

    w_price = dt * alpha_steps.T                                  # (n_steps, D)
    w_rate = -2.0 * costs.lam * dt * alpha_steps.T
    w_pos = -2.0 * costs.gamma * dt * da[:, :-1].T
    c_price = da[:, -1]                                           # (D,)
    c_pos = -2.0 * costs.big_gamma * da[:, -1]
    curvature = (
        -costs.lam * dt * np.sum(alpha_steps**2, axis=1)
        - costs.gamma * dt * np.sum(da[:, :-1]**2, axis=1)
        - costs.big_gamma * da[:, -1]**2
    )

    lin = np.empty((n_paths, n_directions))
    totals = np.empty(n_paths)
    done = 0
    while done < n_paths:
        count = min(batch_size, n_paths - done)
        grid, m, p = _simulate_batch(model, costs.horizon, n_steps, master_seed, done, count)
        tot, xs, us = _run_batch(grid, p, m, policy, costs, collect=True)
        totals[done:done + count] = tot
        lin[done:done + count] = (
            p[:-1].T @ w_price + np.outer(p[-1], c_price)
            + us.T @ w_rate
            + xs[:-1].T @ w_pos + np.outer(xs[-1], c_pos)
        )
        done += count

    eps = np.asarray(epsilons, dtype=float)
    lin_mean = lin.mean(axis=0)
    lin_se = lin.std(axis=0, ddof=1) / math.sqrt(n_paths)
    mean_gain = eps[None, :] * lin_mean[:, None] + eps[None, :]**2 * curvature[:, None]
    std_error = np.abs(eps)[None, :] * lin_se[:, None]
    return OptimalityProbe(
        epsilons=eps,
        mean_gain=mean_gain,
        std_error=std_error,
        curvature=curvature,
        value=_estimate(totals, master_seed),
    )
