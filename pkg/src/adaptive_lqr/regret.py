"""Pathwise regret, its exact three-term decomposition, and normalized curves."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import MismatchedTrajectories, MissingGains
from .linalg import solve_riccati
from .system import CostSpec, DynamicsParameter, Trajectory


@dataclass
class RegretLedger:
    """Running regret of one policy against the optimal regulator.

    ``regret[t]`` is R(t+1), the sum of the first ``t + 1`` cost gaps;
    ``chi`` and ``rho`` are the running statistics with the same indexing.
    """

    regret: np.ndarray
    chi: np.ndarray
    rho: np.ndarray
    gains: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.regret.shape[0]

    def at(self, n: int) -> tuple[float, float, float]:
        """``(R(n), chi_n, rho_n)`` for ``1 <= n <= horizon``."""
        return float(self.regret[n - 1]), float(self.chi[n - 1]), float(self.rho[n - 1])


def _quadratic_rows(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    return np.einsum("ti,ij,tj->t", x, k, x)


def compute_regret(traj: Trajectory, opt_traj: Trajectory, theta0: DynamicsParameter,
                   cost: CostSpec) -> RegretLedger:
    """Regret of ``traj`` relative to ``opt_traj``, which must share the noise path."""
    n = traj.horizon
    if opt_traj.horizon != n:
        raise MismatchedTrajectories(f"horizons differ: {n} vs {opt_traj.horizon}")
    if not np.array_equal(traj.noises, opt_traj.noises) or \
            not np.array_equal(traj.states[0], opt_traj.states[0]):
        raise MismatchedTrajectories("trajectories are not driven by the same noise and x0")
    sol = solve_riccati(theta0, cost)
    regret = np.cumsum(traj.costs - opt_traj.costs)
    dev = traj.inputs - traj.states[:n] @ sol.l.T
    chi = np.cumsum(np.einsum("ti,ti->t", dev, dev))
    rho = _quadratic_rows(opt_traj.states[1:], sol.k) - _quadratic_rows(traj.states[1:], sol.k)
    return RegretLedger(regret=regret, chi=chi, rho=rho, gains=traj.gains)


@dataclass
class DecompositionTerms:
    """``R(n) = z + s + t``.

    ``z_zeta`` recomputes ``z`` through the ``(K - K_j) xi_j`` form and
    ``zs_xi`` is ``sum w(k)' K xi_k``, which equals ``s + z`` up to the
    terminal-state terms ``x(n)'K x(n) - xbar(n)'K xbar(n)``.
    """

    n: int
    z: float
    s: float
    t: float
    z_zeta: float
    zs_xi: float
    k: np.ndarray
    d: np.ndarray
    m: np.ndarray

    @property
    def total(self) -> float:
        return self.z + self.s + self.t

    def k_ladder(self, j: int) -> np.ndarray:
        """``K_j = D'^{n-j} K D^{n-j}``; ``K_n = K``."""
        if not 0 <= j <= self.n:
            raise ValueError("j must lie in [0, n]")
        dp = np.linalg.matrix_power(self.d, self.n - j)
        return dp.T @ self.k @ dp


def decompose(traj: Trajectory, theta0: DynamicsParameter, cost: CostSpec, *,
              impl: str | None = None, negate_t: bool = False) -> DecompositionTerms:
    """Exact decomposition of the regret accumulated by ``traj``.

    Uses the applied inputs, which for a linear policy equal ``L_k x(k)``.
    ``negate_t`` flips the sign of the quadratic term; it exists only so the
    verification suite can show that it detects a broken identity.
    """
    if traj.gains is None and traj.inputs.shape[0] == 0 and traj.horizon > 0:
        raise MissingGains("trajectory carries neither gains nor inputs")
    n = traj.horizon
    if traj.gains is not None:
        inputs = np.einsum("tij,tj->ti", traj.gains, traj.states[:n])
    else:
        if traj.inputs.shape != (n, theta0.r):
            raise MissingGains("trajectory lacks the per-step input record")
        inputs = traj.inputs
    sol = solve_riccati(theta0, cost)
    m = theta0.b.T @ sol.k @ theta0.b + cost.r
    z, s, t, z_zeta, zs_xi = kernels.decompose_terms(
        theta0.a, theta0.b, sol.l, sol.k, m, traj.states, inputs, traj.noises[:n], impl=impl)
    if negate_t:
        t = -t
    return DecompositionTerms(n=n, z=z, s=s, t=t, z_zeta=z_zeta, zs_xi=zs_xi, k=sol.k,
                              d=theta0.a + theta0.b @ sol.l, m=m)


def log_grid(horizon: int, points_per_decade: int = 20, start: int = 2) -> np.ndarray:
    """Distinct integers in ``[start, horizon]``, logarithmically spaced."""
    if horizon < start:
        return np.array([], dtype=int)
    count = max(2, int(math.ceil(points_per_decade * math.log10(horizon / start))) + 1)
    return np.unique(np.geomspace(start, horizon, count).round().astype(int))


@dataclass
class CurveTable:
    """Normalized curves evaluated on the grid ``n``; absent columns are None."""

    n: np.ndarray
    regret: np.ndarray
    error: np.ndarray | None = None
    regret_log2: np.ndarray | None = None
    error_sq: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = [("n", self.n), ("normalized_regret", self.regret), ("normalized_error", self.error),
                ("regret_over_log2", self.regret_log2), ("scaled_sq_error", self.error_sq)]
        cols = [(name, v) for name, v in cols if v is not None] + list(self.extra.items())
        writer.writerow([name for name, _ in cols])
        for i in range(len(self.n)):
            writer.writerow([int(self.n[i])] + [repr(float(v[i])) for _, v in cols[1:]])
        return buf.getvalue()


def normalized_curves(regret, errors=None, grid=None, *, logarithmic: bool = False) -> CurveTable:
    """Normalized regret ``R(n)/(n^{1/2} log n)`` and error ``e_n n^{1/4}/log^{1/2} n``.

    ``regret`` is the running series R(1..N) and ``errors`` (optional) gives
    ``e_n`` for every n in ``1..N``. With ``logarithmic`` set, also returns
    ``R(n)/log^2 n`` and ``n e_n^2/log n``, the scalings that apply under
    identifiable side information.
    """
    regret = np.asarray(regret, dtype=float)
    grid = log_grid(regret.shape[0]) if grid is None else np.asarray(grid, dtype=int)
    if np.any(grid < 2):
        raise ValueError("normalized curves need n >= 2")
    nf = grid.astype(float)
    logn = np.log(nf)
    r = regret[grid - 1]
    table = CurveTable(n=grid, regret=r / (np.sqrt(nf) * logn))
    if errors is not None:
        e = np.asarray(errors, dtype=float)[grid - 1]
        table.error = e * nf ** 0.25 / np.sqrt(logn)
        if logarithmic:
            table.error_sq = nf * e ** 2 / logn
    if logarithmic:
        table.regret_log2 = r / logn ** 2
    return table


def optimal_cost_fluctuation(opt_traj: Trajectory, theta0: DynamicsParameter, cost: CostSpec,
                             noise_cov, grid=None) -> tuple[np.ndarray, np.ndarray]:
    """``(grid, f)`` with ``f_n = (sum_{t<n} c_t - n tr(K C)) / (n^{1/2} log n)``."""
    k = solve_riccati(theta0, cost).k
    j_star = float(np.trace(k @ np.asarray(noise_cov, dtype=float)))
    total = np.cumsum(opt_traj.costs)
    grid = log_grid(total.shape[0]) if grid is None else np.asarray(grid, dtype=int)
    nf = grid.astype(float)
    return grid, (total[grid - 1] - nf * j_star) / (np.sqrt(nf) * np.log(nf))


def trend_ratio(n, values, lo: float, hi: float) -> float:
    """Last-decade max of ``|values|`` over the middle-decade max.

    For the window ``[lo, hi]`` the last decade is ``[hi/10, hi]`` and the
    middle decade is the one centred geometrically in the window.
    """
    n = np.asarray(n, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    span = math.log10(hi / lo)
    mid_lo = lo * 10 ** ((span - 1) / 2)
    last = v[(n >= hi / 10) & (n <= hi)]
    middle = v[(n >= mid_lo) & (n <= mid_lo * 10)]
    if last.size == 0 or middle.size == 0:
        raise ValueError("window too short for the trend statistic")
    top = middle.max()
    if top == 0.0:
        return 0.0 if last.max() == 0.0 else math.inf
    return float(last.max() / top)


def no_upward_trend(n, values, lo: float = 1e3, hi: float = 1e5, factor: float = 3.0) -> bool:
    """True when the last-decade max is at most ``factor`` times the middle-decade max."""
    return trend_ratio(n, values, lo, hi) <= factor
