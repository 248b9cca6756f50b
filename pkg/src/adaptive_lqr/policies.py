"""Regulators: the optimal stationary feedback and the episodic certainty
equivalence family (plain CE, randomized CE, Thompson sampling, and CE with
side information).

Adaptive policies never receive the true parameter; they see only the cost
matrices, their own initial estimate, and the observed history.
"""
from __future__ import annotations

import math
import sys

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NotStabilizable, SingularGram
from .estimation import (DEFAULT_RIDGE, EpisodeSchedule, RegressorAccumulator,
                         constrained_least_squares, least_squares)
from .linalg import solve_riccati, spectral_radius
from .sideinfo import SideInformation
from .system import CostSpec, DynamicsParameter

MAX_REDRAWS = 100


class Policy:
    """Step interface used by the simulator for arbitrary policies."""

    def reset(self, p: int, r: int) -> None:
        pass

    def act(self, t: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observe(self, x, u, x_next) -> None:
        pass

    def diagnostics(self) -> dict:
        return {}


class LinearPolicy(Policy):
    """Policies of the form ``u(t) = L_t x(t)`` whose gain changes only at
    known times, which lets the simulator roll out whole blocks at once."""

    accumulator: RegressorAccumulator | None = None

    def gain(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def hold_until(self, t: int) -> int:
        """First time after ``t`` at which the gain may change."""
        raise NotImplementedError

    def act(self, t, x):
        return self.gain(t) @ x

    def observe(self, x, u, x_next):
        if self.accumulator is not None:
            self.accumulator.add(x, u, x_next)


class FixedGainPolicy(LinearPolicy):
    def __init__(self, gain):
        self._gain = np.array(gain, dtype=float)

    def gain(self, t):
        return self._gain

    def hold_until(self, t):
        return sys.maxsize


def optimal_policy(theta0: DynamicsParameter, cost: CostSpec) -> FixedGainPolicy:
    """The stationary regulator ``u(t) = L(theta0) x(t)``."""
    return FixedGainPolicy(solve_riccati(theta0, cost).l)


def perturbation_scale(n: int) -> float:
    """``n^{-1/4} log^{1/4} n`` with ``n`` floored at 2 so the first update is perturbed."""
    n = max(n, 2)
    return n ** -0.25 * math.log(n) ** 0.25


class EpisodicPolicy(LinearPolicy):
    """Shared machinery: feedback recomputed only at the update times of
    ``schedule``; a candidate estimate whose Riccati equation has no
    stabilizing solution is redrawn, and after ``MAX_REDRAWS`` failures the
    previous gain is kept and the event is counted.

    Update times reached before ``min_samples`` regressor samples exist (by
    default ``p + r``, the regression dimension) keep the current feedback and
    are counted as skipped.
    """

    def __init__(self, schedule: EpisodeSchedule, initial_estimate: DynamicsParameter,
                 cost: CostSpec, seed: int | None = None, ridge: float = DEFAULT_RIDGE,
                 min_samples: int | None = None):
        self.min_samples = initial_estimate.q if min_samples is None else int(min_samples)
        self.schedule = schedule
        self.initial_estimate = initial_estimate
        self.cost = cost
        self.seed = seed
        self.ridge = ridge
        self.reset(initial_estimate.p, initial_estimate.r)

    def reset(self, p, r):
        self.rng = np.random.default_rng(self.seed)
        self.accumulator = RegressorAccumulator(p, r)
        self.estimate = self.initial_estimate.matrix.copy()
        self._gain = solve_riccati(self.initial_estimate, self.cost).l
        self._next_update = self.schedule.boundary(0)
        self.update_times: list[int] = []
        self.estimates: list[np.ndarray] = []
        self.perturbations: list[np.ndarray] = []
        self.gains: list[np.ndarray] = []
        self.redraws = 0
        self.fallbacks = 0
        self.skipped = 0

    def gain(self, t):
        while t >= self._next_update:
            n = self._next_update
            self._update(n)
            self._next_update = self.schedule.next_boundary(n)
        return self._gain

    def hold_until(self, t):
        return self._next_update if t < self._next_update else self.schedule.next_boundary(t)

    def _candidate(self, n: int, attempt: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(estimate, perturbation)`` for update time ``n``."""
        raise NotImplementedError

    def _deterministic(self) -> bool:
        return False

    def _update(self, n: int) -> None:
        p = self.accumulator.p
        if self.accumulator.count < self.min_samples:
            self.skipped += 1
            return
        for attempt in range(MAX_REDRAWS):
            try:
                theta, lam = self._candidate(n, attempt)
            except SingularGram:
                break
            try:
                sol = solve_riccati(DynamicsParameter.from_matrix(theta, p), self.cost)
            except (NotStabilizable, NoConvergence, np.linalg.LinAlgError):
                self.redraws += 1
                if self._deterministic():
                    break
                continue
            self.estimate = theta
            self._gain = sol.l
            self._record(n, theta, lam)
            return
        self.fallbacks += 1
        self._record(n, self.estimate, None)

    def _record(self, n, theta, lam):
        self.update_times.append(n)
        self.estimates.append(np.array(theta))
        self.perturbations.append(lam)
        self.gains.append(self._gain.copy())

    def estimate_at(self, t: int) -> np.ndarray:
        """The estimate in force at time ``t`` (the initial one before the first update)."""
        i = np.searchsorted(self.update_times, t, side="right") - 1
        return self.initial_estimate.matrix if i < 0 else self.estimates[i]

    def diagnostics(self):
        return {"updates": len(self.update_times), "redraws": self.redraws,
                "fallbacks": self.fallbacks, "skipped": self.skipped}


class RcePolicy(EpisodicPolicy):
    """Least squares plus a Gaussian perturbation of size ``n^{-1/4} log^{1/4} n``."""

    def __init__(self, schedule, sigma0: float, initial_estimate, cost, seed=None,
                 ridge: float = DEFAULT_RIDGE, min_samples: int | None = None):
        if sigma0 < 0:
            raise ValueError("sigma0 must be nonnegative")
        self.sigma0 = float(sigma0)
        self.draws: list[np.ndarray] = []
        super().__init__(schedule, initial_estimate, cost, seed, ridge, min_samples)

    def reset(self, p, r):
        super().reset(p, r)
        self.draws = []

    def _deterministic(self):
        return self.sigma0 == 0.0

    def _candidate(self, n, attempt):
        p, r = self.accumulator.p, self.accumulator.r
        ls = least_squares(self.accumulator, self.ridge).theta.matrix
        phi = self.rng.normal(0.0, 1.0, size=(p, p + r)) * self.sigma0
        lam = perturbation_scale(n) * phi
        if attempt == 0:
            self.draws.append(phi)
        else:
            self.draws[-1] = phi
        return ls + lam, lam


class TsPolicy(EpisodicPolicy):
    """Each row of the estimate drawn from ``N(mu_m row, Sigma_m^{-1})`` with
    ``Sigma_m = Sigma_0 + gram``."""

    def __init__(self, schedule, sigma0_matrix, initial_estimate, cost, seed=None,
                 ridge: float = DEFAULT_RIDGE, min_samples: int | None = None):
        self.sigma0_matrix = np.array(sigma0_matrix, dtype=float)
        super().__init__(schedule, initial_estimate, cost, seed, ridge, min_samples)

    def posterior(self) -> tuple[np.ndarray, np.ndarray]:
        """Current ``(mu, Sigma)`` from the accumulated data."""
        mu = least_squares(self.accumulator, self.ridge).theta.matrix
        return mu, self.sigma0_matrix + self.accumulator.gram

    def sample_rows(self, mu, sigma, size=None):
        """Rows of ``mu`` plus Gaussian noise with covariance ``sigma^{-1}``."""
        chol = np.linalg.cholesky(sigma)
        count = 1 if size is None else size
        xi = self.rng.standard_normal((count * mu.shape[0], mu.shape[1]))
        # chol' y = xi  gives  cov(y) = (chol chol')^{-1}
        noise = scipy.linalg.solve_triangular(chol, xi.T, lower=True, trans="T").T
        out = mu + noise.reshape((count,) + mu.shape)
        return out[0] if size is None else out

    def _candidate(self, n, attempt):
        mu, sigma = self.posterior()
        theta = self.sample_rows(mu, sigma)
        return theta, theta - mu


def default_perturbation_rule(c_lambda: float):
    """``Lambda_n = c * n^{-1/2} * phi`` with standard Gaussian ``phi``."""

    def rule(n, rng, shape):
        if c_lambda == 0.0:
            return np.zeros(shape)
        return c_lambda * max(n, 1) ** -0.5 * rng.standard_normal(shape)

    rule.c_lambda = c_lambda
    return rule


class GcePolicy(EpisodicPolicy):
    """Least squares over the side-information set plus an ``O(n^{-1/2})`` perturbation."""

    def __init__(self, schedule, side: SideInformation, initial_estimate, cost,
                 perturbation_rule=None, seed=None, ridge: float = DEFAULT_RIDGE,
                 min_samples: int | None = None):
        self.side = side
        self.perturbation_rule = perturbation_rule or default_perturbation_rule(0.0)
        super().__init__(schedule, initial_estimate, cost, seed, ridge, min_samples)

    def _deterministic(self):
        return getattr(self.perturbation_rule, "c_lambda", None) == 0.0

    def _candidate(self, n, attempt):
        base = constrained_least_squares(self.accumulator, self.side, self.ridge).theta.matrix
        lam = self.perturbation_rule(n, self.rng, base.shape)
        return base + lam, lam


def rce_policy(schedule, sigma0, initial_estimate, cost, seed=None, **kw) -> RcePolicy:
    return RcePolicy(schedule, sigma0, initial_estimate, cost, seed, **kw)


def ts_policy(schedule, sigma0_matrix, initial_estimate, cost, seed=None, **kw) -> TsPolicy:
    return TsPolicy(schedule, sigma0_matrix, initial_estimate, cost, seed, **kw)


def gce_policy(schedule, side, perturbation_rule, initial_estimate, cost, seed=None, **kw) -> GcePolicy:
    return GcePolicy(schedule, side, initial_estimate, cost, perturbation_rule, seed, **kw)


def ce_policy(schedule, initial_estimate, cost, **kw) -> GcePolicy:
    """Plain episodic certainty equivalence (full support, no perturbation)."""
    p, q = initial_estimate.p, initial_estimate.q
    return GcePolicy(schedule, SideInformation.full(p, q), initial_estimate, cost, **kw)


def initial_estimate(theta0: DynamicsParameter, cost: CostSpec, seed: int | None = None,
                     relative_scale: float = 0.05, attempts: int = 20) -> DynamicsParameter:
    """A stabilizing starting estimate ``theta0 + eps * G`` (configuration-time helper).

    ``eps`` starts at ``relative_scale * ||theta0||`` and halves until the
    feedback of the estimate stabilizes the true system.
    """
    rng = np.random.default_rng(seed)
    base = theta0.matrix
    eps = relative_scale * np.linalg.norm(base, 2)
    for _ in range(attempts):
        g = rng.standard_normal(base.shape)
        cand = DynamicsParameter.from_matrix(base + eps * g, theta0.p)
        try:
            sol = solve_riccati(cand, cost)
        except (NotStabilizable, NoConvergence):
            eps /= 2
            continue
        if spectral_radius(theta0.a + theta0.b @ sol.l).is_stable:
            return cand
        eps /= 2
    raise NotStabilizable("could not find a stabilizing initial estimate")
