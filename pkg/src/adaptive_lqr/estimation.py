"""Closed-loop least-squares identification and the episodic update schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularGram, UnsupportedConstraint
from .sideinfo import SideInformation
from .system import DynamicsParameter

DEFAULT_RIDGE = 1e-8
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class EpisodeSchedule:
    """Update times ``floor(gamma**m)``, deduplicated into a strictly increasing sequence."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError("gamma must exceed 1")

    def boundary(self, m: int) -> int:
        return math.floor(self.gamma ** m)

    def boundaries(self, horizon: int) -> list[int]:
        """Distinct update times not exceeding ``horizon``."""
        out = []
        m = 0
        while True:
            b = self.boundary(m)
            if b > horizon:
                return out
            if not out or b != out[-1]:
                out.append(b)
            m += 1

    def episode_index(self, n: int) -> tuple[int, bool]:
        """Largest exponent ``m`` with ``floor(gamma**m) <= n`` (-1 before the
        first update) and whether ``n`` is itself an update time."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        m = -1
        while self.boundary(m + 1) <= n:
            m += 1
        return m, m >= 0 and self.boundary(m) == n

    def next_boundary(self, n: int) -> int:
        """Smallest update time strictly after ``n``."""
        m, _ = self.episode_index(n)
        return self.boundary(m + 1)


@dataclass
class RegressorAccumulator:
    """Sufficient statistics of the regression of x(t+1) on z(t) = [x(t); u(t)]."""

    p: int
    r: int
    gram: np.ndarray = field(default=None)
    cross: np.ndarray = field(default=None)
    count: int = 0

    def __post_init__(self):
        q = self.p + self.r
        if self.gram is None:
            self.gram = np.zeros((q, q))
        if self.cross is None:
            self.cross = np.zeros((self.p, q))

    def add(self, x, u, x_next) -> "RegressorAccumulator":
        z = np.concatenate([np.asarray(x, dtype=float), np.asarray(u, dtype=float)])
        self.gram += np.outer(z, z)
        self.cross += np.outer(np.asarray(x_next, dtype=float), z)
        self.count += 1
        return self

    def copy(self) -> "RegressorAccumulator":
        return RegressorAccumulator(self.p, self.r, self.gram.copy(), self.cross.copy(), self.count)


def accumulate(acc: RegressorAccumulator, x, u, x_next) -> RegressorAccumulator:
    """Functional form of :meth:`RegressorAccumulator.add`; ``acc`` is left untouched."""
    return acc.copy().add(x, u, x_next)


@dataclass(frozen=True)
class Estimate:
    theta: DynamicsParameter
    error_to_truth: float | None = None

    def with_truth(self, theta0: DynamicsParameter) -> "Estimate":
        err = float(np.linalg.norm(self.theta.matrix - theta0.matrix, 2))
        return Estimate(self.theta, err)


def _check_condition(m: np.ndarray) -> None:
    if m.size == 0:
        return
    if np.linalg.cond(m) > CONDITION_LIMIT:
        raise SingularGram("regressor Gram matrix is numerically singular")


def least_squares(acc: RegressorAccumulator, ridge: float = 0.0) -> Estimate:
    """``theta = cross (gram + ridge I)^{-1}``."""
    if acc.count < 1:
        raise SingularGram("no samples accumulated")
    q = acc.p + acc.r
    g = acc.gram + ridge * np.eye(q)
    if ridge == 0.0:
        _check_condition(g)
    theta = np.linalg.solve(g, acc.cross.T).T
    return Estimate(DynamicsParameter.from_matrix(theta, acc.p))


def constrained_least_squares(acc: RegressorAccumulator, side: SideInformation,
                              ridge: float = 0.0) -> Estimate:
    """Least squares restricted to a support pattern or an affine subspace."""
    if acc.count < 1:
        raise SingularGram("no samples accumulated")
    p, q = acc.p, acc.p + acc.r
    if side.kind == "support":
        mask = side.mask
        theta = np.zeros((p, q))
        for i in range(p):
            idx = np.flatnonzero(mask[i])
            if idx.size == 0:
                continue
            g = acc.gram[np.ix_(idx, idx)] + ridge * np.eye(idx.size)
            if ridge == 0.0:
                _check_condition(g)
            theta[i, idx] = np.linalg.solve(g, acc.cross[i, idx])
        return Estimate(DynamicsParameter.from_matrix(theta, p))
    if side.kind == "subspace":
        sub = side.subspace
        if sub.dimension == 0:
            return Estimate(DynamicsParameter.from_matrix(sub.base, p))
        # objective tr(theta G theta') - 2 tr(theta C') over theta = base + sum c_k E_k
        g = acc.gram + ridge * np.eye(q)
        basis = sub.basis
        eg = [e @ g for e in basis]
        h = np.array([[np.sum(egk * el) for el in basis] for egk in eg])
        rhs = np.array([np.sum(e * acc.cross) - np.sum(egk * sub.base) for e, egk in zip(basis, eg)])
        if ridge == 0.0:
            _check_condition(h)
        coef = np.linalg.solve(h, rhs)
        return Estimate(DynamicsParameter.from_matrix(sub.point(coef), p))
    raise UnsupportedConstraint(
        f"no least-squares solver for {side.kind}-budget sets; membership tests only")
