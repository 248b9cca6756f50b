"""Identifiability geometry around a true parameter.

The closed loop ``theta L~(theta1)`` with ``L~ = [I; L]`` is what data from
a regulator using ``L(theta1)`` can reveal. This module builds the set ``P0``
of parameters that share both the optimal gain and the closed loop of
``theta0``, computes the dimension of the optimal-gain level set from its
tangent equation, and provides empirical tests for unfalsifiability,
identifiability and local Lipschitz continuity of the gain map.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.optimize

from .errors import NoConvergence, NotStabilizable, UnsupportedConstraint
from .linalg import RANK_TOL, null_space, op_norm, rank, solve_lyapunov, solve_riccati
from .sideinfo import AffineSubspace, SideInformation
from .system import CostSpec, DynamicsParameter

__all__ = [
    "AffineSubspace", "SideInformation", "extended_feedback", "closed_loop", "construct_p0",
    "verify_p0_membership", "unfalsifiable_test", "find_unfalsifiable_point",
    "null_directions", "tangent_map", "tangent_dimension", "finite_difference_dimension",
    "expected_tangent_dimension", "subspace_side_information", "identifiability_check",
    "lipschitz_diagnostic", "geometry_report",
]

SAME_FEEDBACK_TOL = 1e-6
SAME_CLOSED_LOOP_TOL = 1e-8
UNFALSIFIABLE_TOL = 1e-8


def _as_theta(theta, p: int | None = None) -> DynamicsParameter:
    if isinstance(theta, DynamicsParameter):
        return theta
    return DynamicsParameter.from_matrix(theta, p)


def extended_feedback(theta: DynamicsParameter, cost: CostSpec) -> np.ndarray:
    """``L~(theta) = [I_p; L(theta)]``, a q x p matrix."""
    return solve_riccati(theta, cost).extended


def closed_loop(theta: DynamicsParameter, feedback_owner: DynamicsParameter,
                cost: CostSpec) -> np.ndarray:
    """``theta L~(feedback_owner)``: the closed loop of ``theta`` under the
    optimal gain of ``feedback_owner``."""
    return theta.matrix @ extended_feedback(feedback_owner, cost)


def construct_p0(theta0: DynamicsParameter, cost: CostSpec, tol: float = RANK_TOL) -> AffineSubspace:
    """Parameters sharing the optimal gain and the closed loop of ``theta0``.

    ``B = B0 + Y`` with every column of ``Y`` in the null space of ``D0'K``
    and ``A = D0 - B L0``, so the direction is ``[-Y L0, Y]``.
    """
    sol = solve_riccati(theta0, cost)
    d0 = theta0.a + theta0.b @ sol.l
    ns = null_space(d0.T @ sol.k, tol)
    directions = []
    for i in range(ns.shape[1]):
        for j in range(theta0.r):
            y = np.zeros((theta0.p, theta0.r))
            y[:, j] = ns[:, i]
            directions.append(np.hstack([-y @ sol.l, y]))
    return AffineSubspace.spanned_by(theta0.matrix, directions)


@dataclass(frozen=True)
class MembershipReport:
    same_feedback: bool
    same_closed_loop: bool
    feedback_gap: float
    closed_loop_gap: float
    k_gap: float

    @property
    def member(self) -> bool:
        return self.same_feedback and self.same_closed_loop


def verify_p0_membership(theta, theta0: DynamicsParameter, cost: CostSpec) -> MembershipReport:
    """Level-set and null-space tests, plus the Riccati gap ``||K(theta) - K(theta0)||``."""
    theta = _as_theta(theta, theta0.p)
    s0 = solve_riccati(theta0, cost)
    s1 = solve_riccati(theta, cost)
    fb = op_norm(s1.l - s0.l)
    cl = op_norm((theta.matrix - theta0.matrix) @ s0.extended)
    return MembershipReport(fb <= SAME_FEEDBACK_TOL, cl <= SAME_CLOSED_LOOP_TOL, fb, cl,
                            op_norm(s1.k - s0.k))


def unfalsifiable_test(theta, theta0: DynamicsParameter, cost: CostSpec,
                       tol: float = UNFALSIFIABLE_TOL) -> bool:
    """True when ``theta`` predicts the true closed loop under its own gain."""
    theta = _as_theta(theta, theta0.p)
    ext = extended_feedback(theta, cost)
    return op_norm((theta0.matrix - theta.matrix) @ ext) <= tol


def find_unfalsifiable_point(theta0: DynamicsParameter, cost: CostSpec, b: float,
                             bracket: float = 0.5) -> DynamicsParameter | None:
    """For a scalar system, the ``a`` with ``(a, b)`` unfalsifiable, or None.

    Solves ``(a - a0) + (b - b0) L(a, b) = 0`` for ``a`` by bracketing
    around ``a0``.
    """
    if theta0.p != 1 or theta0.r != 1:
        raise ValueError("the root search is implemented for p = r = 1")
    a0, b0 = float(theta0.a[0, 0]), float(theta0.b[0, 0])

    def gap(a):
        try:
            l = solve_riccati(DynamicsParameter([[a]], [[b]]), cost).l[0, 0]
        except (NotStabilizable, NoConvergence):
            return math.nan
        return (a - a0) + (b - b0) * l

    grid = np.linspace(a0 - bracket, a0 + bracket, 201)
    vals = np.array([gap(a) for a in grid])
    for i in range(len(grid) - 1):
        lo, hi = vals[i], vals[i + 1]
        if np.isfinite(lo) and np.isfinite(hi) and lo * hi <= 0:
            a = scipy.optimize.brentq(gap, grid[i], grid[i + 1], xtol=1e-15)
            return DynamicsParameter([[a]], [[b]])
    return None


def null_directions(theta0: DynamicsParameter, cost: CostSpec) -> list[np.ndarray]:
    """An orthonormal basis of ``{Delta : Delta L~(theta0) = 0}`` (dimension p r)."""
    ext = extended_feedback(theta0, cost)
    ns = null_space(ext.T)  # rows of Delta lie in the left null space of ext
    basis = []
    for i in range(theta0.p):
        for j in range(ns.shape[1]):
            d = np.zeros((theta0.p, theta0.q))
            d[i] = ns[:, j]
            basis.append(d)
    return basis


def tangent_map(theta0: DynamicsParameter, cost: CostSpec) -> np.ndarray:
    """Matrix of ``(M, N) -> B0'Z + (N'K + B0'Delta) D0`` on vec(theta) coordinates.

    ``Z = K (M + N L0)`` and ``Delta - D0' Delta D0 = D0'Z + Z'D0``. Columns
    correspond to the canonical basis of p x q matrices (row-major).
    """
    p, r, q = theta0.p, theta0.r, theta0.q
    sol = solve_riccati(theta0, cost)
    k, l0 = sol.k, sol.l
    d0 = theta0.a + theta0.b @ l0
    cols = []
    for idx in range(p * q):
        e = np.zeros(p * q)
        e[idx] = 1.0
        e = e.reshape(p, q)
        m, n = e[:, :p], e[:, p:]
        z = k @ (m + n @ l0)
        delta = solve_lyapunov(d0, d0.T @ z + z.T @ d0)
        out = theta0.b.T @ z + (n.T @ k + theta0.b.T @ delta) @ d0
        cols.append(out.ravel())
    return np.array(cols).T


def tangent_dimension(theta0: DynamicsParameter, cost: CostSpec, probe_count: int | None = None,
                      seed: int = 0, tol: float = RANK_TOL) -> int:
    """Dimension of the optimal-gain level set at ``theta0``: ``pq`` minus the
    rank of the tangent map evaluated on ``probe_count`` probe directions.

    The canonical basis is always used; extra probes are seeded Gaussian
    combinations of it.
    """
    pq = theta0.p * theta0.q
    probe_count = pq if probe_count is None else int(probe_count)
    if probe_count < pq:
        raise ValueError(f"need at least {pq} probes")
    t = tangent_map(theta0, cost)
    images = t
    if probe_count > pq:
        extra = np.random.default_rng(seed).standard_normal((pq, probe_count - pq))
        images = np.hstack([t, t @ extra])
    return pq - rank(images, tol)


def finite_difference_dimension(theta0: DynamicsParameter, cost: CostSpec, step: float = 1e-6,
                                tol: float = 1e-5) -> int:
    """Cross-check of :func:`tangent_dimension` through a central-difference
    Jacobian of ``theta -> L(theta)``."""
    base = theta0.matrix
    cols = []
    for idx in range(base.size):
        e = np.zeros(base.size)
        e[idx] = step
        e = e.reshape(base.shape)
        lp = solve_riccati(DynamicsParameter.from_matrix(base + e, theta0.p), cost).l
        lm = solve_riccati(DynamicsParameter.from_matrix(base - e, theta0.p), cost).l
        cols.append(((lp - lm) / (2 * step)).ravel())
    return base.size - rank(np.array(cols).T, tol)


def expected_tangent_dimension(theta0: DynamicsParameter) -> int:
    p, r = theta0.p, theta0.r
    return p * p + (p - rank(theta0.a)) * (r - rank(theta0.b))


def subspace_side_information(theta0: DynamicsParameter, cost: CostSpec) -> SideInformation:
    """Subspace side information built from the ``rank(A0) r`` null directions
    orthogonal to ``P0``: ``theta0 + {X : tr(X' theta_i) = 0}``."""
    p0 = construct_p0(theta0, cost)
    nd = AffineSubspace.spanned_by(np.zeros_like(theta0.matrix), null_directions(theta0, cost))
    if p0.dimension:
        coeffs = nd.basis_matrix() @ p0.basis_matrix().T  # nd coords of the P0 directions
        keep = null_space(coeffs.T)
        constraints = [(keep[:, j] @ nd.basis_matrix()).reshape(theta0.matrix.shape)
                       for j in range(keep.shape[1])]
    else:
        constraints = list(nd.basis)
    return SideInformation.affine(AffineSubspace.from_constraints(theta0.matrix, constraints))


def _tangent_directions(side: SideInformation, theta0: DynamicsParameter) -> np.ndarray:
    sub = side.as_subspace(theta0.matrix.shape)
    return sub.basis_matrix()


@dataclass(frozen=True)
class IdentifiabilityReport:
    holds: bool
    estimated_constant: float
    samples: int
    worst_denominator: float
    violating_direction: list | None = None


def identifiability_check(side: SideInformation, theta0: DynamicsParameter, cost: CostSpec,
                          sample_count: int = 1000, radius: float = 0.1, seed: int = 0,
                          numerator_tol: float = 1e-9, denominator_tol: float = 1e-12
                          ) -> IdentifiabilityReport:
    """Empirical test of ``||L(th2) - L(th0)|| <= l0 ||(th2 - th0) L~(th1)||`` over Theta0.

    Random pairs are drawn from the side-information set within ``radius`` of
    ``theta0``. Adversarial probes then take ``th1 = th0`` and ``th2`` along
    directions of the set that leave the true closed loop unchanged; any such
    direction that moves the gain is a violation.
    """
    if not side.samplable:
        raise UnsupportedConstraint(f"cannot sample {side.kind}-budget sets")
    if not side.contains(theta0.matrix, 1e-8):
        raise ValueError("theta0 does not belong to the side information set")
    rng = np.random.default_rng(seed)
    dirs = _tangent_directions(side, theta0)
    l0 = solve_riccati(theta0, cost)
    if dirs.shape[0] == 0:
        return IdentifiabilityReport(True, 0.0, 0, math.inf)
    shape = theta0.matrix.shape

    def draw():
        c = rng.standard_normal(dirs.shape[0])
        c *= radius * rng.uniform() ** (1.0 / dirs.shape[0]) / np.linalg.norm(c)
        return theta0.matrix + (c @ dirs).reshape(shape)

    worst, worst_den, done = 0.0, math.inf, 0
    while done < sample_count:
        try:
            t1 = DynamicsParameter.from_matrix(draw(), theta0.p)
            t2 = DynamicsParameter.from_matrix(draw(), theta0.p)
            ext1 = solve_riccati(t1, cost).extended
            lt2 = solve_riccati(t2, cost).l
        except (NotStabilizable, NoConvergence):
            continue
        done += 1
        num = op_norm(lt2 - l0.l)
        den = op_norm((t2.matrix - theta0.matrix) @ ext1)
        worst_den = min(worst_den, den)
        if num > numerator_tol:
            worst = max(worst, num / den if den > denominator_tol else math.inf)

    # closed-loop-preserving directions inside the set, taken orthogonal to P0
    ext0 = l0.extended
    image = np.array([(d.reshape(shape) @ ext0).ravel() for d in dirs])
    ker = null_space(image.T)
    p0 = construct_p0(theta0, cost)
    violating = None
    for j in range(ker.shape[1]):
        v = ker[:, j] @ dirs
        if p0.dimension:
            pb = p0.basis_matrix()
            v = v - pb.T @ (pb @ v)
        if np.linalg.norm(v) <= 1e-8:
            continue
        v = v / np.linalg.norm(v)
        step = min(radius, 1e-2)
        try:
            lt2 = solve_riccati(DynamicsParameter.from_matrix(
                theta0.matrix + step * v.reshape(shape), theta0.p), cost).l
        except (NotStabilizable, NoConvergence):
            continue
        num = op_norm(lt2 - l0.l)
        den = op_norm(step * v.reshape(shape) @ ext0)
        if num > numerator_tol and den <= max(denominator_tol, 1e-9 * step):
            worst = math.inf
            violating = v.reshape(shape).tolist()
            worst_den = min(worst_den, den)
            break
    return IdentifiabilityReport(math.isfinite(worst), worst, done, worst_den, violating)


@dataclass(frozen=True)
class LipschitzReport:
    radii: tuple
    max_ratio: tuple
    samples: int

    @property
    def stable(self) -> bool:
        """Finite at every radius and within a factor of 2 across radii."""
        vals = np.array(self.max_ratio)
        return bool(np.all(np.isfinite(vals)) and vals.max() <= 2.0 * vals.min())


def lipschitz_diagnostic(theta0: DynamicsParameter, cost: CostSpec, radii=(0.05, 0.025),
                         sample_count: int = 1000, seed: int = 0) -> LipschitzReport:
    """Max of ``||L(theta) - L(theta0)|| / ||theta - theta0||`` over random
    ``theta`` with ``||theta - theta0|| <= radius`` (operator norm)."""
    rng = np.random.default_rng(seed)
    l0 = solve_riccati(theta0, cost).l
    out = []
    for radius in radii:
        best, done = 0.0, 0
        while done < sample_count:
            g = rng.standard_normal(theta0.matrix.shape)
            g *= radius * rng.uniform() / op_norm(g)
            try:
                l = solve_riccati(DynamicsParameter.from_matrix(theta0.matrix + g, theta0.p), cost).l
            except (NotStabilizable, NoConvergence):
                continue
            done += 1
            best = max(best, op_norm(l - l0) / op_norm(g))
        out.append(best)
    return LipschitzReport(tuple(radii), tuple(out), sample_count)


def geometry_report(theta0: DynamicsParameter, cost: CostSpec, sample_count: int = 200,
                    seed: int = 0) -> dict:
    """JSON-ready summary of the geometry at ``theta0``."""
    p0 = construct_p0(theta0, cost)
    members = []
    rng = np.random.default_rng(seed)
    for _ in range(3 if p0.dimension else 0):
        c = 0.05 * rng.standard_normal(p0.dimension)
        try:
            rep = verify_p0_membership(p0.point(c), theta0, cost)
        except (NotStabilizable, NoConvergence):
            continue
        members.append(asdict(rep))
    lip = lipschitz_diagnostic(theta0, cost, sample_count=sample_count, seed=seed)
    full = identifiability_check(SideInformation.full(theta0.p, theta0.q), theta0, cost,
                                 sample_count=sample_count, seed=seed)
    return {
        "p": theta0.p,
        "r": theta0.r,
        "rank_a0": rank(theta0.a),
        "rank_b0": rank(theta0.b),
        "p0_dimension": p0.dimension,
        "p0_expected_dimension": (theta0.p - rank(theta0.a)) * theta0.r,
        "p0_basis": [e.tolist() for e in p0.basis],
        "p0_membership_samples": members,
        "tangent_dimension": tangent_dimension(theta0, cost),
        "tangent_expected_dimension": expected_tangent_dimension(theta0),
        "lipschitz": {"radii": list(lip.radii), "max_ratio": list(lip.max_ratio),
                      "stable": lip.stable},
        "full_support_identifiability": {
            "holds": full.holds,
            "estimated_constant": full.estimated_constant if math.isfinite(full.estimated_constant)
            else "inf",
            "samples": full.samples,
        },
    }


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
