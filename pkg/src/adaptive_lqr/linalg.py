"""Dense matrix utilities: spectral radius, rank, and the discrete Lyapunov and
Riccati solvers used by every other module.

All functions are pure and operate on small float64 numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BadCost, NoConvergence, NonSquare, NotStabilizable, UnstableInput

STABILITY_MARGIN = 1e-9
RICCATI_STEP_TOL = 1e-12
RICCATI_MAX_ITER = 100_000
RICCATI_DIVERGENCE_CAP = 1e12
RANK_TOL = 1e-9


def op_norm(m) -> float:
    """Operator (spectral) norm; 0 for empty matrices."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    if m.ndim == 1:
        return float(np.linalg.norm(m))
    return float(np.linalg.norm(m, 2))


def _check_square(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {m.shape}")


@dataclass(frozen=True)
class SpectralReport:
    radius: float
    is_stable: bool


def spectral_radius(m) -> SpectralReport:
    m = np.asarray(m, dtype=float)
    _check_square(m)
    if m.shape[0] == 0:
        return SpectralReport(0.0, True)
    if not np.all(np.isfinite(m)):
        raise NoConvergence("matrix has non-finite entries")
    try:
        eig = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    radius = float(np.max(np.abs(eig)))
    return SpectralReport(radius, radius < 1.0 - STABILITY_MARGIN)


def rank(m, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol`` times the largest one."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def null_space(m, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the right null space, using the same
    relative singular-value threshold as :func:`rank`."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    n = m.shape[1]
    if m.size == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(m)
    k = 0 if s.size == 0 or s[0] == 0.0 else int(np.sum(s > tol * s[0]))
    return vt[k:].T.copy()


def is_positive_definite(m) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    if not np.allclose(m, m.T, rtol=1e-12, atol=1e-12):
        return False
    return bool(np.linalg.eigvalsh(m).min() > 0.0)


def solve_lyapunov(d, p0) -> np.ndarray:
    """Solve ``K = d' K d + p0`` for a stable ``d``."""
    d = np.asarray(d, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    _check_square(d)
    report = spectral_radius(d)
    if not report.radius < 1.0:
        raise UnstableInput(f"spectral radius {report.radius:.6g} >= 1; the series diverges")
    k = scipy.linalg.solve_discrete_lyapunov(d.T, p0)
    return 0.5 * (k + k.T)


@dataclass(frozen=True)
class RiccatiSolution:
    k: np.ndarray
    l: np.ndarray
    iterations: int
    closed_loop_radius: float

    @property
    def extended(self) -> np.ndarray:
        """The stacked feedback ``[I_p; L]`` of shape (p+r, p)."""
        p = self.k.shape[0]
        return np.vstack([np.eye(p), self.l])


def riccati_map(a, b, q, r, k) -> np.ndarray:
    """One application of the Riccati operator to ``k``."""
    ka = k @ a
    bka = b.T @ ka
    return q + a.T @ ka - bka.T @ np.linalg.solve(b.T @ k @ b + r, bka)


def riccati_residual(a, b, q, r, k) -> float:
    return op_norm(k - riccati_map(a, b, q, r, k))


def optimal_gain(a, b, r, k) -> np.ndarray:
    return -np.linalg.solve(b.T @ k @ b + r, b.T @ k @ a)


def dare(a, b, q, r) -> RiccatiSolution:
    """Riccati solution by value iteration started at ``q``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    _check_square(a)
    if not is_positive_definite(q):
        raise BadCost("Q must be symmetric positive definite")
    if not is_positive_definite(r):
        raise BadCost("R must be symmetric positive definite")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NotStabilizable("dynamics contain non-finite entries")

    k = q.copy()
    for it in range(1, RICCATI_MAX_ITER + 1):
        k_next = riccati_map(a, b, q, r, k)
        k_next = 0.5 * (k_next + k_next.T)
        size = np.linalg.norm(k_next)
        if not np.isfinite(size) or size > RICCATI_DIVERGENCE_CAP:
            raise NotStabilizable(f"value iteration diverged after {it} iterations")
        # Frobenius norm bounds the operator norm from above
        step = np.linalg.norm(k_next - k)
        k = k_next
        if step < RICCATI_STEP_TOL * (1.0 + size):
            break
    else:
        raise NotStabilizable(f"value iteration did not converge in {RICCATI_MAX_ITER} iterations")

    l = optimal_gain(a, b, r, k)
    radius = spectral_radius(a + b @ l)
    if not radius.is_stable:
        raise NotStabilizable(f"closed loop spectral radius {radius.radius:.6g} is not below 1")
    return RiccatiSolution(k=k, l=l, iterations=it, closed_loop_radius=radius.radius)


def solve_riccati(theta, cost) -> RiccatiSolution:
    """Riccati solution for a dynamics parameter ``theta`` (with ``.a``, ``.b``)
    and costs ``cost`` (with ``.q``, ``.r``)."""
    return dare(theta.a, theta.b, cost.q, cost.r)
