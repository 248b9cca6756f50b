"""Seeded test systems: random stabilizable instances, instances with
prescribed ranks, and a sparse identifiable instance."""
from __future__ import annotations

import numpy as np

from .errors import NoConvergence, NotStabilizable
from .linalg import solve_riccati
from .system import CostSpec, DynamicsParameter

# Eight nonzero entries, open-loop spectral radius 1.5, full-rank A. Its
# support subspace meets the closed-loop null directions only at zero.
SPARSE_THETA0 = np.array([[-1.0, -0.4, 0.8, 0.0, 0.0, 0.0],
                          [-1.0, -0.7, 0.0, 0.0, 0.6, 0.0],
                          [0.0, 0.0, -0.9, -0.5, 0.0, 0.0]])


def sparse_system() -> tuple[DynamicsParameter, CostSpec]:
    return DynamicsParameter.from_matrix(SPARSE_THETA0, 3), CostSpec(np.eye(3), np.eye(3))


def low_rank(rng: np.random.Generator, rows: int, cols: int, k: int,
             low: float = 0.5, high: float = 1.0) -> np.ndarray:
    """A random ``rows x cols`` matrix of rank exactly ``k`` with singular
    values drawn from ``[low, high]``."""
    u, _, vt = np.linalg.svd(rng.standard_normal((rows, cols)))
    m = min(rows, cols)
    s = np.zeros(m)
    s[:k] = rng.uniform(low, high, k)
    return u[:, :m] @ np.diag(s) @ vt[:m]


def ranked_instance(rank_a: int, rank_b: int, seed: int, p: int = 3, r: int = 3,
                    a_scale: float = 1.2) -> tuple[DynamicsParameter, CostSpec]:
    """Stabilizable ``(A0, B0)`` with the requested ranks and identity costs.

    Draws are repeated (deterministically) until the Riccati equation has a
    stabilizing solution.
    """
    rng = np.random.default_rng(seed)
    cost = CostSpec(np.eye(p), np.eye(r))
    for _ in range(1000):
        theta = DynamicsParameter(low_rank(rng, p, p, rank_a, 0.5 * a_scale, a_scale),
                                  low_rank(rng, p, r, rank_b))
        try:
            solve_riccati(theta, cost)
        except (NotStabilizable, NoConvergence):
            continue
        return theta, cost
    raise NotStabilizable("no stabilizable draw with the requested ranks")


def random_instance(seed: int, max_p: int = 4, max_r: int = 4) -> tuple[DynamicsParameter, CostSpec]:
    """Random dimensions up to ``(max_p, max_r)``, Gaussian ``A`` (spectral
    radius up to about 1.5), Gaussian ``B`` and random positive definite costs."""
    rng = np.random.default_rng(seed)
    while True:
        p = int(rng.integers(1, max_p + 1))
        r = int(rng.integers(1, max_r + 1))
        a = rng.standard_normal((p, p))
        rad = np.abs(np.linalg.eigvals(a)).max()
        if rad > 0:
            a *= rng.uniform(0.3, 1.5) / rad
        b = rng.standard_normal((p, r))
        gq = rng.standard_normal((p, p))
        gr = rng.standard_normal((r, r))
        q = gq @ gq.T + 0.1 * np.eye(p)
        rr = gr @ gr.T + 0.1 * np.eye(r)
        theta, cost = DynamicsParameter(a, b), CostSpec(0.5 * (q + q.T), 0.5 * (rr + rr.T))
        try:
            solve_riccati(theta, cost)
        except (NotStabilizable, NoConvergence):
            continue
        return theta, cost
