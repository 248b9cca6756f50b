"""Invariant battery run by ``adaptive-lqr verify``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..estimation import EpisodeSchedule
from ..geometry import (construct_p0, expected_tangent_dimension, identifiability_check,
                        lipschitz_diagnostic, subspace_side_information, tangent_dimension,
                        unfalsifiable_test, verify_p0_membership)
from ..instances import random_instance, ranked_instance, sparse_system
from ..linalg import rank, riccati_residual, solve_lyapunov, solve_riccati
from ..policies import (ce_policy, gce_policy, initial_estimate, optimal_policy, rce_policy,
                        ts_policy)
from ..regret import (compute_regret, decompose, log_grid, optimal_cost_fluctuation,
                      trend_ratio)
from ..sideinfo import SideInformation
from ..system import CostSpec, DynamicsParameter, NoiseModel, draw_noise, reference_system, simulate_coupled

IDENTITY_TOL = 1e-6
TREND_FACTOR = 3.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass
class VerifyReport:
    level: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail} ({c.seconds:.1f}s)"
                for c in self.checks]


def check_riccati(count: int) -> tuple[bool, str]:
    instances = [reference_system()] + [random_instance(s) for s in range(count)]
    worst_res = worst_lyap = 0.0
    stable = True
    for theta, cost in instances:
        sol = solve_riccati(theta, cost)
        scale = 1.0 + np.linalg.norm(sol.k, 2)
        worst_res = max(worst_res, riccati_residual(theta.a, theta.b, cost.q, cost.r, sol.k) / scale)
        d = theta.a + theta.b @ sol.l
        k_lyap = solve_lyapunov(d, cost.q + sol.l.T @ cost.r @ sol.l)
        worst_lyap = max(worst_lyap, np.abs(k_lyap - sol.k).max() / scale)
        stable &= sol.closed_loop_radius < 1.0
    ok = worst_res <= 1e-9 and worst_lyap <= 1e-8 and stable
    return ok, f"{len(instances)} systems, residual {worst_res:.1e}, lyapunov gap {worst_lyap:.1e}"


def check_scalar() -> tuple[bool, str]:
    sol = solve_riccati(DynamicsParameter([[0.5]], [[1.0]]), CostSpec([[1.0]], [[1.0]]))
    k = (0.25 + math.sqrt(4.0625)) / 2
    ek = abs(sol.k[0, 0] - k)
    el = abs(sol.l[0, 0] + 0.5 * k / (k + 1))
    return ek <= 1e-10 and el <= 1e-10, f"k error {ek:.1e}, gain error {el:.1e}"


def _policy(kind, theta, cost, seed):
    schedule = EpisodeSchedule(1.2)
    if kind == "optimal":
        return optimal_policy(theta, cost)
    init = initial_estimate(theta, cost, seed=seed)
    if kind == "ce":
        return ce_policy(schedule, init, cost)
    if kind == "rce":
        return rce_policy(schedule, 0.1, init, cost, seed=seed)
    return ts_policy(schedule, np.eye(theta.q), init, cost, seed=seed)


def decomposition_residuals(seeds, horizons, kinds=("optimal", "ce", "rce", "ts"),
                            negate_t: bool = False) -> list[tuple]:
    """``(kind, seed, n, R(n), relative residual)`` for the reference system."""
    theta, cost = reference_system()
    out = []
    for kind in kinds:
        for seed in seeds:
            n = max(horizons)
            noise = draw_noise(NoiseModel(np.eye(theta.p), seed=seed), n)
            for h in horizons:
                traj, opt = simulate_coupled(theta, cost, _policy(kind, theta, cost, seed),
                                             optimal_policy(theta, cost), noise[:h])
                r = compute_regret(traj, opt, theta, cost).regret[-1]
                terms = decompose(traj, theta, cost, negate_t=negate_t)
                out.append((kind, seed, h, r, abs(r - terms.total) / (1.0 + abs(r))))
    return out


def check_decomposition(seeds, horizons, negate_t=False) -> tuple[bool, str]:
    rows = decomposition_residuals(seeds, horizons, negate_t=negate_t)
    worst = max(rows, key=lambda row: row[4])
    ok = worst[4] <= IDENTITY_TOL
    return ok, (f"{len(rows)} runs, worst relative residual {worst[4]:.1e} "
                f"({worst[0]}, seed {worst[1]}, n={worst[2]})")


def check_p0(seeds) -> tuple[bool, str]:
    bad = []
    for ra in range(4):
        for seed in seeds:
            theta, cost = ranked_instance(ra, 3, seed=100 * ra + seed)
            p0 = construct_p0(theta, cost)
            if p0.dimension != (theta.p - rank(theta.a)) * theta.r:
                bad.append(f"rank {ra}: dimension {p0.dimension}")
            rng = np.random.default_rng(seed)
            for _ in range(3 if p0.dimension else 0):
                rep = verify_p0_membership(p0.point(0.1 * rng.standard_normal(p0.dimension)), theta, cost)
                if not (rep.member and rep.k_gap <= 1e-7):
                    bad.append(f"rank {ra}: member failed {rep}")
    return not bad, "all dimensions and memberships match" if not bad else "; ".join(bad[:3])


def check_tangent(seeds) -> tuple[bool, str]:
    bad = []
    theta, cost = reference_system()
    if tangent_dimension(theta, cost) != 9:
        bad.append("reference system")
    for ra in range(4):
        for rb in (3, 2):
            for seed in seeds:
                theta, cost = ranked_instance(ra, rb, seed=1000 + 10 * ra + rb + 100 * seed)
                got, want = tangent_dimension(theta, cost), expected_tangent_dimension(theta)
                if got != want:
                    bad.append(f"ranks ({ra},{rb}): {got} != {want}")
    return not bad, "all tangent dimensions match" if not bad else "; ".join(bad[:3])


def unfalsifiable_hits(count: int, seed: int = 0, scale: float = 0.1) -> int:
    theta, cost = reference_system()
    rng = np.random.default_rng(seed)
    hits = done = 0
    while done < count:
        g = theta.matrix + scale * rng.standard_normal(theta.matrix.shape)
        try:
            hit = unfalsifiable_test(g, theta, cost)
        except ArithmeticError:
            continue
        done += 1
        hits += hit
    return hits


def check_unfalsifiable(count: int) -> tuple[bool, str]:
    hits = unfalsifiable_hits(count)
    return hits == 0, f"{hits} of {count} random perturbations unfalsifiable"


def check_identifiability(samples: int) -> tuple[bool, str]:
    theta, cost = ranked_instance(2, 3, seed=23)
    full = identifiability_check(SideInformation.full(theta.p, theta.q), theta, cost,
                                 sample_count=samples)
    sub = identifiability_check(subspace_side_information(theta, cost), theta, cost,
                                sample_count=samples)
    sp, sc = sparse_system()
    sparse = identifiability_check(SideInformation.support(sp.matrix != 0), sp, sc,
                                   sample_count=samples)
    lip = lipschitz_diagnostic(*reference_system(), sample_count=samples)
    ok = (not full.holds) and sub.holds and sparse.holds and lip.stable
    return ok, (f"full support violated={not full.holds}, subspace constant "
                f"{sub.estimated_constant:.2f}, sparse constant {sparse.estimated_constant:.2f}, "
                f"Lipschitz {max(lip.max_ratio):.2f}")


def monte_carlo_curves(kind: str, replicates: int = 10, horizon: int = 100_000) -> dict:
    """Median curves over replicates for RCE/TS on the reference system or
    GCE/RCE on the sparse instance."""
    if kind in ("gce", "sparse-rce"):
        theta, cost = sparse_system()
    else:
        theta, cost = reference_system()
    grid = log_grid(horizon)
    nf = grid.astype(float)
    logn = np.log(nf)
    regrets, errors, dists, fluct = [], [], [], []
    p0 = construct_p0(theta, cost)
    schedule = EpisodeSchedule(1.2)
    for seed in range(replicates):
        init = initial_estimate(theta, cost, seed=seed)
        if kind in ("rce", "sparse-rce"):
            pol = rce_policy(schedule, 0.1, init, cost, seed=seed)
        elif kind == "ts":
            pol = ts_policy(schedule, np.eye(theta.q), init, cost, seed=seed)
        else:
            pol = gce_policy(schedule, SideInformation.support(theta.matrix != 0), None, init, cost)
        noise = draw_noise(NoiseModel(np.eye(theta.p), seed=seed), horizon)
        traj, opt = simulate_coupled(theta, cost, pol, optimal_policy(theta, cost), noise)
        regrets.append(compute_regret(traj, opt, theta, cost).regret[grid - 1])
        ests = [pol.estimate_at(int(n)) for n in grid]
        errors.append([np.linalg.norm(e - theta.matrix, 2) for e in ests])
        dists.append([np.linalg.norm(e - p0.project(e), 2) for e in ests])
        fluct.append(optimal_cost_fluctuation(opt, theta, cost, np.eye(theta.p), grid)[1])
    r = np.median(regrets, axis=0)
    e = np.median(errors, axis=0)
    d = np.median(dists, axis=0)
    return {"n": grid, "regret": r, "error": e, "regret_all": np.array(regrets),
            "normalized_regret": r / (np.sqrt(nf) * logn),
            "normalized_error": e * nf ** 0.25 / np.sqrt(logn),
            "regret_over_log2": r / logn ** 2,
            "scaled_sq_error": nf * d ** 2 / logn,
            "fluctuation": np.array(fluct)}


def check_boundedness() -> tuple[bool, str]:
    parts, ok = [], True
    for kind, cols in (("rce", ("normalized_regret", "normalized_error")),
                       ("ts", ("normalized_regret",)),
                       ("gce", ("regret_over_log2", "scaled_sq_error"))):
        curves = monte_carlo_curves(kind)
        for col in cols:
            ratio = trend_ratio(curves["n"], curves[col], 1e3, 1e5)
            ok &= ratio <= TREND_FACTOR
            parts.append(f"{kind} {col} {ratio:.2f}")
    return ok, ", ".join(parts)


def verify_suite(level: str = "fast", inject_bug: bool = False) -> VerifyReport:
    """Run the battery. ``fast`` takes seconds; ``full`` adds the long-horizon
    Monte-Carlo boundedness checks. ``inject_bug`` flips the sign of the
    quadratic decomposition term so the identity check must fail."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    full = level == "full"
    plan = [
        ("riccati", lambda: check_riccati(100 if full else 20)),
        ("scalar oracle", check_scalar),
        ("decomposition identity", lambda: check_decomposition(
            range(5) if full else range(2), (100, 1000, 10000) if full else (100, 1000),
            negate_t=inject_bug)),
        ("P0 dimension", lambda: check_p0(range(3) if full else range(1))),
        ("tangent dimension", lambda: check_tangent(range(2) if full else range(1))),
        ("unfalsifiable set", lambda: check_unfalsifiable(1000 if full else 200)),
        ("identifiability", lambda: check_identifiability(1000 if full else 200)),
    ]
    if full:
        plan.append(("long-horizon boundedness", check_boundedness))
    report = VerifyReport(level)
    for name, fn in plan:
        start = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # failures become report entries
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        report.checks.append(CheckResult(name, bool(ok), detail, time.perf_counter() - start))
    return report
