"""The linear-quadratic plant: parameters, costs, noise, and trajectory simulation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import BadCost, BadCovariance
from .linalg import is_positive_definite

DIVERGENCE_LIMIT = 1e30


@dataclass(frozen=True)
class DynamicsParameter:
    """``theta = [A, B]`` with ``A`` p x p and ``B`` p x r."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
            raise ValueError(f"inconsistent shapes A{a.shape} B{b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("dynamics must be finite")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_matrix(cls, theta, p: int) -> "DynamicsParameter":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:, :p], theta[:, p:])

    @property
    def p(self) -> int:
        return self.a.shape[0]

    @property
    def r(self) -> int:
        return self.b.shape[1]

    @property
    def q(self) -> int:
        return self.p + self.r

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.a, self.b])


@dataclass(frozen=True)
class CostSpec:
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        r = np.array(self.r, dtype=float)
        if not is_positive_definite(q):
            raise BadCost("Q must be symmetric positive definite")
        if not is_positive_definite(r):
            raise BadCost("R must be symmetric positive definite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class NoiseModel:
    """Independent zero-mean disturbances with covariance ``covariance``.

    ``kind`` is ``"gaussian"`` or ``"uniform"`` (each coordinate of a
    unit-variance uniform vector, mixed by the Cholesky factor of C).
    """

    covariance: np.ndarray
    seed: int = 0
    kind: str = "gaussian"

    def __post_init__(self):
        c = np.array(self.covariance, dtype=float)
        if not is_positive_definite(c):
            raise BadCovariance("noise covariance must be symmetric positive definite")
        if self.kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        object.__setattr__(self, "covariance", c)

    @property
    def factor(self) -> np.ndarray:
        return np.linalg.cholesky(self.covariance)

    def bound(self) -> np.ndarray:
        """Per-coordinate bound on |w_i| (uniform kind only)."""
        return np.sqrt(3.0) * np.abs(self.factor).sum(axis=1)


def draw_noise(model: NoiseModel, horizon: int) -> np.ndarray:
    """Disturbances ``w(1..horizon)`` as a (horizon, p) array; a pure function of the seed."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    p = model.covariance.shape[0]
    rng = np.random.default_rng(model.seed)
    if model.kind == "gaussian":
        base = rng.standard_normal((horizon, p))
    else:
        base = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(horizon, p))
    return base @ model.factor.T


@dataclass
class Trajectory:
    """One simulated path.

    ``states`` has ``n + 1`` rows x(0..n); ``inputs``, ``noises`` (w(1..n)),
    ``costs`` have ``n`` rows. ``gains`` holds the per-step feedback when the
    policy was linear.
    """

    states: np.ndarray
    inputs: np.ndarray
    noises: np.ndarray
    costs: np.ndarray
    gains: np.ndarray | None = None
    diverged: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.states.shape[1]

    @property
    def r(self) -> int:
        return self.inputs.shape[1]

    def reconstruction_residual(self, theta: DynamicsParameter) -> np.ndarray:
        """Per-step max |x(t+1) - A x(t) - B u(t) - w(t+1)|."""
        n = self.horizon
        pred = self.states[:n] @ theta.a.T + self.inputs @ theta.b.T + self.noises[:n]
        return np.abs(self.states[1:n + 1] - pred).max(axis=1)

    def to_csv(self, path=None) -> str:
        """Serialize as CSV (t, x_1..x_p, u_1..u_r, cost); the final row carries x(n) only."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["t"] + [f"x_{i + 1}" for i in range(self.p)] + \
            [f"u_{i + 1}" for i in range(self.r)] + ["cost"]
        writer.writerow(header)
        for t in range(self.horizon):
            writer.writerow([t] + [repr(float(v)) for v in self.states[t]]
                            + [repr(float(v)) for v in self.inputs[t]]
                            + [repr(float(self.costs[t]))])
        writer.writerow([self.horizon] + [repr(float(v)) for v in self.states[self.horizon]]
                        + [""] * (self.r + 1))
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, theta: DynamicsParameter) -> "Trajectory":
        """Read a CSV written by :meth:`to_csv`; noises are reconstructed from ``theta``."""
        text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        p = sum(1 for h in header if h.startswith("x_"))
        r = sum(1 for h in header if h.startswith("u_"))
        body = rows[1:]
        states = np.array([[float(v) for v in row[1:1 + p]] for row in body])
        inputs = np.array([[float(v) for v in row[1 + p:1 + p + r]] for row in body[:-1]]).reshape(-1, r)
        costs = np.array([float(row[1 + p + r]) for row in body[:-1]])
        n = inputs.shape[0]
        noises = states[1:] - states[:n] @ theta.a.T - inputs @ theta.b.T
        return cls(states=states, inputs=inputs, noises=noises, costs=costs)


def _initial_state(x0, p: int) -> np.ndarray:
    if x0 is None:
        return np.zeros(p)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != p:
        raise ValueError(f"x0 has length {x0.shape[0]}, expected {p}")
    return x0


def simulate(theta0: DynamicsParameter, cost: CostSpec, policy, noises, x0=None,
             *, fast: bool = True) -> Trajectory:
    """Drive the true system with ``policy`` over ``len(noises)`` steps.

    Linear (episodic) policies are rolled out block by block through the
    compiled kernel; any other policy is queried step by step through
    ``act``/``observe``. ``fast=False`` forces the step-by-step path.
    """
    from .policies import LinearPolicy

    noises = np.ascontiguousarray(noises, dtype=float)
    n, p = noises.shape
    if p != theta0.p:
        raise ValueError("noise dimension does not match the state dimension")
    r = theta0.r
    states = np.zeros((n + 1, p))
    states[0] = _initial_state(x0, p)
    inputs = np.zeros((n, r))
    costs = np.zeros(n)
    policy.reset(p, r)
    linear = isinstance(policy, LinearPolicy)
    gains = np.zeros((n, r, p)) if linear else None
    diverged = False
    done = n

    if linear and fast:
        t = 0
        while t < n:
            gain = policy.gain(t)
            end = min(policy.hold_until(t), n)
            acc = policy.accumulator
            gram = acc.gram if acc is not None else None
            cross = acc.cross if acc is not None else None
            steps, div = kernels.rollout(
                theta0.a, theta0.b, gain, cost.q, cost.r, noises[t:end],
                states[t:end + 1], inputs[t:end], costs[t:end], gram, cross,
                limit=DIVERGENCE_LIMIT)
            if acc is not None:
                acc.count += steps
            gains[t:t + steps] = gain
            t += steps
            if div:
                diverged, done = True, t
                break
    else:
        for t in range(n):
            x = states[t]
            if linear:
                gain = policy.gain(t)
                gains[t] = gain
                u = gain @ x
            else:
                u = np.asarray(policy.act(t, x), dtype=float).reshape(r)
            inputs[t] = u
            costs[t] = x @ cost.q @ x + u @ cost.r @ u
            x_next = theta0.a @ x + theta0.b @ u + noises[t]
            states[t + 1] = x_next
            policy.observe(x, u, x_next)
            if not np.linalg.norm(x_next) <= DIVERGENCE_LIMIT:
                diverged, done = True, t + 1
                break

    traj = Trajectory(
        states=states[:done + 1], inputs=inputs[:done], noises=noises[:done],
        costs=costs[:done], gains=None if gains is None else gains[:done],
        diverged=diverged)
    traj.meta.update(policy.diagnostics())
    return traj


def simulate_coupled(theta0, cost, policy, optimal, noises, x0=None, *, fast=True):
    """Run ``policy`` and ``optimal`` on the identical noise sequence and x0."""
    noises = np.ascontiguousarray(noises, dtype=float)
    traj = simulate(theta0, cost, policy, noises, x0, fast=fast)
    opt = simulate(theta0, cost, optimal, noises, x0, fast=fast)
    return traj, opt


# Dynamics and cost matrices of the reference experiment
REFERENCE_A0 = np.array([[1.04, 0.0, -0.27],
                     [0.52, -0.81, 0.83],
                     [0.0, 0.04, -0.90]])
REFERENCE_B0 = np.array([[-0.47, 0.61, -0.29],
                     [-0.50, 0.58, 0.25],
                     [0.29, 0.0, -0.72]])
REFERENCE_Q = np.array([[0.65, -0.08, -0.14],
                    [-0.08, 0.57, 0.26],
                    [-0.14, 0.26, 2.50]])
REFERENCE_R = np.array([[0.20, 0.05, 0.08],
                    [0.05, 0.14, 0.04],
                    [0.08, 0.04, 0.24]])
REFERENCE_GAMMA = 1.2


def reference_system() -> tuple[DynamicsParameter, CostSpec]:
    return DynamicsParameter(REFERENCE_A0, REFERENCE_B0), CostSpec(REFERENCE_Q, REFERENCE_R)
