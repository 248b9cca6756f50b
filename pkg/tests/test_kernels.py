import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_lqr import _kernels_py, kernels

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="extension not built")


def _case(seed, p, r, steps):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, p)) * 0.4
    b = rng.standard_normal((p, r))
    l = rng.standard_normal((r, p)) * 0.2
    q = np.eye(p)
    rr = np.eye(r) * 0.5
    noise = rng.standard_normal((steps, p))
    return a, b, l, q, rr, noise


def _run(impl, a, b, l, q, r, noise, accumulate=True):
    p, nr = b.shape
    steps = noise.shape[0]
    states = np.zeros((steps + 1, p))
    states[0] = 1.0
    inputs = np.zeros((steps, nr))
    costs = np.zeros(steps)
    gram = np.zeros((p + nr, p + nr)) if accumulate else None
    cross = np.zeros((p, p + nr)) if accumulate else None
    out = kernels.rollout(a, b, l, q, r, noise, states, inputs, costs, gram, cross, impl=impl)
    return out, states, inputs, costs, gram, cross


def test_python_rollout_matches_direct_loop():
    a, b, l, q, r, noise = _case(0, 3, 2, 50)
    _, states, inputs, costs, gram, cross = _run("python", a, b, l, q, r, noise)
    x = np.ones(3)
    g = np.zeros((5, 5))
    for t in range(50):
        u = l @ x
        assert costs[t] == pytest.approx(x @ q @ x + u @ r @ u, rel=1e-12)
        z = np.concatenate([x, u])
        g += np.outer(z, z)
        x = a @ x + b @ u + noise[t]
    np.testing.assert_allclose(states[-1], x, rtol=1e-12)
    np.testing.assert_allclose(gram, g, rtol=1e-12)


@compiled
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4), st.integers(1, 200))
def test_rollout_backends_agree(seed, p, r, steps):
    case = _case(seed, p, r, steps)
    py = _run("python", *case)
    cy = _run("cython", *case)
    assert py[0] == cy[0]
    for u, v in zip(py[1:], cy[1:]):
        np.testing.assert_allclose(u, v, rtol=1e-11, atol=1e-11)


@compiled
def test_rollout_divergence_flag_agrees():
    a = np.array([[3.0]])
    b = np.array([[0.0]])
    l = np.array([[0.0]])
    noise = np.ones((200, 1))
    x, expected = 0.0, 0
    while abs(x) <= 1e6:
        x, expected = 3.0 * x + 1.0, expected + 1
    for impl in ("python", "cython"):
        states = np.zeros((201, 1))
        steps, diverged = kernels.rollout(a, b, l, np.eye(1), np.eye(1), noise, states,
                                          np.zeros((200, 1)), np.zeros(200), limit=1e6, impl=impl)
        assert diverged and steps == expected


@compiled
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 3), st.integers(1, 150))
def test_decompose_backends_agree(seed, p, r, n):
    rng = np.random.default_rng(seed)
    a0 = rng.standard_normal((p, p)) * 0.3
    b0 = rng.standard_normal((p, r))
    lstar = rng.standard_normal((r, p)) * 0.1
    g = rng.standard_normal((p, p))
    k = g @ g.T + np.eye(p)
    m = np.eye(r)
    states = rng.standard_normal((n + 1, p))
    inputs = rng.standard_normal((n, r))
    noise = rng.standard_normal((n, p))
    py = kernels.decompose_terms(a0, b0, lstar, k, m, states, inputs, noise, impl="python")
    cy = kernels.decompose_terms(a0, b0, lstar, k, m, states, inputs, noise, impl="cython")
    np.testing.assert_allclose(py, cy, rtol=1e-9, atol=1e-9)


def test_read_only_inputs_accepted():
    a, b, l, q, r, noise = _case(1, 2, 2, 10)
    for m in (a, b, l, q, r, noise):
        m.flags.writeable = False
    out = _run(None, a, b, l, q, r, noise)
    assert out[0] == (10, False)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.backend("fortran")
    assert kernels.backend("python") is _kernels_py


def test_pure_fallback_selected_by_environment():
    env = dict(os.environ, ADAPTIVE_LQR_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from adaptive_lqr import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@compiled
def test_benchmark_smoke(capsys):
    path = os.path.join(os.path.dirname(__file__), os.pardir, "benchmarks", "bench_kernels.py")
    namespace = {"__name__": "bench"}
    with open(path) as fh:
        exec(compile(fh.read(), path, "exec"), namespace)
    assert namespace["main"](["--steps", "500", "--repeat", "1"]) == 0
    out = capsys.readouterr().out
    assert "rollout" in out and "decompose" in out
