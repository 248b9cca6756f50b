import io

import numpy as np
import pytest

from adaptive_lqr.errors import BadCost, BadCovariance
from adaptive_lqr.estimation import EpisodeSchedule
from adaptive_lqr.linalg import solve_riccati
from adaptive_lqr.policies import FixedGainPolicy, Policy, initial_estimate, optimal_policy, rce_policy
from adaptive_lqr.system import (REFERENCE_A0, CostSpec, DynamicsParameter, NoiseModel, Trajectory,
                                 draw_noise, simulate, simulate_coupled)


def test_parameter_validation():
    with pytest.raises(ValueError):
        DynamicsParameter(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        DynamicsParameter(np.eye(2), np.ones((3, 1)))
    with pytest.raises(ValueError):
        DynamicsParameter([[np.nan]], [[1.0]])
    theta = DynamicsParameter(np.eye(2), [1.0, 2.0])
    assert theta.b.shape == (2, 1) and theta.q == 3
    np.testing.assert_array_equal(DynamicsParameter.from_matrix(theta.matrix, 2).matrix, theta.matrix)
    assert not theta.a.flags.writeable


def test_reference_matrices_verbatim(reference):
    theta, cost = reference
    assert theta.a[0, 0] == 1.04 and theta.b[2, 2] == -0.72
    assert cost.q[2, 2] == 2.50 and cost.r[1, 1] == 0.14
    assert np.linalg.det(REFERENCE_A0) == pytest.approx(0.718016, rel=1e-9)


def test_cost_and_noise_validation():
    with pytest.raises(BadCost):
        CostSpec(np.eye(2), np.zeros((1, 1)))
    with pytest.raises(BadCovariance):
        NoiseModel(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        NoiseModel(np.eye(2), kind="cauchy")


def test_noise_is_seeded_and_has_the_right_covariance():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    w1 = draw_noise(NoiseModel(cov, seed=3), 200_000)
    w2 = draw_noise(NoiseModel(cov, seed=3), 200_000)
    np.testing.assert_array_equal(w1, w2)
    np.testing.assert_allclose(np.cov(w1.T), cov, atol=0.03)
    u = draw_noise(NoiseModel(cov, seed=4, kind="uniform"), 200_000)
    np.testing.assert_allclose(np.cov(u.T), cov, atol=0.03)
    assert np.all(np.abs(u) <= NoiseModel(cov, kind="uniform").bound() + 1e-12)


def test_fast_and_step_paths_agree(reference):
    theta, cost = reference
    noise = draw_noise(NoiseModel(np.eye(3), seed=1), 3000)
    init = initial_estimate(theta, cost, seed=1)
    fast = simulate(theta, cost, rce_policy(EpisodeSchedule(1.2), 0.1, init, cost, seed=2), noise)
    slow = simulate(theta, cost, rce_policy(EpisodeSchedule(1.2), 0.1, init, cost, seed=2), noise,
                    fast=False)
    # summation order differs between the paths and the early, poorly
    # conditioned regressions amplify the last-bit differences
    np.testing.assert_allclose(fast.states, slow.states, rtol=1e-5, atol=1e-5)
    np.testing.assert_allclose(fast.gains, slow.gains, rtol=1e-5, atol=1e-5)
    assert np.max(fast.reconstruction_residual(theta)) <= 1e-12


def test_fixed_gain_paths_agree(reference):
    theta, cost = reference
    noise = draw_noise(NoiseModel(np.eye(3), seed=1), 2000)
    fast = simulate(theta, cost, optimal_policy(theta, cost), noise)
    slow = simulate(theta, cost, optimal_policy(theta, cost), noise, fast=False)
    np.testing.assert_allclose(fast.states, slow.states, rtol=1e-12, atol=1e-12)


def test_generic_policy_path(reference):
    theta, cost = reference

    class Zero(Policy):
        def act(self, t, x):
            return np.zeros(3)

    traj = simulate(theta, cost, Zero(), draw_noise(NoiseModel(np.eye(3)), 10))
    assert traj.gains is None
    np.testing.assert_array_equal(traj.inputs, 0.0)


def test_divergence_is_flagged():
    theta = DynamicsParameter([[2.0]], [[0.0]])
    traj = simulate(theta, CostSpec([[1.0]], [[1.0]]), FixedGainPolicy([[0.0]]), np.ones((500, 1)))
    assert traj.diverged and traj.horizon < 500


def test_csv_round_trip(reference):
    theta, cost = reference
    noise = draw_noise(NoiseModel(np.eye(3), seed=5), 100)
    traj = simulate(theta, cost, optimal_policy(theta, cost), noise, x0=np.ones(3))
    text = traj.to_csv()
    back = Trajectory.from_csv(io.StringIO(text), theta)
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.inputs, traj.inputs)
    np.testing.assert_allclose(back.noises, traj.noises, atol=1e-12)
    assert back.to_csv() == text


def test_coupled_runs_share_noise(reference):
    theta, cost = reference
    noise = draw_noise(NoiseModel(np.eye(3), seed=2), 50)
    a, b = simulate_coupled(theta, cost, optimal_policy(theta, cost), optimal_policy(theta, cost), noise)
    np.testing.assert_array_equal(a.states, b.states)


def test_scalar_average_cost_matches_riccati():
    theta, cost = DynamicsParameter([[0.5]], [[1.0]]), CostSpec([[1.0]], [[1.0]])
    k = solve_riccati(theta, cost).k[0, 0]
    traj = simulate(theta, cost, optimal_policy(theta, cost),
                    draw_noise(NoiseModel(np.eye(1), seed=9), 100_000))
    assert traj.costs.mean() == pytest.approx(k, rel=0.03)


def test_reference_average_cost_matches_trace(reference):
    theta, cost = reference
    k = solve_riccati(theta, cost).k
    costs = [simulate(theta, cost, optimal_policy(theta, cost),
                      draw_noise(NoiseModel(np.eye(3), seed=s), 50_000)).costs.mean() for s in range(4)]
    assert np.mean(costs) == pytest.approx(np.trace(k), rel=0.03)
