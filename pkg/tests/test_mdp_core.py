import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mtrpo.errors import ShapeError, ValidationError
from mtrpo.mdp_core import (DeterministicPolicy, Mdp, SoftmaxParams, alpha_profile, corrupt_deterministic,
                            evaluate, greedy_actions, max_corruption, mismatch_coefficient,
                            performance_difference, policy_probs, solve_optimal, tv_distance, visitation)


def random_policy(rng, n_states, n_actions):
    return rng.dirichlet(np.ones(n_actions), size=n_states)


class TestMdp:

    def test_rejects_rows_that_do_not_sum_to_one(self, small_mdp):
        transition = np.array(small_mdp.transition)
        transition[0, 0, 0] += 1e-6
        with pytest.raises(ValidationError):
            Mdp(transition, small_mdp.reward, 0.9, small_mdp.rho, small_mdp.mu)

    def test_rejects_reward_outside_unit_interval(self, small_mdp):
        reward = np.array(small_mdp.reward)
        reward[1, 1] = 1.5
        with pytest.raises(ValidationError):
            Mdp(small_mdp.transition, reward, 0.9, small_mdp.rho, small_mdp.mu)

    @pytest.mark.parametrize('gamma', [-0.1, 1.0, 1.5])
    def test_rejects_gamma(self, small_mdp, gamma):
        with pytest.raises(ValidationError):
            Mdp(small_mdp.transition, small_mdp.reward, gamma, small_mdp.rho, small_mdp.mu)

    def test_rejects_mismatched_shapes(self, small_mdp):
        with pytest.raises(ShapeError):
            Mdp(small_mdp.transition, small_mdp.reward[:, :2], 0.9, small_mdp.rho, small_mdp.mu)
        with pytest.raises(ShapeError):
            Mdp(small_mdp.transition, small_mdp.reward, 0.9, small_mdp.rho[:3], small_mdp.mu)

    def test_arrays_are_read_only(self, small_mdp):
        with pytest.raises(ValueError):
            small_mdp.reward[0, 0] = 0.5

    def test_json_document_uses_external_field_names(self, small_mdp):
        document = small_mdp.to_dict()
        assert set(document) == {'n_states', 'n_actions', 'gamma', 'rho', 'mu', 'transition', 'reward'}
        restored = Mdp.from_json(small_mdp.to_json())
        np.testing.assert_array_equal(restored.transition, small_mdp.transition)
        assert restored.gamma == small_mdp.gamma

    def test_from_dict_reports_missing_fields(self, small_mdp):
        document = small_mdp.to_dict()
        del document['mu']
        with pytest.raises(ValidationError, match='mu'):
            Mdp.from_dict(document)


class TestSoftmax:

    @settings(deadline=None, max_examples=50)
    @given(theta=arrays(np.float64, (3, 4), elements=st.floats(-5, 5)),
           shift=arrays(np.float64, (3, 1), elements=st.floats(-50, 50)))
    def test_row_shift_leaves_policy_unchanged(self, theta, shift):
        policy = SoftmaxParams(theta).policy()
        shifted = SoftmaxParams(theta + shift).policy()
        np.testing.assert_allclose(policy, shifted, atol=1e-12)
        assert np.all(policy > 0)
        np.testing.assert_allclose(policy.sum(axis=1), 1.0, atol=1e-12)

    def test_policy_probs_matches_table(self, rng):
        params = SoftmaxParams(rng.normal(size=(3, 2)))
        np.testing.assert_allclose(policy_probs(params, 1), params.policy()[1])

    def test_from_policy_round_trips_positive_policy(self, rng):
        policy = random_policy(rng, 4, 3)
        np.testing.assert_allclose(SoftmaxParams.from_policy(policy).policy(), policy, atol=1e-12)


class TestEvaluation:

    def test_advantage_invariants(self, mdp_factory):
        rng = np.random.default_rng(3)
        for seed in range(20):
            mdp = mdp_factory(seed)
            policy = random_policy(rng, mdp.n_states, mdp.n_actions)
            evaluation = evaluate(mdp, policy)
            np.testing.assert_array_equal(evaluation.adv, evaluation.q - evaluation.v[:, None])
            np.testing.assert_allclose(np.sum(policy * evaluation.adv, axis=1), 0.0, atol=1e-10)
            assert np.all(evaluation.v >= -1e-12)
            assert np.all(evaluation.v <= 1.0 / (1.0 - mdp.gamma) + 1e-12)

    def test_bandit_values(self, bandit):
        evaluation = evaluate(bandit, np.array([[0.5, 0.5]]))
        np.testing.assert_allclose(evaluation.v, [0.5])
        np.testing.assert_allclose(evaluation.adv, [[0.5, -0.5]])

    def test_rejects_non_stochastic_policy(self, small_mdp):
        with pytest.raises(ValidationError):
            evaluate(small_mdp, np.full((4, 3), 0.5))


class TestVisitation:

    def test_matches_truncated_series(self, small_mdp, rng):
        policy = random_policy(rng, small_mdp.n_states, small_mdp.n_actions)
        p_pi = np.einsum('sa,sat->st', policy, small_mdp.transition)
        occupancy = np.zeros(small_mdp.n_states)
        marginal = np.array(small_mdp.rho)
        for t in range(2000):
            occupancy += (1 - small_mdp.gamma) * small_mdp.gamma ** t * marginal
            marginal = marginal @ p_pi
        d = visitation(small_mdp, policy, small_mdp.rho).d
        np.testing.assert_allclose(d, occupancy, atol=1e-10)
        assert abs(d.sum() - 1.0) <= 1e-10

    def test_gamma_zero_returns_start(self, bandit):
        np.testing.assert_allclose(visitation(bandit, np.array([[0.3, 0.7]]), bandit.rho).d, [1.0])


class TestPerformanceDifference:

    def test_identity_on_random_policy_pairs(self, mdp_factory):
        rng = np.random.default_rng(11)
        for seed in range(100):
            mdp = mdp_factory(seed)
            new = random_policy(rng, mdp.n_states, mdp.n_actions)
            old = random_policy(rng, mdp.n_states, mdp.n_actions)
            lhs, rhs = performance_difference(mdp, new, old, mdp.rho)
            assert abs(lhs - rhs) <= 1e-8


class TestSolveOptimal:

    def test_optimal_values_dominate_random_policies(self, mdp_factory):
        rng = np.random.default_rng(5)
        for seed in range(20):
            mdp = mdp_factory(seed)
            policy, evaluation = solve_optimal(mdp)
            np.testing.assert_allclose(evaluation.q.max(axis=1), evaluation.v, atol=1e-8)
            for _ in range(5):
                other = evaluate(mdp, random_policy(rng, mdp.n_states, mdp.n_actions))
                assert np.all(other.v <= evaluation.v + 1e-8)

    def test_ties_break_to_lowest_action(self):
        transition = np.ones((1, 3, 1))
        mdp = Mdp(transition, np.array([[0.5, 0.5, 0.2]]), 0.5, np.array([1.0]), np.array([1.0]))
        policy, _ = solve_optimal(mdp)
        assert policy.action.tolist() == [0]

    def test_greedy_actions_tolerance(self):
        values = np.array([[1.0, 1.0 + 1e-12, 0.0], [0.0, 2.0, 2.0]])
        assert greedy_actions(values, 1e-9).tolist() == [0, 1]
        assert greedy_actions(values).tolist() == [1, 1]


class TestDistances:

    def test_tv_distance(self):
        assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
        assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
        np.testing.assert_allclose(tv_distance(np.eye(2), np.full((2, 2), 0.5)), [0.5, 0.5])

    def test_tv_distance_shape_mismatch(self):
        with pytest.raises(ShapeError):
            tv_distance([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_mismatch_requires_positive_mu(self):
        with pytest.raises(ValidationError):
            mismatch_coefficient(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
        assert mismatch_coefficient(np.array([0.75, 0.25]), np.array([0.5, 0.5])) == 1.5

    def test_alpha_profile(self):
        pi_star = DeterministicPolicy(np.array([0, 1]), 2)
        alpha = alpha_profile(pi_star, np.array([[0.9, 0.1], [0.5, 0.5]]))
        np.testing.assert_allclose(alpha.alpha, [0.1, 0.5])

    @settings(deadline=None, max_examples=50)
    @given(fraction=st.floats(0.0, 1.0), n_actions=st.integers(2, 5), seed=st.integers(0, 2 ** 16))
    def test_corruption_sits_at_exact_tv_radius(self, fraction, n_actions, seed):
        rng = np.random.default_rng(seed)
        policy = DeterministicPolicy(rng.integers(0, n_actions, size=6), n_actions)
        zeta = fraction * max_corruption(n_actions)
        table = corrupt_deterministic(policy, zeta)
        np.testing.assert_allclose(table.sum(axis=1), 1.0)
        np.testing.assert_allclose(tv_distance(table, policy.as_table()), zeta, atol=1e-12)
        off_optimal = np.where(policy.as_table() == 1.0, np.nan, table)
        np.testing.assert_allclose(np.nanmax(off_optimal, axis=1), np.nanmin(off_optimal, axis=1), atol=1e-12)

    def test_full_corruption_is_uniform(self):
        policy = DeterministicPolicy(np.array([0, 2, 1]), 4)
        assert max_corruption(4) == 0.75
        np.testing.assert_allclose(corrupt_deterministic(policy, 0.75), 0.25)
        np.testing.assert_array_equal(corrupt_deterministic(policy, 0.0), policy.as_table())

    @pytest.mark.parametrize('zeta, n_actions', [(0.6, 2), (0.8, 4), (-0.1, 3), (0.1, 1)])
    def test_corruption_beyond_the_uniform_policy_is_rejected(self, zeta, n_actions):
        policy = DeterministicPolicy(np.zeros(2, dtype=int), n_actions)
        with pytest.raises(ValidationError):
            corrupt_deterministic(policy, zeta)
