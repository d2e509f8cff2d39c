import numpy as np
import pytest

from mtrpo.bounds import smoothness_beta
from mtrpo.errors import ConfigError
from mtrpo.mdp_core import Mdp, SoftmaxParams
from mtrpo.optimizer import (Mode, OptimConfig, Termination, exact_gradient, objective, reinforce_gradient,
                             run_exact, run_sampled, sample_trajectory)
from mtrpo.regularizers import DefaultPolicy, RegularizerSpec
from mtrpo.rng import Purpose, stream

NO_PENALTY = RegularizerSpec('none')


@pytest.fixture
def chain():
    """State 0 steps into absorbing state 1 under both actions."""
    transition = np.zeros((2, 2, 2))
    transition[:, :, 1] = 1.0
    reward = np.array([[1.0, 0.5], [0.0, 0.0]])
    return Mdp(transition, reward, 0.9, np.array([1.0, 0.0]), np.array([1.0, 0.0]))


class TestOptimConfig:

    @pytest.mark.parametrize('overrides', [
        {'eta': 0.0}, {'eta': -1.0}, {'batch_size': 0}, {'horizon_cutoff': 0},
        {'history_stride': 0}, {'max_env_steps': -1}, {'grad_tol': -0.5}, {'eta_reg': -0.1},
    ])
    def test_rejects_bad_settings(self, overrides):
        settings = {'eta': 0.1}
        settings.update(overrides)
        with pytest.raises(ConfigError):
            OptimConfig(**settings)

    def test_dict_form(self):
        config = OptimConfig(eta=0.1, mode='sampled', batch_size=4)
        assert config.mode is Mode.SAMPLED
        assert OptimConfig.from_dict(config.to_dict()) == config
        with pytest.raises(ConfigError):
            OptimConfig.from_dict({'eta': 0.1, 'momentum': 0.9})


class TestExactGradient:

    def test_bandit_gradient(self, bandit):
        params = SoftmaxParams.uniform(1, 2)
        np.testing.assert_allclose(exact_gradient(bandit, params, NO_PENALTY, None), [[0.25, -0.25]])
        assert objective(bandit, params, NO_PENALTY, None) == pytest.approx(0.5)

    @pytest.mark.parametrize('kind', ['none', 'entropy', 'log_barrier', 'fixed_default_kl', 'reverse_kl', 'distral'])
    def test_matches_finite_differences_of_objective(self, kind, mdp_factory):
        rng = np.random.default_rng(17)
        for seed in range(5):
            mdp = mdp_factory(seed, uniform_mu=False)
            shape = (mdp.n_states, mdp.n_actions)
            spec = RegularizerSpec(kind, lam=0.3)
            default = DefaultPolicy.fixed(rng.dirichlet(np.ones(shape[1]), size=shape[0]))
            theta = rng.normal(size=shape)
            numeric = np.zeros(shape)
            h = 1e-5
            for index in np.ndindex(shape):
                step = np.zeros(shape)
                step[index] = h
                numeric[index] = (objective(mdp, SoftmaxParams(theta + step), spec, default)
                                  - objective(mdp, SoftmaxParams(theta - step), spec, default)) / (2 * h)
            np.testing.assert_allclose(exact_gradient(mdp, SoftmaxParams(theta), spec, default), numeric,
                                       rtol=1e-5, atol=1e-6)


class TestRunExact:

    def test_objective_is_monotone_at_the_smoothness_step(self, mdp_factory):
        for seed in range(5):
            mdp = mdp_factory(seed)
            spec = RegularizerSpec('log_barrier', lam=0.2)
            eta = 1.0 / smoothness_beta(0.2, mdp.n_states, mdp.gamma)
            result = run_exact(mdp, spec, None, OptimConfig(eta=eta, max_updates=40),
                               SoftmaxParams.uniform(mdp.n_states, mdp.n_actions))
            objectives = [record.objective for record in result.history]
            assert all(later >= earlier - 1e-12 for earlier, later in zip(objectives, objectives[1:]))

    def test_history_records_init_and_each_update(self, small_mdp):
        result = run_exact(small_mdp, NO_PENALTY, None, OptimConfig(eta=0.5, max_updates=10),
                           SoftmaxParams.uniform(4, 3))
        assert [record.update_index for record in result.history] == list(range(11))
        assert result.terminated_by is Termination.UPDATE_BUDGET
        assert result.updates == 10
        assert result.env_steps == 0

    def test_stride_keeps_the_final_record(self, small_mdp):
        result = run_exact(small_mdp, NO_PENALTY, None, OptimConfig(eta=0.5, max_updates=10, history_stride=3),
                           SoftmaxParams.uniform(4, 3))
        assert [record.update_index for record in result.history] == [0, 3, 6, 9, 10]

    def test_grad_tol_stops_the_run(self, bandit):
        result = run_exact(bandit, NO_PENALTY, None, OptimConfig(eta=1.0, max_updates=10_000, grad_tol=1e-3),
                           SoftmaxParams.uniform(1, 2))
        assert result.terminated_by is Termination.GRAD_TOL
        assert result.history[-1].grad_inf_norm <= 1e-3
        assert result.updates < 10_000
        assert result.final_params.policy()[0, 0] > 0.99

    def test_learned_default_follows_the_learner(self, small_mdp):
        default = DefaultPolicy.parametric(SoftmaxParams.uniform(4, 3))
        spec = RegularizerSpec('reverse_kl', lam=0.1)
        result = run_exact(small_mdp, spec, default, OptimConfig(eta=1.0, max_updates=200, eta_reg=1.0),
                           SoftmaxParams.uniform(4, 3))
        learner = result.final_params.policy()
        start = np.abs(learner - default.probs()).max()
        end = np.abs(learner - result.final_default.probs()).max()
        assert end < start

    def test_delay_equal_to_the_update_budget_never_distills(self, small_mdp):
        default = DefaultPolicy.parametric(SoftmaxParams.uniform(4, 3))
        spec = RegularizerSpec('reverse_kl', lam=0.1, distill_delay=10)
        result = run_exact(small_mdp, spec, default, OptimConfig(eta=1.0, max_updates=10, eta_reg=1.0),
                           SoftmaxParams.uniform(4, 3))
        assert result.final_default is default
        moved = run_exact(small_mdp, RegularizerSpec('reverse_kl', lam=0.1, distill_delay=9), default,
                          OptimConfig(eta=1.0, max_updates=10, eta_reg=1.0), SoftmaxParams.uniform(4, 3))
        assert not np.array_equal(moved.final_default.params.theta, default.params.theta)


class TestSampling:

    def test_trajectory_stops_after_entering_an_absorbing_state(self, chain, rng):
        trajectory = sample_trajectory(chain, SoftmaxParams.uniform(2, 2), rng, horizon_cutoff=50)
        assert len(trajectory) == 1
        assert trajectory[0][0] == 0

    def test_trajectory_respects_the_horizon(self, small_mdp, rng):
        trajectory = sample_trajectory(small_mdp, SoftmaxParams.uniform(4, 3), rng, horizon_cutoff=7)
        assert len(trajectory) == 7

    def test_undiscounted_tail_is_not_sampled(self, bandit, rng):
        for _ in range(20):
            assert len(sample_trajectory(bandit, SoftmaxParams.uniform(1, 2), rng, horizon_cutoff=200)) == 1

    @pytest.mark.slow
    def test_reinforce_is_unbiased_on_the_bandit(self, bandit):
        rng = stream(3, 0, Purpose.TRAJECTORY)
        params = SoftmaxParams.uniform(1, 2)
        batch = [sample_trajectory(bandit, params, rng, horizon_cutoff=1) for _ in range(20_000)]
        estimate = reinforce_gradient(batch, params, NO_PENALTY, None, bandit)
        np.testing.assert_allclose(estimate, [[0.25, -0.25]], atol=0.01)

    def test_reinforce_needs_a_trajectory(self, bandit):
        with pytest.raises(ValueError):
            reinforce_gradient([], SoftmaxParams.uniform(1, 2), NO_PENALTY, None, bandit)


class TestRunSampled:

    def config(self, **overrides):
        settings = {'eta': 0.1, 'max_env_steps': 60, 'horizon_cutoff': 5, 'mode': Mode.SAMPLED}
        settings.update(overrides)
        return OptimConfig(**settings)

    def test_stops_when_the_step_budget_is_spent(self, small_mdp):
        result = run_sampled(small_mdp, NO_PENALTY, None, self.config(), SoftmaxParams.uniform(4, 3),
                             stream(0, 0, Purpose.TRAJECTORY))
        assert result.terminated_by is Termination.STEP_BUDGET
        assert 60 <= result.env_steps < 65
        assert result.updates == 12
        assert [record.update_index for record in result.history] == list(range(1, 13))
        assert result.history[-1].env_steps == result.env_steps

    def test_update_budget(self, small_mdp):
        result = run_sampled(small_mdp, NO_PENALTY, None, self.config(max_env_steps=10_000, max_updates=4),
                             SoftmaxParams.uniform(4, 3), stream(0, 0, Purpose.TRAJECTORY))
        assert result.terminated_by is Termination.UPDATE_BUDGET
        assert result.updates == 4

    def test_same_stream_same_run(self, small_mdp):
        runs = [run_sampled(small_mdp, RegularizerSpec('entropy', lam=0.1), None, self.config(),
                            SoftmaxParams.uniform(4, 3), stream(5, 1, Purpose.TRAJECTORY)) for _ in range(2)]
        assert runs[0].history == runs[1].history
        np.testing.assert_array_equal(runs[0].final_params.theta, runs[1].final_params.theta)

    def test_delay_equal_to_the_step_budget_never_distills(self, small_mdp):
        default = DefaultPolicy.parametric(SoftmaxParams.uniform(4, 3))
        spec = RegularizerSpec('reverse_kl', lam=0.1, distill_delay=60)
        result = run_sampled(small_mdp, spec, default, self.config(eta_reg=1.0), SoftmaxParams.uniform(4, 3),
                             stream(0, 0, Purpose.TRAJECTORY))
        assert result.env_steps >= 60
        assert result.final_default is default

    def test_zero_delay_distills_from_the_first_batch(self, small_mdp):
        default = DefaultPolicy.parametric(SoftmaxParams.uniform(4, 3))
        spec = RegularizerSpec('reverse_kl', lam=0.1, distill_delay=0)
        result = run_sampled(small_mdp, spec, default, self.config(max_env_steps=1, eta_reg=1.0),
                             SoftmaxParams.uniform(4, 3), stream(0, 0, Purpose.TRAJECTORY))
        assert result.updates == 1
        assert not np.array_equal(result.final_default.params.theta, default.params.theta)

    @pytest.mark.slow
    def test_bandit_learns_the_rewarded_arm(self, bandit):
        config = OptimConfig(eta=0.02, max_env_steps=5000, mode=Mode.SAMPLED)
        finals = [run_sampled(bandit, NO_PENALTY, None, config, SoftmaxParams.uniform(1, 2),
                              stream(seed, 0, Purpose.TRAJECTORY)).final_params.policy()[0, 0]
                  for seed in range(20)]
        assert np.mean(finals) > 0.9

    def test_zero_budget_leaves_init(self, small_mdp):
        init = SoftmaxParams.uniform(4, 3)
        result = run_sampled(small_mdp, NO_PENALTY, None, self.config(max_env_steps=0), init)
        assert result.history == ()
        assert result.final_params is init
