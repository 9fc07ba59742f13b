import math

import numpy as np
import pytest

from compgrad import ivwh
from compgrad.envs import Quadratic, Sigmoid
from compgrad.errors import ConfigError, UnknownTaskError


def _policy(env, log_std=-0.5, squash=True, seed=0):
    rng = np.random.default_rng(seed)
    p = ivwh.GaussianPolicy(env.state_dim, env.action_dim, log_std, squash=squash)
    p.W = 0.3 * rng.standard_normal(p.W.shape)
    p.b = 0.1 * rng.standard_normal(p.b.shape)
    return p


@pytest.fixture(params=["linear", "point_mass", "bouncing"])
def env(request):
    return ivwh.make_trajectory_env(request.param)


class TestEnvs:
    def test_step_jacobians(self, env):
        assert ivwh.check_step_jacobians(env, n_points=50, seed=0) < 1e-5

    def test_bouncing_contact_jacobians(self):
        env = ivwh.BouncingPointMass(stiffness=1e3)
        assert ivwh.check_step_jacobians(env, n_points=50, seed=1, scale=0.05) < 1e-5

    def test_unknown(self):
        with pytest.raises(UnknownTaskError):
            ivwh.make_trajectory_env("ant")

    def test_bad_param(self):
        with pytest.raises(ConfigError):
            ivwh.make_trajectory_env("linear", mass=2.0)


class TestRollout:
    def test_deterministic_linear_matches_closed_form(self):
        env = ivwh.LinearEnv(horizon=12, s0=[0.5, -0.2])
        pol = _policy(env, log_std=-5.0)
        data = ivwh.rollout(env, pol, 3, noise=np.zeros((12, 3, 1)))
        states = env.closed_form_states(data.actions[:, 0, :])
        np.testing.assert_allclose(data.states[:, 0], states[:-1], atol=1e-9)
        np.testing.assert_allclose(data.final_states[0], states[-1], atol=1e-9)

    @pytest.mark.parametrize("H,L", [(10, 10), (10, 3), (12, 4), (7, 1)])
    def test_episode_starts(self, H, L):
        env = ivwh.LinearEnv(horizon=H, episode_length=L)
        data = ivwh.rollout(env, _policy(env), 4, seed=0)
        assert np.all(data.mask.sum(axis=0) == math.ceil(H / L))
        assert data.n_trajectories == 4 * math.ceil(H / L)

    def test_zero_action_return(self):
        env = ivwh.PointMassGoal(horizon=20)
        pol = ivwh.GaussianPolicy(4, 2)
        data = ivwh.rollout(env, pol, 2, noise=np.zeros((20, 2, 2)))
        assert data.rewards.sum(axis=0) == pytest.approx([env.zero_action_return()] * 2, rel=1e-12)

    def test_step_count(self, env):
        pol = _policy(env)
        data = ivwh.rollout(env, pol, 6, seed=1)
        assert data.sim_steps == 6 * env.horizon

    def test_nonfinite_state(self):
        env = ivwh.LinearEnv(horizon=5, M=[[1e300]], B=[[1.0]], s0=[1.0])
        with pytest.raises(Exception) as info:
            ivwh.rollout(env, _policy(env), 2, seed=0)
        assert "non-finite" in str(info.value)

    def test_needs_two_actors(self, env):
        with pytest.raises(ConfigError):
            ivwh.rollout(env, _policy(env), 1)


class TestAdvantages:
    def test_reward_to_go_resets(self):
        r = np.array([[1.0], [2.0], [3.0], [4.0]])
        mask = np.array([[True], [False], [True], [False]])
        np.testing.assert_array_equal(ivwh.reward_to_go(r, mask)[:, 0], [3, 2, 7, 4])

    def test_leave_one_out(self):
        r = np.array([[1.0, 2.0, 6.0]])
        adv = ivwh.advantages(r, np.ones_like(r, dtype=bool))
        np.testing.assert_allclose(adv[0], [1 - 4, 2 - 3.5, 6 - 1.5])


class TestPerStepGradients:
    def test_zero_advantages_zero_g0(self):
        env = ivwh.LinearEnv(horizon=6, q=0.0, rho=0.0)
        data = ivwh.rollout(env, _policy(env), 5, seed=0)
        tensor = ivwh.per_step_gradients(data, _policy(env))
        assert np.all(tensor.advantages == 0.0)
        assert np.all(tensor.g0 == 0.0)

    def test_one_step_reduces_to_estimators_g1(self):
        obj = Sigmoid(T=0.5)
        env = ivwh.ObjectiveEnv(obj)
        pol = ivwh.GaussianPolicy(1, 1, math.log(0.7), squash=False, b=[0.3])
        data = ivwh.rollout(env, pol, 200, seed=3)
        tensor = ivwh.per_step_gradients(data, pol)
        zeta = 0.3 + 0.7 * data.noises[0]
        _, grads = obj.value_and_grad_batch(zeta)
        np.testing.assert_allclose(tensor.g1[0, :, :1], grads, rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(tensor.g1[0, :, 1:], grads * 0.7 * data.noises[0], rtol=1e-10, atol=1e-14)

    def test_g0_g1_agree_on_linear_gaussian(self):
        env = ivwh.LinearEnv(horizon=8, s0=[1.0, 0.0])
        pol = _policy(env, log_std=-1.0, seed=2)
        data = ivwh.rollout(env, pol, 4096, seed=7)
        t = ivwh.per_step_gradients(data, pol, "matched")
        diff = t.g0 - t.g1
        z = np.abs(diff.mean(axis=1)) / (diff.std(axis=1, ddof=1) / math.sqrt(diff.shape[1]))
        assert z.max() < 3.5  # 16 comparisons
        assert np.median(z) < 1.5

    def test_as_written_scales_disagree(self):
        # the reason matched is the default
        env = ivwh.LinearEnv(horizon=8, s0=[1.0, 0.0])
        pol = _policy(env, log_std=-1.0, seed=2)
        data = ivwh.rollout(env, pol, 4096, seed=7)
        t = ivwh.per_step_gradients(data, pol, "as_written")
        diff = t.g0 - t.g1
        z = np.abs(diff.mean(axis=1)) / (diff.std(axis=1, ddof=1) / math.sqrt(diff.shape[1]))
        assert z.max() > 10

    def test_as_written_scales(self):
        env = ivwh.LinearEnv(horizon=6, episode_length=3)
        pol = _policy(env)
        data = ivwh.rollout(env, pol, 8, seed=0)
        m = ivwh.per_step_gradients(data, pol, "matched")
        w = ivwh.per_step_gradients(data, pol, "as_written")
        np.testing.assert_allclose(w.g1, m.g1 / data.n_trajectories, rtol=1e-12)
        assert m.scale == 1.0 / data.n_trajectories and w.scale == 1.0
        with pytest.raises(ConfigError):
            ivwh.per_step_gradients(data, pol, "other")


def _tensor(seed=0, n=16):
    env = ivwh.PointMassGoal(horizon=10)
    pol = _policy(env, seed=seed)
    data = ivwh.rollout(env, pol, n, seed=seed)
    return env, pol, data, ivwh.per_step_gradients(data, pol)


class TestFuse:
    def test_alpha_bounds(self):
        _, _, _, t = _tensor()
        _, alpha = ivwh.ivwh_fuse(t)
        assert alpha.shape == (10, 4)
        assert np.all((alpha >= 0) & (alpha <= 1))

    def test_constant_g1_gives_one(self):
        _, _, _, t = _tensor()
        t.g1[3, :, 1] = 0.25
        _, alpha = ivwh.ivwh_fuse(t)
        assert alpha[3, 1] == 1.0

    def test_identical_estimators(self):
        _, _, _, t = _tensor()
        t.g0 = t.g1.copy()
        fused, _ = ivwh.ivwh_fuse(t)
        np.testing.assert_allclose(fused, t.g1, rtol=1e-14, atol=1e-15)

    def test_swap_symmetry(self):
        _, _, _, t = _tensor()
        _, a = ivwh.ivwh_fuse(t)
        swapped = ivwh.StepGradTensor(t.g1, t.g0, t.advantages, t.mask)
        _, b = ivwh.ivwh_fuse(swapped)
        np.testing.assert_allclose(b, 1.0 - a, atol=1e-15)

    def test_actor_permutation(self):
        _, _, _, t = _tensor()
        perm = np.random.default_rng(0).permutation(t.g0.shape[1])
        permuted = ivwh.StepGradTensor(t.g0[:, perm], t.g1[:, perm], t.advantages[:, perm], t.mask[:, perm])
        np.testing.assert_allclose(ivwh.ivwh_fuse(permuted)[1], ivwh.ivwh_fuse(t)[1], rtol=1e-12)


class TestPush:
    def test_zero(self):
        env, pol, data, t = _tensor()
        g, norm = ivwh.push_to_parameters(np.zeros_like(t.g0), pol, data)
        assert norm == 0.0 and np.all(g == 0.0)

    @pytest.mark.parametrize("name", ["linear", "point_mass", "bouncing"])
    def test_alpha_one_is_backprop(self, name):
        env = ivwh.make_trajectory_env(name, episode_length=None)
        pol = _policy(env, seed=1)
        data = ivwh.rollout(env, pol, 12, seed=5)
        t = ivwh.per_step_gradients(data, pol)
        fused, _ = ivwh.ivwh_fuse(t, 1.0)
        g, _ = ivwh.push_to_parameters(fused, pol, data, t.scale)
        ref = ivwh.pathwise_parameter_gradient(data, pol)
        assert np.linalg.norm(g - ref) <= 1e-8 * np.linalg.norm(ref)

    @pytest.mark.parametrize("normalization", ["matched", "as_written"])
    def test_alpha_zero_is_score_function(self, normalization):
        env = ivwh.LinearEnv(horizon=9, episode_length=3)
        pol = _policy(env, seed=3)
        data = ivwh.rollout(env, pol, 10, seed=2)
        t = ivwh.per_step_gradients(data, pol, normalization)
        fused, _ = ivwh.ivwh_fuse(t, 0.0)
        g, _ = ivwh.push_to_parameters(fused, pol, data, t.scale)
        adv = t.g0[:, :, 0] / (-data.noises[:, :, 0] / np.exp(data.log_std[0]))
        ref = ivwh.score_parameter_gradient(data, pol, adv, t.scale)
        assert np.linalg.norm(g - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_clipping(self):
        env, pol, data, t = _tensor()
        fused, _ = ivwh.ivwh_fuse(t)
        g, norm = ivwh.push_to_parameters(fused, pol, data, 1.0, clip_norm=1e-3)
        assert norm > 1e-3
        assert np.linalg.norm(g) == pytest.approx(1e-3)

    def test_log_std_outside_bounds_gets_no_gradient(self):
        env = ivwh.LinearEnv(horizon=4)
        pol = ivwh.GaussianPolicy(2, 1, log_std_init=-7.0)
        data = ivwh.rollout(env, pol, 4, seed=0)
        t = ivwh.per_step_gradients(data, pol)
        g, _ = ivwh.push_to_parameters(ivwh.ivwh_fuse(t)[0], pol, data, t.scale)
        assert g[-1] == 0.0


class TestTrain:
    def test_lr_zero_leaves_parameters(self):
        env = ivwh.PointMassGoal(horizon=10)
        pol = _policy(env)
        before = pol.get_flat().copy()
        cfg = ivwh.TrainConfig(n_actors=8, iterations=5, lr=0.0)
        ivwh.train(env, pol, cfg)
        assert pol.get_flat().tobytes() == before.tobytes()

    @pytest.mark.parametrize("mode", ivwh.MODES)
    def test_records(self, mode):
        env = ivwh.BouncingPointMass(horizon=20)
        cfg = ivwh.TrainConfig(n_actors=8, iterations=4, lr=0.01, mode=mode)
        recs = ivwh.train(env, ivwh.make_policy(env, cfg), cfg)
        assert len(recs) == 4
        for r in recs:
            assert r.sim_steps == 8 * 20
            assert 0.0 <= r.alpha_mean <= 1.0
            assert r.status == "ok"
        if mode == "first":
            assert all(r.alpha_mean == 1.0 for r in recs)
        if mode == "zeroth":
            assert all(r.alpha_mean == 0.0 for r in recs)

    def test_deterministic(self):
        env = ivwh.PointMassGoal(horizon=10)
        cfg = ivwh.TrainConfig(n_actors=8, iterations=5, lr=0.05, seed=3)
        a = ivwh.train(env, ivwh.make_policy(env, cfg), cfg)
        b = ivwh.train(env, ivwh.make_policy(env, cfg), cfg)
        assert a == b

    @pytest.mark.parametrize("mode", ivwh.MODES)
    def test_point_mass_improves(self, mode):
        env = ivwh.PointMassGoal()
        cfg = ivwh.TrainConfig(n_actors=32, iterations=100, lr=0.05, mode=mode, seed=0)
        recs = ivwh.train(env, ivwh.make_policy(env, cfg), cfg)
        ret = np.array([r.return_mean for r in recs])
        smooth = ret.reshape(10, 10).mean(axis=1)
        assert np.all(np.diff(smooth) > 0)

    def test_divergence_recorded(self):
        env = ivwh.LinearEnv(horizon=5, M=[[1e300]], B=[[1.0]], s0=[1.0])
        cfg = ivwh.TrainConfig(n_actors=4, iterations=3)
        recs = ivwh.train(env, ivwh.make_policy(env, cfg), cfg)
        assert len(recs) == 1 and recs[0].status == "diverged"
        assert ivwh.final_return(recs) == -math.inf

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            ivwh.TrainConfig(mode="ppo")
        with pytest.raises(ConfigError):
            ivwh.TrainConfig(n_actors=1)

    def test_csv(self):
        import io

        env = ivwh.LinearEnv(horizon=3)
        cfg = ivwh.TrainConfig(n_actors=4, iterations=2)
        buf = io.StringIO()
        ivwh.write_train_csv(ivwh.train(env, ivwh.make_policy(env, cfg), cfg), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == ",".join(ivwh.TRAIN_FIELDS)
        assert len(lines) == 3

    def test_objective_env_quadratic(self):
        env = ivwh.ObjectiveEnv(Quadratic())
        pol = ivwh.GaussianPolicy(1, 1, 0.0, squash=False, b=[2.0])
        cfg = ivwh.TrainConfig(n_actors=64, iterations=60, lr=0.1, clip_norm=None)
        recs = ivwh.train(env, pol, cfg)
        assert abs(pol.b[0]) < 0.5
        assert recs[-1].return_mean > recs[0].return_mean
