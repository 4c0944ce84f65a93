import numpy as np
import pytest

from moc import objectives as obj
from moc.envs import Fishwood, FishwoodConfig, FruitTree
from moc.errors import ShapeError
from moc.numerics import MlpParams, init_mlp, log_softmax, mlp_forward
from moc.training import (
    PpoConfig,
    PreferencePolicy,
    TrainResult,
    evaluate,
    linear_ppo_train,
    moc_train,
    prepare_batch,
    rollout,
    scalarized_policy_loss,
)

SMALL = dict(hidden=(16, 16), total_steps=2_000, episodes_per_batch=4, minibatch_size=64)


def short_fishwood():
    return Fishwood(FishwoodConfig(horizon=20))


def prepared_batch(seed=0, n_episodes=6, cfg=None, perturb=0.3):
    """A rollout with advantages filled in, plus policy parameters that differ from the behaviour policy."""
    cfg = cfg or PpoConfig(hidden=(8,), episodes_per_batch=n_episodes)
    rng = np.random.default_rng(seed)
    prefs = obj.two_objective_prefs([0.2, 0.5, 0.8])
    policy = PreferencePolicy(init_mlp(3, 2, (8,), seed=seed, out_scale=1.0), 1, 2)
    value = init_mlp(3, 2, (8,), seed=seed + 1)
    pref_index = rng.integers(0, 3, size=n_episodes)
    batch = rollout(short_fishwood, policy, prefs[pref_index], rng)
    batch.pref_index = pref_index
    prepare_batch(batch, value, obj.RunningNorm(2), prefs, cfg)
    moved = MlpParams.from_arrays([a + perturb * rng.normal(size=a.shape) for a in policy.params.arrays()])
    return batch, moved, value, cfg


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(gamma=0.0)
    with pytest.raises(ValueError):
        PpoConfig(clip_eps=-0.1)
    with pytest.raises(ValueError):
        PpoConfig(vbar_source="batch")


def test_policy_conditioning_concatenates_preference():
    policy = PreferencePolicy(init_mlp(3, 2, (4,)), 1, 2)
    x = policy.inputs(np.array([[1.0], [0.0]]), np.array([0.3, 0.7]))
    np.testing.assert_array_equal(x, [[1.0, 0.3, 0.7], [0.0, 0.3, 0.7]])
    plain = PreferencePolicy(init_mlp(1, 2, (4,)), 1, 2, conditioned=False)
    np.testing.assert_array_equal(plain.inputs(np.array([[1.0]]), [0.3, 0.7]), [[1.0]])


def test_policy_save_load_round_trip(tmp_path):
    policy = PreferencePolicy(init_mlp(3, 2, (5, 4), seed=2), 1, 2)
    policy.save(tmp_path / "p.npz")
    back = PreferencePolicy.load(tmp_path / "p.npz")
    assert (back.state_dim, back.n_objectives, back.conditioned) == (1, 2, True)
    states = np.random.default_rng(0).integers(0, 2, size=(7, 1)).astype(float)
    np.testing.assert_array_equal(back.logits(states, [0.4, 0.6]), policy.logits(states, [0.4, 0.6]))


def test_rollout_shapes_and_invariants():
    batch, _, _, _ = prepared_batch()
    assert batch.rewards.shape == (6, 20, 2)
    assert batch.advantages.shape == (6, 20, 2)
    assert batch.rbar.shape == (6, 2)
    assert np.all(np.isfinite(batch.old_logp)) and np.all(batch.old_logp <= 0)
    assert batch.episode_returns.sum(axis=1).max() <= 20


def test_scalarized_loss_gradient_matches_finite_differences():
    batch, params, value, cfg = prepared_batch(seed=3)
    cfg = PpoConfig(hidden=(8,), ent_coef=0.01, kl_coef=0.1)
    rng = np.random.default_rng(1)
    c = rng.dirichlet([1, 1], size=batch.n_episodes)
    batch.violated[:] = True
    _, grads, _ = scalarized_policy_loss(batch, c, cfg, params, value)
    arrays = params.arrays()
    h = 1e-6
    for k, a in enumerate(arrays):
        for pos in list(np.ndindex(a.shape))[:12]:
            up = [b.copy() for b in arrays]
            dn = [b.copy() for b in arrays]
            up[k][pos] += h
            dn[k][pos] -= h
            f_up = scalarized_policy_loss(batch, c, cfg, MlpParams.from_arrays(up), value)[0]["policy_loss"]
            f_dn = scalarized_policy_loss(batch, c, cfg, MlpParams.from_arrays(dn), value)[0]["policy_loss"]
            assert grads[k][pos] == pytest.approx((f_up - f_dn) / (2 * h), rel=1e-4, abs=1e-8)


def test_value_gradient_matches_finite_differences():
    batch, params, value, cfg = prepared_batch(seed=4)
    c = np.tile([1.0, 0.0], (batch.n_episodes, 1))
    _, _, vgrads = scalarized_policy_loss(batch, c, cfg, params, value)
    arrays = value.arrays()
    h = 1e-6
    for k, a in enumerate(arrays):
        pos = (0,) * a.ndim
        up = [b.copy() for b in arrays]
        dn = [b.copy() for b in arrays]
        up[k][pos] += h
        dn[k][pos] -= h
        f = lambda arr: cfg.vf_coef * scalarized_policy_loss(batch, c, cfg, params, MlpParams.from_arrays(arr))[0]["value_loss"]  # noqa: E731
        assert vgrads[k][pos] == pytest.approx((f(up) - f(dn)) / (2 * h), rel=1e-4, abs=1e-8)


def test_satisfied_batch_matches_linear_scalarization():
    batch, params, value, cfg = prepared_batch(seed=5)
    batch.violated[:] = False
    c = np.tile([1.0, 0.0], (batch.n_episodes, 1))
    info, _, _ = scalarized_policy_loss(batch, c, cfg, params, value)
    logp = log_softmax(mlp_forward(params, batch.flat("inputs")))
    z = np.exp(logp[np.arange(len(logp)), batch.flat("actions")] - batch.flat("old_logp"))
    prefs = np.repeat(batch.prefs, batch.horizon, axis=0)
    adv = batch.flat("advantages")
    linear = np.mean(sum(prefs[:, j] * obj.clipped_surrogate(z, adv[:, j], cfg.clip_eps) for j in range(2)))
    assert abs(info["surrogate"] - linear) <= 1e-10


def test_one_hot_preference_reduces_to_single_objective_ppo():
    batch, params, value, cfg = prepared_batch(seed=6)
    batch.prefs = np.tile([1.0, 0.0], (batch.n_episodes, 1))
    batch.violated[:] = False
    c = np.tile([1.0, 0.0], (batch.n_episodes, 1))
    info, grads, _ = scalarized_policy_loss(batch, c, cfg, params, value)
    single = TrainBatchView(batch, objective=0)
    info1, grads1, _ = scalarized_policy_loss(single, c, cfg, params, value)
    assert info["surrogate"] == pytest.approx(info1["surrogate"], abs=1e-12)
    for a, b in zip(grads, grads1):
        np.testing.assert_allclose(a, b, atol=1e-12)


class TrainBatchView:
    """The batch with one objective's advantages kept and the rest dropped."""

    def __init__(self, batch, objective):
        self.__dict__.update(batch.__dict__)
        self.advantages = batch.advantages[..., [objective]]
        self.prefs = np.ones((batch.n_episodes, 1))
        self.rbar_used = batch.rbar_used[:, [objective]]
        self.n_episodes = batch.n_episodes
        self.horizon = batch.horizon

    def flat(self, name):
        a = getattr(self, name)
        return a.reshape((-1,) + a.shape[2:])


def test_missing_advantages_rejected():
    batch, params, value, cfg = prepared_batch()
    batch.advantages = None
    with pytest.raises(ValueError):
        scalarized_policy_loss(batch, np.ones((6, 2)), cfg, params, value)


@pytest.mark.parametrize("mode", ["moc", "no-control", "no-mo"])
def test_training_is_deterministic(mode):
    cfg = PpoConfig(**SMALL)
    prefs = obj.two_objective_prefs([0.1, 0.9])
    a = moc_train(short_fishwood, prefs, cfg, seed=7, mode=mode)
    b = moc_train(short_fishwood, prefs, cfg, seed=7, mode=mode)
    np.testing.assert_equal(a.log, b.log)  # NaN marks preferences not drawn in an iteration
    for x, y in zip(a.policy.params.arrays(), b.policy.params.arrays()):
        np.testing.assert_array_equal(x, y)
    assert a.env_steps == 2_000


def test_linear_ppo_is_deterministic_and_unconditioned():
    cfg = PpoConfig(**SMALL)
    a = linear_ppo_train(short_fishwood, [0.3, 0.7], cfg, seed=1)
    b = linear_ppo_train(short_fishwood, [0.3, 0.7], cfg, seed=1)
    np.testing.assert_equal(a.log, b.log)
    assert not a.policy.conditioned
    assert a.policy.params.in_dim == 1
    assert a.value_params.out_dim == 1


def test_training_log_columns(tmp_path):
    res = moc_train(short_fishwood, obj.two_objective_prefs([0.5]), PpoConfig(**SMALL), seed=0)
    assert isinstance(res, TrainResult)
    row = res.log[0]
    for key in ("iteration", "env_steps", "c1_mean", "c2_mean", "violation_rate", "raw_p0_o0", "norm_p0_o1"):
        assert key in row
    res.write_log(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert len(lines) == len(res.log) + 1


def test_training_rejects_mismatched_preferences():
    with pytest.raises(ShapeError):
        moc_train(short_fishwood, [[0.2, 0.3, 0.5]], PpoConfig(**SMALL))
    with pytest.raises(ValueError):
        moc_train(short_fishwood, [[0.5, 0.5]], PpoConfig(**SMALL), mode="bogus")


def test_evaluate_is_deterministic_and_shaped():
    policy = PreferencePolicy(init_mlp(3, 2, (8,), seed=0, out_scale=1.0), 1, 2)
    prefs = obj.two_objective_prefs([0.2, 0.8])
    a = evaluate(policy, short_fishwood, prefs, episodes=5, seed=3)
    b = evaluate(policy, short_fishwood, prefs, episodes=5, seed=3)
    np.testing.assert_array_equal(a.means, b.means)
    assert a.means.shape == (2, 2)
    assert np.all(a.means.sum(axis=1) <= 20)
    with pytest.raises(ValueError):
        evaluate(policy, short_fishwood, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        evaluate(policy, short_fishwood, prefs, episodes=0)


def test_fruit_tree_rollout_pays_one_leaf():
    policy = PreferencePolicy(init_mlp(7 + 6, 2, (8,), seed=0), 7, 6)
    prefs = np.full((3, 6), 1 / 6)
    batch = rollout(FruitTree, policy, prefs, np.random.default_rng(0))
    assert batch.rewards.shape == (3, 6, 6)
    assert np.all(batch.rewards[:, :-1] == 0)
    assert np.all(batch.rewards[:, -1].sum(axis=1) > 0)


@pytest.mark.slow
def test_single_wood_preference_learns_the_woods():
    cfg = PpoConfig(total_steps=100_000)
    res = moc_train(Fishwood, [[1.0, 0.0]], cfg, seed=0)
    sols = evaluate(res.policy, Fishwood, [[1.0, 0.0]], episodes=20, seed=11)
    assert sols.means[0, 0] >= 90
