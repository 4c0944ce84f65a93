"""Preference-conditioned PPO with per-episode min-norm weights (MOC), and baselines.

One generic loop serves four modes:

``moc``
    weights ``(c1, c2)`` per episode from the closed-form min-norm solve.
``no-control``
    ``(c1, c2) = (1, 0)``: preference-weighted PPO without the alignment term.
``no-mo``
    ``(c1, c2) = (0, 1)``: only the alignment hinge.
``linear``
    an unconditioned policy trained by single-objective PPO on ``w . R``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import objectives as obj
from .errors import ShapeError, TrainingDivergence
from .metrics import SolutionSet
from .numerics import (
    AdamState,
    MlpParams,
    adam_step,
    backward,
    categorical_sample,
    forward_with_cache,
    init_mlp,
    log_softmax,
    mlp_forward,
)

log = logging.getLogger(__name__)

MODES = ("moc", "no-control", "no-mo", "linear")


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 3
    lr: float = 1e-4
    episodes_per_batch: int = 16
    minibatch_size: int = 512
    kl_coef: float = 0.0
    vf_coef: float = 0.5
    ent_coef: float = 0.001
    phi: float = 0.05
    total_steps: int = 200_000
    hidden: tuple = (256, 256, 256)
    normalize_advantages: bool = True
    # "episode": per-episode normalised return inside vbar; "group": the preference-group mean.
    vbar_source: str = "episode"
    exploration_eps: float = 0.0
    policy_init_scale: float = 0.01

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.phi < 0:
            raise ValueError("phi must be non-negative")
        if self.epochs < 1 or self.episodes_per_batch < 1 or self.minibatch_size < 1:
            raise ValueError("epochs, episodes_per_batch and minibatch_size must be >= 1")
        if self.vbar_source not in ("episode", "group"):
            raise ValueError("vbar_source must be 'episode' or 'group'")
        if not 0 <= self.exploration_eps < 1:
            raise ValueError("exploration_eps must lie in [0, 1)")


@dataclass
class PreferencePolicy:
    """Categorical policy over ``state`` (and ``p`` when ``conditioned``)."""

    params: MlpParams
    state_dim: int
    n_objectives: int
    conditioned: bool = True

    def inputs(self, states, prefs) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if not self.conditioned:
            return states
        prefs = np.broadcast_to(np.asarray(prefs, dtype=float), states.shape[:-1] + (self.n_objectives,))
        return np.concatenate([states, prefs], axis=-1)

    def logits(self, states, prefs) -> np.ndarray:
        return mlp_forward(self.params, self.inputs(states, prefs))

    def action_probs(self, states, prefs) -> np.ndarray:
        return np.exp(log_softmax(self.logits(states, prefs)))

    def save(self, path):
        arrays = {f"a{i}": a for i, a in enumerate(self.params.arrays())}
        meta = np.array([self.state_dim, self.n_objectives, int(self.conditioned)])
        with open(path, "wb") as fh:
            np.savez(fh, meta=meta, **arrays)

    @classmethod
    def load(cls, path) -> "PreferencePolicy":
        with np.load(path) as data:
            state_dim, n_obj, conditioned = (int(v) for v in data["meta"])
            arrays = [data[f"a{i}"] for i in range(len(data.files) - 1)]
        return cls(MlpParams.from_arrays(arrays), state_dim, n_obj, bool(conditioned))


@dataclass
class TrajectoryBatch:
    """Rollout data; per-step arrays are ``(E, T, ...)``, per-episode arrays ``(E, ...)``."""

    inputs: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    old_logits: np.ndarray
    rewards: np.ndarray  # raw vector rewards (E, T, N)
    prefs: np.ndarray
    pref_index: np.ndarray
    values: np.ndarray = None
    advantages: np.ndarray = None
    returns: np.ndarray = None
    episode_returns: np.ndarray = None  # raw (E, N)
    rbar: np.ndarray = None  # normalised episodic returns (E, N)
    rbar_used: np.ndarray = None  # what enters vbar: rbar or its preference-group mean
    violated: np.ndarray = None

    @property
    def n_episodes(self) -> int:
        return self.actions.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    def flat(self, name) -> np.ndarray:
        a = getattr(self, name)
        return a.reshape((-1,) + a.shape[2:])


@dataclass
class TrainResult:
    policy: PreferencePolicy
    value_params: MlpParams
    log: list = field(default_factory=list)
    prefs: np.ndarray = None
    env_steps: int = 0

    def write_log(self, path):
        write_log_csv(self.log, path)


def write_log_csv(rows, path):
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    fields = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in fields})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return v


def rollout(env_fn, policy: PreferencePolicy, prefs, rng, env_seeds=None, exploration_eps=0.0, greedy=False):
    """Run ``len(prefs)`` episodes in lockstep; every episode lasts the environment's horizon.

    Returns a :class:`TrajectoryBatch` without advantages filled in.
    """
    prefs = np.atleast_2d(np.asarray(prefs, dtype=float))
    n_ep = prefs.shape[0]
    envs = [env_fn() for _ in range(n_ep)]
    if env_seeds is None:
        env_seeds = rng.integers(0, 2**63 - 1, size=n_ep)
    states = np.stack([env.reset(seed=s).state for env, s in zip(envs, env_seeds)])
    horizon = envs[0].horizon
    n_obj = envs[0].n_objectives
    n_act = envs[0].n_actions
    inputs, actions, logps, logits_all, rewards = [], [], [], [], []
    for _ in range(horizon):
        x = policy.inputs(states, prefs)
        logits = mlp_forward(policy.params, x)
        logp_all = log_softmax(logits)
        if greedy:
            a = logits.argmax(axis=-1)
        else:
            a = categorical_sample(logits, rng)
        if exploration_eps > 0:
            explore = rng.random(n_ep) < exploration_eps
            a = np.where(explore, rng.integers(0, n_act, size=n_ep), a)
            # behaviour log-prob of the epsilon mixture
            mix = np.log((1 - exploration_eps) * np.exp(logp_all) + exploration_eps / n_act)
            logp = mix[np.arange(n_ep), a]
        else:
            logp = logp_all[np.arange(n_ep), a]
        obs = [env.step(int(ai)) for env, ai in zip(envs, a)]
        inputs.append(x)
        actions.append(a)
        logps.append(logp)
        logits_all.append(logits)
        rewards.append(np.stack([o.reward for o in obs]))
        states = np.stack([o.state for o in obs])
    if not all(o.done for o in obs):
        raise RuntimeError("episodes did not terminate at the environment horizon")
    swap = lambda seq: np.stack(seq, axis=1)  # noqa: E731  (T lists of E rows) -> (E, T, ...)
    rewards = swap(rewards)
    if rewards.shape[-1] != n_obj:
        raise ShapeError("environment returned rewards of the wrong length")
    return TrajectoryBatch(
        inputs=swap(inputs),
        actions=swap(actions).astype(int),
        old_logp=swap(logps),
        old_logits=swap(logits_all),
        rewards=rewards,
        prefs=prefs,
        pref_index=np.zeros(n_ep, dtype=int),
    )


def evaluate(policy: PreferencePolicy, env_fn, prefs, episodes=20, seed=0, greedy=False) -> SolutionSet:
    """Mean and std of raw episodic returns per preference; no parameter updates.

    Every preference is evaluated on the same seeded episodes (same environment
    draws, same action uniforms), so differences between preferences come from
    the policy rather than from sampling noise.
    """
    prefs = np.atleast_2d(np.asarray(prefs, dtype=float))
    if prefs.shape[0] == 0:
        raise ValueError("no preferences to evaluate")
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    means, stds = [], []
    for p in prefs:
        rng = np.random.default_rng([seed, 1])
        env_seeds = [[seed, 2, k] for k in range(episodes)]
        batch = rollout(env_fn, policy, np.tile(p, (episodes, 1)), rng, env_seeds=env_seeds, greedy=greedy)
        ret = batch.rewards.sum(axis=1)
        means.append(ret.mean(axis=0))
        stds.append(ret.std(axis=0))
    return SolutionSet(prefs.copy(), np.array(means), np.array(stds), np.full(len(prefs), episodes))


def _iteration_weights(mode, batch, z, eps):
    """``(E, 2)`` array of per-episode ``(c1, c2)``."""
    n_ep = batch.n_episodes
    if mode in ("no-control", "linear"):
        return np.tile([1.0, 0.0], (n_ep, 1))
    if mode == "no-mo":
        return np.tile([0.0, 1.0], (n_ep, 1))
    c = np.empty((n_ep, 2))
    for e in range(n_ep):
        c[e] = tuple(obj.moc_weights(
            batch.advantages[e], z[e], batch.prefs[e], batch.rbar_used[e], batch.violated[e], eps,
        ))
    return c


def scalarized_policy_loss(batch: TrajectoryBatch, weights, cfg: PpoConfig, policy_params, value_params, idx=None):
    """Loss and gradients for samples ``idx`` (default: all) of a prepared batch.

    ``weights`` holds per-episode ``(c1, c2)``. The policy term is
    ``-mean_s sum_j w_j(e_s) min(z A_j, clip(z) A_j)`` with
    ``w_j = c1 p_j - c2 [violated] (rbar_j - p_j)``; value, entropy and KL
    terms are added. Returns ``(info, policy_grads, value_grads)``.
    """
    if batch.advantages is None:
        raise ValueError("batch has no advantages; run prepare_batch first")
    weights = np.asarray(weights, dtype=float)
    w_ep = obj.effective_weights(batch.prefs, batch.rbar_used, batch.violated, weights[:, 0], weights[:, 1])
    n_ep, horizon = batch.n_episodes, batch.horizon
    if idx is None:
        idx = np.arange(n_ep * horizon)
    ep_of = idx // horizon
    x = batch.flat("inputs")[idx]
    actions = batch.flat("actions")[idx]
    old_logp = batch.flat("old_logp")[idx]
    old_logp_all = log_softmax(batch.flat("old_logits")[idx])
    adv = batch.flat("advantages")[idx]
    ret = batch.flat("returns")[idx]
    w = w_ep[ep_of]
    s = len(idx)
    rows = np.arange(s)

    logits, pcache = forward_with_cache(policy_params, x)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    logp = logp_all[rows, actions]
    z = np.exp(logp - old_logp)
    per_obj = obj.clipped_surrogate(z[:, None], adv, cfg.clip_eps)
    surrogate = float(np.mean(np.sum(w * per_obj, axis=1)))
    gated = obj.clip_indicator(adv, z[:, None], cfg.clip_eps)
    d_logp = z * np.sum(w * gated, axis=1)
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    entropy_i = -np.sum(probs * logp_all, axis=1)
    log_ratio = logp_all - old_logp_all
    kl_i = np.sum(probs * log_ratio, axis=1)
    g_logits = -d_logp[:, None] * (onehot - probs)
    g_logits -= cfg.ent_coef * (-probs * (logp_all + entropy_i[:, None]))
    if cfg.kl_coef:
        g_logits += cfg.kl_coef * probs * (log_ratio - kl_i[:, None])
    g_logits /= s
    policy_grads = backward(policy_params, pcache, g_logits)

    values, vcache = forward_with_cache(value_params, x)
    err = values - ret
    value_loss = float(np.mean(np.sum(err**2, axis=1)))
    value_grads = backward(value_params, vcache, 2.0 * cfg.vf_coef * err / s)

    entropy = float(entropy_i.mean())
    kl = float(kl_i.mean())
    info = {
        "surrogate": surrogate,
        "policy_loss": -surrogate - cfg.ent_coef * entropy + cfg.kl_coef * kl,
        "value_loss": value_loss,
        "entropy": entropy,
        "kl": kl,
    }
    return info, policy_grads, value_grads


def prepare_batch(batch: TrajectoryBatch, value_params, norm: obj.RunningNorm, prefs, cfg: PpoConfig, scalarize=None):
    """Fill values, GAE advantages, return targets, normalised returns and violation flags.

    With ``scalarize=w`` the reward is collapsed to ``w . R`` (a single objective).
    """
    batch.episode_returns = batch.rewards.sum(axis=1)
    batch.rbar = obj.normalize_reward(norm, batch.episode_returns)
    rewards = batch.rewards if scalarize is None else (batch.rewards @ scalarize)[..., None]
    n_ep, horizon, n_v = rewards.shape
    values = mlp_forward(value_params, batch.flat("inputs")).reshape(n_ep, horizon, n_v)
    adv = obj.gae_advantages(
        rewards.transpose(1, 0, 2), values.transpose(1, 0, 2), 0.0, cfg.gamma, cfg.lam
    ).transpose(1, 0, 2)
    batch.values = values
    batch.returns = adv + values
    if cfg.normalize_advantages:
        flat = adv.reshape(-1, n_v)
        adv = (adv - flat.mean(axis=0)) / (flat.std(axis=0) + 1e-8)
    batch.advantages = adv
    if scalarize is None:
        batch.violated = obj.group_violations(batch.rbar, batch.pref_index, prefs, cfg.phi)
        batch.rbar_used = batch.rbar if cfg.vbar_source == "episode" else obj.group_means(batch.rbar, batch.pref_index)
    else:
        batch.prefs = np.ones((n_ep, 1))
        batch.violated = np.zeros(n_ep, dtype=bool)
        batch.rbar_used = np.ones((n_ep, 1))
    return batch


def _train(env_fn, prefs, cfg: PpoConfig, seed, mode, scalarize=None) -> TrainResult:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    env = env_fn()
    prefs = obj.preference_set(prefs)
    if prefs.shape[1] != env.n_objectives:
        raise ShapeError(f"preferences have {prefs.shape[1]} entries, environment has {env.n_objectives} objectives")
    rng = np.random.default_rng(seed)
    conditioned = mode != "linear"
    in_dim = env.state_dim + (env.n_objectives if conditioned else 0)
    n_values = 1 if scalarize is not None else env.n_objectives
    pol_params = init_mlp(in_dim, env.n_actions, cfg.hidden, seed=rng.integers(2**32), out_scale=cfg.policy_init_scale)
    val_params = init_mlp(in_dim, n_values, cfg.hidden, seed=rng.integers(2**32))
    policy = PreferencePolicy(pol_params, env.state_dim, env.n_objectives, conditioned)
    pol_opt = AdamState.zeros_like(pol_params, lr=cfg.lr)
    val_opt = AdamState.zeros_like(val_params, lr=cfg.lr)
    norm = obj.RunningNorm(env.n_objectives)

    steps_per_iter = cfg.episodes_per_batch * env.horizon
    n_iters = max(1, cfg.total_steps // steps_per_iter)
    history = []
    steps = 0
    for it in range(n_iters):
        pref_index = rng.integers(0, len(prefs), size=cfg.episodes_per_batch)
        batch = rollout(env_fn, policy, prefs[pref_index], rng, exploration_eps=cfg.exploration_eps)
        batch.pref_index = pref_index
        steps += batch.n_episodes * batch.horizon
        prepare_batch(batch, val_params, norm, prefs, cfg, scalarize)

        n_samples = batch.n_episodes * batch.horizon
        infos = []
        c_epochs = []
        for _ in range(cfg.epochs):
            logits = mlp_forward(policy.params, batch.flat("inputs"))
            logp = log_softmax(logits)[np.arange(n_samples), batch.flat("actions")]
            z = np.exp(logp - batch.flat("old_logp")).reshape(batch.n_episodes, batch.horizon)
            c = _iteration_weights(mode, batch, z, cfg.clip_eps)
            c_epochs.append(c)
            order = rng.permutation(n_samples)
            for start in range(0, n_samples, cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                info, g_pol, g_val = scalarized_policy_loss(batch, c, cfg, policy.params, val_params, idx)
                if not (np.isfinite(info["policy_loss"]) and np.isfinite(info["value_loss"])):
                    raise TrainingDivergence(f"non-finite loss at iteration {it}: {info}")
                try:
                    policy.params, pol_opt = adam_step(pol_opt, policy.params, g_pol)
                    val_params, val_opt = adam_step(val_opt, val_params, g_val)
                except FloatingPointError as exc:
                    raise TrainingDivergence(f"iteration {it}: {exc}") from exc
                infos.append(info)
        history.append(_log_row(it, steps, batch, prefs, np.mean(c_epochs, axis=(0, 1)), infos))
        log.debug("iter %d steps %d %s", it, steps, history[-1])
    return TrainResult(policy, val_params, history, prefs, steps)


def _log_row(it, steps, batch, prefs, c_mean, infos):
    row = {
        "iteration": it,
        "env_steps": steps,
        "c1_mean": float(c_mean[0]),
        "c2_mean": float(c_mean[1]),
        "violation_rate": float(np.mean(batch.violated)),
        "policy_loss": float(np.mean([i["policy_loss"] for i in infos])),
        "value_loss": float(np.mean([i["value_loss"] for i in infos])),
        "entropy": float(np.mean([i["entropy"] for i in infos])),
    }
    n_obj = batch.episode_returns.shape[1]
    for k in range(len(prefs)):
        members = batch.pref_index == k
        for j in range(n_obj):
            row[f"raw_p{k}_o{j}"] = float(batch.episode_returns[members, j].mean()) if members.any() else float("nan")
        for j in range(n_obj):
            row[f"norm_p{k}_o{j}"] = float(batch.rbar[members, j].mean()) if members.any() else float("nan")
    return row


def moc_train(env_fn, prefs, cfg: PpoConfig | None = None, seed=0, mode="moc") -> TrainResult:
    """Train one preference-conditioned policy; ``mode`` selects MOC or one of its ablations."""
    if mode == "linear":
        raise ValueError("use linear_ppo_train for the linear baseline")
    return _train(env_fn, prefs, cfg or PpoConfig(), seed, mode)


def linear_ppo_train(env_fn, weight, cfg: PpoConfig | None = None, seed=0) -> TrainResult:
    """Single-objective PPO on the scalar reward ``weight . R``; the policy never sees a preference."""
    weight = obj.preference(weight)
    return _train(env_fn, weight[None, :], cfg or PpoConfig(), seed, "linear", scalarize=weight)


def config_dict(cfg: PpoConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d
