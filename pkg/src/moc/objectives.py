"""Per-sample quantities of the MOC update.

Everything here is cheap array arithmetic on rollout data: reward
normalisation, the alignment penalty, GAE, the PPO clip indicator and the
closed-form two-vector min-norm weights. None of it touches network
parameters; :mod:`moc.training` turns the resulting weights into gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

STD_FLOOR = 1e-6


def preference(p, atol=1e-9) -> np.ndarray:
    """Validate a preference vector (non-negative, sums to one) and return it as an array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ShapeError(f"preference must be a non-empty vector, got shape {p.shape}")
    if (p < 0).any() or abs(p.sum() - 1.0) > atol:
        raise ValueError(f"preference {p.tolist()} is not on the simplex")
    return p


def preference_set(prefs) -> np.ndarray:
    """Stack preferences into an ``(M, N)`` array; rejects an empty set."""
    rows = [preference(p) for p in prefs]
    if not rows:
        raise ValueError("preference set is empty")
    if len({r.size for r in rows}) != 1:
        raise ShapeError("preferences of different lengths")
    return np.stack(rows)


def two_objective_prefs(weights) -> np.ndarray:
    """``[(w, 1 - w) for w in weights]``; the first objective gets ``w``."""
    w = np.asarray(weights, dtype=float)
    return preference_set(np.column_stack([w, 1.0 - w]))


@dataclass
class RunningNorm:
    """Per-objective running mean / population std, merged batch-wise (Chan et al.)."""

    n_objectives: int
    count: int = 0
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.n_objectives)
        if self.m2 is None:
            self.m2 = np.zeros(self.n_objectives)

    @property
    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.ones(self.n_objectives)
        return np.maximum(np.sqrt(self.m2 / self.count), STD_FLOOR)

    def update(self, x) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_objectives:
            raise ShapeError(f"expected {self.n_objectives} objectives, got {x.shape[1]}")
        n_b = x.shape[0]
        mean_b = x.mean(axis=0)
        m2_b = ((x - mean_b) ** 2).sum(axis=0)
        total = self.count + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * n_b / total
        self.m2 = self.m2 + m2_b + delta**2 * self.count * n_b / total
        self.count = total

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / (2.0 * self.std) + 1.0


def normalize_reward(stats: RunningNorm, r) -> np.ndarray:
    """Fold ``r`` (one vector or a batch of rows) into ``stats``, then map it to ``(r - mean) / (2 std) + 1``."""
    stats.update(r)
    return stats.normalize(r)


def amvs(r_norm, p) -> float:
    """Mean squared difference between normalised rewards and the preference."""
    r_norm = np.asarray(r_norm, dtype=float)
    p = np.asarray(p, dtype=float)
    if r_norm.shape != p.shape:
        raise ShapeError(f"reward {r_norm.shape} vs preference {p.shape}")
    return float(np.mean((r_norm - p) ** 2))


def hinge_violation(mse: float, phi: float) -> float:
    return max(mse - phi, 0.0)


def gae_advantages(rewards, values, bootstrap=0.0, gamma=0.99, lam=0.95) -> np.ndarray:
    """Generalised advantage estimates, recursing backwards along axis 0.

    ``rewards`` and ``values`` have shape ``(T,)`` or ``(T, ...)``; trailing axes
    (episodes, objectives) are processed independently. ``bootstrap`` is the
    value after the final step, 0 for a terminated episode.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ShapeError(f"rewards {rewards.shape} vs values {values.shape}")
    adv = np.zeros_like(rewards)
    next_value = np.broadcast_to(np.asarray(bootstrap, dtype=float), rewards.shape[1:])
    running = np.zeros(rewards.shape[1:])
    for t in range(rewards.shape[0] - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = values[t]
    return adv


def clip_indicator(a, z, eps):
    """Advantage passed through by the PPO clip: 0 where clipping flattens the surrogate, else ``a``.

    Works elementwise on arrays.
    """
    a = np.asarray(a, dtype=float)
    z = np.asarray(z, dtype=float)
    killed = ((a > 0) & (z > 1 + eps)) | ((a < 0) & (z < 1 - eps))
    out = np.where(killed, 0.0, a)
    return float(out) if out.ndim == 0 else out


def moc_vectors(advantages, ratios, p, rbar, violated, eps):
    """Per-step vectors of the two surrogate terms for one episode.

    ``advantages`` is ``(T, N)``, ``ratios`` is ``(T,)``. Returns ``v`` with
    ``v_t = sum_j p_j I(A_jt)`` and ``vbar`` with
    ``vbar_t = [violated] sum_j (rbar_j - p_j) I(A_jt)``.
    """
    advantages = np.asarray(advantages, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    gated = clip_indicator(advantages, ratios[:, None], eps)
    v = gated @ np.asarray(p, dtype=float)
    if not violated:
        return v, np.zeros_like(v)
    return v, gated @ (np.asarray(rbar, dtype=float) - p)


@dataclass(frozen=True)
class MinNormWeights:
    c1: float
    c2: float

    def __iter__(self):
        return iter((self.c1, self.c2))


def min_norm_2(u1, u2) -> MinNormWeights:
    """``argmin_{c in [0, 1]} ||c u1 + (1 - c) u2||^2`` in closed form."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if u1.shape != u2.shape:
        raise ShapeError(f"{u1.shape} vs {u2.shape}")
    d12 = float(u1 @ u2)
    d11 = float(u1 @ u1)
    d22 = float(u2 @ u2)
    if d12 >= d11:
        c = 1.0
    elif d12 >= d22:
        c = 0.0
    else:
        c = float((u2 - u1) @ u2) / float((u1 - u2) @ (u1 - u2))
        c = min(max(c, 0.0), 1.0)
    return MinNormWeights(c, 1.0 - c)


def moc_weights(advantages, ratios, p, rbar, violated, eps) -> MinNormWeights:
    """Weights balancing ``c1 v - c2 vbar`` for one episode.

    A satisfied constraint gives ``(1, 0)`` directly: the solver would
    otherwise pick the zero vector and cancel the update.
    """
    if not violated:
        return MinNormWeights(1.0, 0.0)
    v, vbar = moc_vectors(advantages, ratios, p, rbar, violated, eps)
    return min_norm_2(v, -vbar)


def effective_weights(p, rbar, violated, c1, c2) -> np.ndarray:
    """Per-objective coefficients ``c1 p_j - c2 [violated] (rbar_j - p_j)``; broadcasts over episodes."""
    p = np.asarray(p, dtype=float)
    rbar = np.asarray(rbar, dtype=float)
    gate = np.asarray(violated, dtype=float)[..., None]
    c1 = np.asarray(c1, dtype=float)[..., None]
    c2 = np.asarray(c2, dtype=float)[..., None]
    return c1 * p - c2 * gate * (rbar - p)


def clipped_surrogate(ratios, advantages, eps) -> np.ndarray:
    """Elementwise PPO objective ``min(z A, clip(z, 1 - eps, 1 + eps) A)``."""
    ratios = np.asarray(ratios, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    return np.minimum(ratios * advantages, np.clip(ratios, 1 - eps, 1 + eps) * advantages)


def scalarized_surrogate(ratios, advantages, weights, eps) -> float:
    """Mean over samples of ``sum_j w_j min(z A_j, clip(z) A_j)``.

    ``ratios`` ``(S,)``, ``advantages`` ``(S, N)``, ``weights`` ``(S, N)`` (or broadcastable).
    """
    per_obj = clipped_surrogate(np.asarray(ratios)[:, None], advantages, eps)
    return float(np.mean(np.sum(np.asarray(weights) * per_obj, axis=-1)))


def group_violations(rbar, pref_index, prefs, phi) -> np.ndarray:
    """Per-episode flag: does the mean normalised return of the episode's preference group miss ``phi``?"""
    rbar = np.asarray(rbar, dtype=float)
    pref_index = np.asarray(pref_index)
    flags = np.zeros(len(pref_index), dtype=bool)
    for k in np.unique(pref_index):
        members = pref_index == k
        flags[members] = amvs(rbar[members].mean(axis=0), prefs[k]) > phi
    return flags


def group_means(rbar, pref_index) -> np.ndarray:
    """Replace each row of ``rbar`` by the mean over episodes sharing its preference."""
    rbar = np.asarray(rbar, dtype=float)
    pref_index = np.asarray(pref_index)
    out = np.empty_like(rbar)
    for k in np.unique(pref_index):
        members = pref_index == k
        out[members] = rbar[members].mean(axis=0)
    return out
