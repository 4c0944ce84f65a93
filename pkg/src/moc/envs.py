"""Multi-objective environments with vector rewards.

``Fishwood``: two objectives (wood, fish). The single state feature is the
agent's location, 0 for the woods and 1 for the river. The action picks the
location for the current step and the reward is drawn there.

``FruitTree``: six objectives. A binary tree of fixed depth is descended
left/right and the leaf's nutrient vector is paid out on arrival.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EpisodeDone, ShapeError

WOODS, RIVER = 0, 1
GO_WOOD, GO_FISH = WOODS, RIVER
LEFT, RIGHT = 0, 1


@dataclass
class EnvObservation:
    state: np.ndarray
    done: bool
    reward: np.ndarray


@dataclass(frozen=True)
class FishwoodConfig:
    woodprob: float = 0.5
    fishprob: float = 0.5
    horizon: int = 200

    def __post_init__(self):
        for name in ("woodprob", "fishprob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


class Fishwood:
    n_objectives = 2
    n_actions = 2
    state_dim = 1
    objective_names = ("wood", "fish")

    def __init__(self, cfg: FishwoodConfig | None = None):
        self.cfg = cfg or FishwoodConfig()
        self.t = 0
        self.location = WOODS
        self.done = True
        self.rng = np.random.default_rng(0)

    @property
    def horizon(self) -> int:
        return self.cfg.horizon

    def _obs(self, reward) -> EnvObservation:
        return EnvObservation(np.array([float(self.location)]), self.done, np.asarray(reward, dtype=float))

    def reset(self, seed=None) -> EnvObservation:
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self.location = WOODS
        self.done = False
        return self._obs((0.0, 0.0))

    def step(self, action: int) -> EnvObservation:
        if self.done:
            raise EpisodeDone("fishwood episode already finished; call reset()")
        if action not in (GO_WOOD, GO_FISH):
            raise ValueError(f"invalid fishwood action {action}")
        self.location = int(action)
        # One uniform per step, whatever the location, keeps seeded runs aligned.
        u = self.rng.random()
        if self.location == WOODS:
            reward = (1.0, 0.0) if u < self.cfg.woodprob else (0.0, 0.0)
        else:
            reward = (0.0, 1.0) if u < self.cfg.fishprob else (0.0, 0.0)
        self.t += 1
        self.done = self.t >= self.cfg.horizon
        return self._obs(reward)


def fishwood_pareto_front(cfg: FishwoodConfig) -> np.ndarray:
    """Expected (wood, fish) returns of spending ``k`` of ``horizon`` steps in the woods, ``k = 0..horizon``.

    ``cfg.horizon`` may be 0 here, which yields the single point (0, 0).
    """
    horizon = int(cfg.horizon)
    k = np.arange(horizon + 1, dtype=float)
    return np.column_stack([cfg.woodprob * k, cfg.fishprob * (horizon - k)])


def _bundled_table_path() -> Path:
    return Path(str(resources.files("moc") / "data" / "fruit_tree_depth6.txt"))


def load_leaf_table(path) -> np.ndarray:
    """Read a leaf table: header ``# fruit-tree depth=<d>`` then one leaf per line."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    depth = None
    rows = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "depth=" in line and depth is None:
                depth = int(line.split("depth=")[1].split()[0])
            continue
        rows.append([float(v) for v in line.split()])
    if depth is None:
        raise ValueError(f"{path}: missing '# fruit-tree depth=<d>' header")
    table = np.array(rows, dtype=float)
    if table.shape != (2**depth, 6):
        raise ShapeError(f"{path}: expected {2**depth} leaves of 6 values, got {table.shape}")
    return table


def save_leaf_table(path, table, comment=None):
    table = np.asarray(table, dtype=float)
    depth = int(np.log2(table.shape[0]))
    lines = [f"# fruit-tree depth={depth}"]
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines += [" ".join(f"{v:.6f}" for v in row) for row in table]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def random_leaf_table(depth=6, seed=0) -> np.ndarray:
    """Fallback table: nutrients uniform in [0, 10]."""
    return np.random.default_rng(seed).uniform(0.0, 10.0, size=(2**depth, 6))


def sphere_leaf_table(depth=6, seed=0, radius=10.0) -> np.ndarray:
    """Leaves drawn uniformly on the positive orthant of a sphere, so no leaf dominates another."""
    u = np.abs(np.random.default_rng(seed).standard_normal((2**depth, 6)))
    return radius * u / np.linalg.norm(u, axis=1, keepdims=True)


@dataclass
class FruitTreeConfig:
    depth: int = 6
    leaf_rewards: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.leaf_rewards is None:
            if self.depth == 6:
                self.leaf_rewards = load_leaf_table(_bundled_table_path())
            else:
                self.leaf_rewards = random_leaf_table(self.depth)
        self.leaf_rewards = np.asarray(self.leaf_rewards, dtype=float)
        if self.leaf_rewards.shape != (2**self.depth, 6):
            raise ShapeError(f"need {2**self.depth} leaf vectors of length 6, got {self.leaf_rewards.shape}")
        if not np.isfinite(self.leaf_rewards).all() or (self.leaf_rewards < 0).any():
            raise ValueError("leaf rewards must be finite and non-negative")


class FruitTree:
    """Depth-``d`` binary tree; leaves are indexed by the path bits read as a binary number (left = 0)."""

    n_objectives = 6
    n_actions = 2
    objective_names = ("protein", "carbs", "fats", "vitamins", "minerals", "water")

    def __init__(self, cfg: FruitTreeConfig | None = None):
        self.cfg = cfg or FruitTreeConfig()
        self.path: list[int] = []
        self.done = True

    @property
    def horizon(self) -> int:
        return self.cfg.depth

    @property
    def state_dim(self) -> int:
        return self.cfg.depth + 1

    def encode(self) -> np.ndarray:
        """``[level / depth, b_1 .. b_depth]`` with taken bits as -1/+1 and untaken as 0."""
        d = self.cfg.depth
        s = np.zeros(d + 1)
        s[0] = len(self.path) / d
        for i, b in enumerate(self.path):
            s[i + 1] = 1.0 if b else -1.0
        return s

    def reset(self, seed=None) -> EnvObservation:
        self.path = []
        self.done = False
        return EnvObservation(self.encode(), False, np.zeros(6))

    def step(self, action: int) -> EnvObservation:
        if self.done:
            raise EpisodeDone("fruit-tree episode already finished; call reset()")
        if action not in (LEFT, RIGHT):
            raise ValueError(f"invalid fruit-tree action {action}")
        self.path.append(int(action))
        reward = np.zeros(6)
        if len(self.path) == self.cfg.depth:
            self.done = True
            reward = self.cfg.leaf_rewards[leaf_index(self.path)].copy()
        return EnvObservation(self.encode(), self.done, reward)


def leaf_index(bits) -> int:
    idx = 0
    for b in bits:
        idx = 2 * idx + int(b)
    return idx


def make_env(name: str, **kwargs):
    return env_factory(name, **kwargs)()


def env_factory(name: str, **kwargs):
    """Zero-argument constructor for ``name``; the configuration (and any leaf table) is resolved once."""
    if name == "fishwood":
        cfg = FishwoodConfig(**kwargs)
        return lambda: Fishwood(cfg)
    if name in ("fruit-tree", "fruit_tree", "fruittree"):
        table = kwargs.pop("leaf_table", None)
        leaves = load_leaf_table(table) if table else None
        tree_cfg = FruitTreeConfig(leaf_rewards=leaves, **kwargs)
        return lambda: FruitTree(tree_cfg)
    raise ValueError(f"unknown environment {name!r}")
