"""Experiment orchestration: config files, training runs, evaluation and artefacts.

A run directory holds::

    config.snapshot   resolved configuration (INI), seed included
    train.csv         per-iteration training log
    solutions.csv     evaluated mean / std return per preference
    metrics.csv       hypervolume, tau, p-value, MPD
    front.csv         non-dominated subset of the solution means
    policy.npz        trained policy (one file per weight for linear-ppo)
    run.json          seed, wall-clock time and file list
"""
from __future__ import annotations

import configparser
import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import objectives as obj
from .envs import env_factory
from .errors import ConfigError
from .metrics import SolutionSet, pareto_mask, summarize
from .training import (
    PpoConfig,
    PreferencePolicy,
    TrainResult,
    evaluate,
    linear_ppo_train,
    moc_train,
    write_log_csv,
)

ALGORITHMS = {
    "moc": "moc",
    "moc-ablation-no-control": "no-control",
    "moc-ablation-no-mo": "no-mo",
    "linear-ppo": "linear",
}
ENV_KEYS = {
    "fishwood": {"woodprob": float, "fishprob": float, "horizon": int},
    "fruit-tree": {"depth": int, "leaf_table": str},
}
METRIC_KEYS = ("algorithm", "env", "seed", "n_points", "hypervolume", "hypervolume_se", "tau", "tau_p", "mpd")


@dataclass
class ExperimentConfig:
    env: str = "fishwood"
    env_kwargs: dict = field(default_factory=dict)
    algorithm: str = "moc"
    ppo: PpoConfig = field(default_factory=PpoConfig)
    train_prefs: np.ndarray = None
    eval_prefs: np.ndarray = None
    eval_episodes: int = 20
    seeds: tuple = (0,)
    out_dir: str = "runs"
    reference: np.ndarray = None
    greedy: bool = False
    hv_samples: int = 1_000_000
    # "per-model": every linear-ppo model gets ppo.total_steps; "shared": the budget is split across models
    linear_budget: str = "per-model"

    def __post_init__(self):
        if self.env not in ENV_KEYS:
            raise ConfigError("experiment.env", f"unknown environment {self.env!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("experiment.algorithm", f"must be one of {sorted(ALGORITHMS)}")
        n_obj = env_factory(self.env, **self.env_kwargs)().n_objectives
        if self.train_prefs is None:
            if n_obj != 2:
                raise ConfigError("preferences.train", "required for environments with more than two objectives")
            self.train_prefs = obj.two_objective_prefs(np.arange(1, 10) / 10)
        for name in ("train_prefs", "eval_prefs"):
            prefs = getattr(self, name)
            if prefs is None:
                continue
            path = "preferences." + name.split("_")[0]
            try:
                prefs = obj.preference_set(prefs)
            except ValueError as exc:
                raise ConfigError(path, str(exc)) from None
            if prefs.shape[1] != n_obj:
                raise ConfigError(path, f"preferences have {prefs.shape[1]} entries, {self.env} has {n_obj} objectives")
            setattr(self, name, prefs)
        if self.eval_prefs is None:
            self.eval_prefs = self.train_prefs.copy()
        if self.algorithm == "linear-ppo" and not np.array_equal(self.eval_prefs, self.train_prefs):
            raise ConfigError("preferences.eval", "linear-ppo models are evaluated on their own training weights only")
        if self.eval_episodes < 1:
            raise ConfigError("experiment.eval_episodes", "must be >= 1")
        if not self.seeds:
            raise ConfigError("experiment.seeds", "at least one seed is required")
        self.seeds = tuple(int(s) for s in self.seeds)
        self.reference = np.zeros(n_obj) if self.reference is None else np.asarray(self.reference, dtype=float)
        if self.reference.shape != (n_obj,):
            raise ConfigError("experiment.reference", f"needs {n_obj} entries")
        if self.linear_budget not in ("per-model", "shared"):
            raise ConfigError("experiment.linear_budget", "must be 'per-model' or 'shared'")

    @property
    def n_objectives(self) -> int:
        return self.train_prefs.shape[1]

    def env_fn(self):
        return env_factory(self.env, **self.env_kwargs)


@dataclass
class RunArtifact:
    path: Path
    seed: int
    algorithm: str
    metrics: dict
    wall_clock: float

    def file(self, name) -> Path:
        return self.path / name

    @classmethod
    def load(cls, path) -> "RunArtifact":
        path = Path(path)
        info = json.loads((path / "run.json").read_text(encoding="utf-8"))
        return cls(path, info["seed"], info["algorithm"], read_metrics(path / "metrics.csv"), info["wall_clock"])


# config files


def _floats(text, path):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(path, f"expected numbers, got {text!r}") from None


def _prefs(text, path):
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([_floats(r, path) for r in rows]) if rows else np.zeros((0, 0))


def _convert(value: str, kind, path):
    try:
        if kind is bool:
            low = value.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError
            return low in ("true", "yes", "1", "on")
        if kind is int:
            return int(float(value)) if float(value).is_integer() else int(value)
        if kind is tuple:
            return tuple(int(v) for v in value.replace(",", " ").split())
        return kind(value)
    except ValueError:
        raise ConfigError(path, f"cannot read {value!r} as {kind.__name__}") from None


def _ppo_types():
    out = {}
    for f in fields(PpoConfig):
        default = getattr(PpoConfig(), f.name)
        out[f.name] = tuple if isinstance(default, tuple) else type(default)
    return out


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    """Read an INI experiment description.

    Sections: ``[experiment]`` (env, algorithm, seeds, eval_episodes, greedy,
    reference, hv_samples, linear_budget, out), ``[env]``, ``[ppo]`` (any
    :class:`PpoConfig` field) and ``[preferences]`` with ``train`` / ``eval``
    given as ``;``-separated vectors, or ``train_weights`` / ``eval_weights``
    listing the first-objective weight of two-objective preferences.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    known = {"experiment", "env", "ppo", "preferences"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(section, "unknown section")
    exp = parser["experiment"] if parser.has_section("experiment") else {}
    kwargs = {}
    allowed = {"env", "algorithm", "seeds", "eval_episodes", "greedy", "reference", "hv_samples", "linear_budget", "out"}
    for key in exp:
        if key not in allowed:
            raise ConfigError(f"experiment.{key}", "unknown key")
    env = exp.get("env", "fishwood").strip()
    if env in ("fruit_tree", "fruittree"):
        env = "fruit-tree"
    kwargs["env"] = env
    if "algorithm" in exp:
        kwargs["algorithm"] = exp["algorithm"].strip()
    if "seeds" in exp:
        kwargs["seeds"] = tuple(_convert(s, int, "experiment.seeds") for s in exp["seeds"].replace(",", " ").split())
    if "eval_episodes" in exp:
        kwargs["eval_episodes"] = _convert(exp["eval_episodes"], int, "experiment.eval_episodes")
    if "greedy" in exp:
        kwargs["greedy"] = _convert(exp["greedy"], bool, "experiment.greedy")
    if "reference" in exp:
        kwargs["reference"] = np.array(_floats(exp["reference"], "experiment.reference"))
    if "hv_samples" in exp:
        kwargs["hv_samples"] = _convert(exp["hv_samples"], int, "experiment.hv_samples")
    if "linear_budget" in exp:
        kwargs["linear_budget"] = exp["linear_budget"].strip()
    if "out" in exp:
        kwargs["out_dir"] = exp["out"].strip()

    env_types = ENV_KEYS.get(env)
    if env_types is None:
        raise ConfigError("experiment.env", f"unknown environment {env!r}")
    env_kwargs = {}
    if parser.has_section("env"):
        for key, value in parser["env"].items():
            if key not in env_types:
                raise ConfigError(f"env.{key}", f"not a {env} setting")
            env_kwargs[key] = _convert(value, env_types[key], f"env.{key}")
    if "leaf_table" in env_kwargs:
        table = Path(env_kwargs["leaf_table"])
        env_kwargs["leaf_table"] = str(table if table.is_absolute() else Path(base_dir) / table)
    kwargs["env_kwargs"] = env_kwargs

    ppo_types = _ppo_types()
    ppo_kwargs = {}
    if parser.has_section("ppo"):
        for key, value in parser["ppo"].items():
            if key not in ppo_types:
                raise ConfigError(f"ppo.{key}", "unknown PPO setting")
            ppo_kwargs[key] = _convert(value, ppo_types[key], f"ppo.{key}")
    try:
        kwargs["ppo"] = PpoConfig(**ppo_kwargs)
    except ValueError as exc:
        raise ConfigError("ppo", str(exc)) from None

    if parser.has_section("preferences"):
        sec = parser["preferences"]
        for key in sec:
            if key not in ("train", "eval", "train_weights", "eval_weights"):
                raise ConfigError(f"preferences.{key}", "unknown key")
        for which in ("train", "eval"):
            if which in sec and f"{which}_weights" in sec:
                raise ConfigError(f"preferences.{which}", f"give either {which} or {which}_weights, not both")
            if which in sec:
                kwargs[f"{which}_prefs"] = _prefs(sec[which], f"preferences.{which}")
            elif f"{which}_weights" in sec:
                w = np.array(_floats(sec[f"{which}_weights"], f"preferences.{which}_weights"))
                if w.size == 0 or (w < 0).any() or (w > 1).any():
                    raise ConfigError(f"preferences.{which}_weights", "weights must be non-empty and lie in [0, 1]")
                kwargs[f"{which}_prefs"] = np.column_stack([w, 1 - w])
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("env", str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)


def _vec(a) -> str:
    return ", ".join(repr(float(v)) for v in np.ravel(a))


def _ini_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(map(str, v))
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_snapshot(cfg: ExperimentConfig, seed=None) -> str:
    """Resolved configuration as INI text; :func:`parse_config` reads it back to an equal config."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["experiment"] = {
        "env": cfg.env,
        "algorithm": cfg.algorithm,
        "seeds": str(seed) if seed is not None else ", ".join(map(str, cfg.seeds)),
        "eval_episodes": str(cfg.eval_episodes),
        "greedy": str(cfg.greedy).lower(),
        "reference": _vec(cfg.reference),
        "hv_samples": str(cfg.hv_samples),
        "linear_budget": cfg.linear_budget,
        "out": cfg.out_dir,
    }
    parser["env"] = {k: str(v) for k, v in cfg.env_kwargs.items()}
    parser["ppo"] = {f.name: _ini_value(getattr(cfg.ppo, f.name)) for f in fields(PpoConfig)}
    parser["preferences"] = {
        "train": "; ".join(_vec(p) for p in cfg.train_prefs),
        "eval": "; ".join(_vec(p) for p in cfg.eval_prefs),
    }
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in parser[section].items()]
        lines.append("")
    return "\n".join(lines)


# runs


def _make_run_dir(root: Path, algorithm: str, seed: int, run_id=None) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    if run_id is None:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
        run_id = f"{stamp}-{algorithm}-seed{seed}"
    path = root / run_id
    k = 1
    while path.exists():
        path = root / f"{run_id}-{k}"
        k += 1
    path.mkdir()
    return path


def train(cfg: ExperimentConfig, seed: int):
    """Train according to ``cfg.algorithm``; returns a list of :class:`TrainResult` (one per linear-ppo weight)."""
    mode = ALGORITHMS[cfg.algorithm]
    env_fn = cfg.env_fn()
    if mode != "linear":
        return [moc_train(env_fn, cfg.train_prefs, cfg.ppo, seed=seed, mode=mode)]
    ppo = cfg.ppo
    if cfg.linear_budget == "shared":
        ppo = replace(ppo, total_steps=max(1, ppo.total_steps // len(cfg.train_prefs)))
    # each weight gets its own seed stream derived from (seed, index)
    return [
        linear_ppo_train(env_fn, w, ppo, seed=int(np.random.SeedSequence([seed, k]).generate_state(1)[0]))
        for k, w in enumerate(cfg.train_prefs)
    ]


def eval_seed(seed: int) -> int:
    """Evaluation stream for a run seed, kept apart from the training stream."""
    return int(seed) + 1_000_003


def evaluate_results(cfg: ExperimentConfig, results, seed: int) -> SolutionSet:
    env_fn = cfg.env_fn()
    stream = eval_seed(seed)
    if ALGORITHMS[cfg.algorithm] != "linear":
        return evaluate(results[0].policy, env_fn, cfg.eval_prefs, cfg.eval_episodes, stream, cfg.greedy)
    parts = [
        evaluate(res.policy, env_fn, w[None, :], cfg.eval_episodes, stream, cfg.greedy)
        for res, w in zip(results, cfg.train_prefs)
    ]
    out = parts[0]
    for part in parts[1:]:
        out = out.concat(part)
    return out


HV_SEED = 0  # Monte-Carlo hypervolume stream, fixed so metrics are recomputable from solutions.csv alone


def compute_metrics(solutions: SolutionSet, ref, hv_samples=1_000_000, seed=0, algorithm="", env="") -> dict:
    summary = summarize(solutions, ref, n_samples=hv_samples, seed=HV_SEED)
    return {"algorithm": algorithm, "env": env, "seed": seed, **summary}


def write_metrics(path, metrics: dict):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = list(metrics)
        w.writerow(keys)
        w.writerow([repr(float(metrics[k])) if isinstance(metrics[k], float) else metrics[k] for k in keys])


def read_metrics(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    out = {}
    for k, v in zip(rows[0], rows[1]):
        if k in ("algorithm", "env"):
            out[k] = v
        elif k in ("seed", "n_points"):
            out[k] = int(v)
        else:
            out[k] = float(v)
    return out


def write_front(path, solutions: SolutionSet):
    mask = pareto_mask(solutions.means)
    SolutionSet(solutions.prefs[mask], solutions.means[mask], solutions.stds[mask], solutions.episodes[mask]).to_csv(path)


def run_experiment(cfg: ExperimentConfig, seed=None, out_dir=None, run_id=None) -> RunArtifact:
    """Train, evaluate and persist one seeded run; returns its :class:`RunArtifact`."""
    seed = cfg.seeds[0] if seed is None else int(seed)
    root = Path(out_dir if out_dir is not None else cfg.out_dir)
    start = time.perf_counter()
    results = train(cfg, seed)
    solutions = evaluate_results(cfg, results, seed)
    metrics = compute_metrics(solutions, cfg.reference, cfg.hv_samples, seed, cfg.algorithm, cfg.env)
    wall = time.perf_counter() - start

    path = _make_run_dir(root, cfg.algorithm, seed, run_id)
    (path / "config.snapshot").write_text(config_snapshot(cfg, seed), encoding="utf-8")
    if len(results) == 1:
        results[0].write_log(path / "train.csv")
        results[0].policy.save(path / "policy.npz")
        files = ["policy.npz"]
    else:
        rows = [{"model": k, **row} for k, res in enumerate(results) for row in res.log]
        write_log_csv(rows, path / "train.csv")
        files = []
        for k, res in enumerate(results):
            res.policy.save(path / f"policy_{k}.npz")
            files.append(f"policy_{k}.npz")
    solutions.to_csv(path / "solutions.csv")
    write_metrics(path / "metrics.csv", metrics)
    write_front(path / "front.csv", solutions)
    files = ["config.snapshot", "train.csv", "solutions.csv", "metrics.csv", "front.csv"] + files
    info = {
        "seed": seed,
        "algorithm": cfg.algorithm,
        "env": cfg.env,
        "wall_clock": wall,
        "env_steps": int(sum(r.env_steps for r in results)),
        "files": files,
    }
    (path / "run.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    return RunArtifact(path, seed, cfg.algorithm, metrics, wall)


def run_seeds(cfg: ExperimentConfig, out_dir=None, workers=1) -> list:
    """One :func:`run_experiment` per configured seed; ``workers > 1`` runs seeds in threads."""
    if workers <= 1:
        return [run_experiment(cfg, s, out_dir) for s in cfg.seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_experiment(cfg, s, out_dir), cfg.seeds))


# unseen preferences


def unseen_weight_groups(n_groups=4, group_size=5, seed=0) -> list:
    """Seeded groups of first-objective weights ``n / 100`` with integer ``n`` uniform in ``[1, 99]``."""
    rng = np.random.default_rng([seed, 4242])
    return [rng.integers(1, 100, size=group_size) / 100 for _ in range(n_groups)]


def eval_unseen(policy: PreferencePolicy, env_fn, prefs, episodes=20, seed=0, greedy=False) -> SolutionSet:
    """Evaluate a frozen preference-conditioned policy on arbitrary preferences."""
    if not policy.conditioned:
        raise ValueError("policy is not preference-conditioned; unseen preferences are meaningless for it")
    prefs = obj.preference_set(prefs)
    if prefs.shape[1] != policy.n_objectives:
        raise ValueError(f"preferences have {prefs.shape[1]} entries, policy expects {policy.n_objectives}")
    return evaluate(policy, env_fn, prefs, episodes, seed, greedy)


# comparison


def compare_runs(paths, out_dir) -> Path:
    """Write ``comparison.csv`` (one row per run) and ``plot_<run>.csv`` per run into ``out_dir``."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise ValueError("nothing to compare")
    snapshots = [parse_config((p / "config.snapshot").read_text(encoding="utf-8"), p) for p in paths]
    first = snapshots[0]
    for p, snap in zip(paths[1:], snapshots[1:]):
        if snap.env != first.env or snap.env_kwargs != first.env_kwargs:
            raise ValueError(f"{p} uses a different environment than {paths[0]}")
        if not np.array_equal(snap.reference, first.reference):
            raise ValueError(f"{p} uses a different reference point than {paths[0]}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sols = [SolutionSet.from_csv(p / "solutions.csv") for p in paths]
    metrics = [read_metrics(p / "metrics.csv") for p in paths]
    max_pts = max(len(s) for s in sols)
    n_obj = sols[0].n_objectives
    ret_cols = [f"p{k}_o{j}" for k in range(max_pts) for j in range(n_obj)]
    table = out_dir / "comparison.csv"
    with open(table, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run"] + list(METRIC_KEYS) + ret_cols)
        for p, m, s in zip(paths, metrics, sols):
            row = [p.name] + [repr(m[k]) if isinstance(m.get(k), float) else m.get(k, "") for k in METRIC_KEYS]
            flat = [repr(float(v)) for v in s.means.ravel()]
            w.writerow(row + flat + [""] * (len(ret_cols) - len(flat)))
    for p, s in zip(paths, sols):
        write_plot_data(out_dir / f"plot_{p.name}.csv", s)
    return table


def write_plot_data(path, solutions: SolutionSet):
    """Per-preference points: ``preference, x, y, std_x, std_y`` for two objectives, ``o<j>`` / ``std_o<j>`` beyond."""
    n = solutions.n_objectives
    names = ["x", "y"] if n == 2 else [f"o{j}" for j in range(n)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["preference"] + names + [f"std_{c}" for c in names])
        for p, m, s in zip(solutions.prefs, solutions.means, solutions.stds):
            label = "(" + ", ".join(f"{v:g}" for v in p) + ")"
            w.writerow([label] + [repr(float(v)) for v in m] + [repr(float(v)) for v in s])


def load_policy(run_dir_or_file) -> PreferencePolicy:
    path = Path(run_dir_or_file)
    if path.is_dir():
        path = path / "policy.npz"
    return PreferencePolicy.load(path)


__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "RunArtifact",
    "TrainResult",
    "compare_runs",
    "config_snapshot",
    "eval_unseen",
    "load_config",
    "load_policy",
    "parse_config",
    "run_experiment",
    "run_seeds",
    "unseen_weight_groups",
]
