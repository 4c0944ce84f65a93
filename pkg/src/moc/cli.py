"""``moc`` command line: train, eval-unseen, compare, pareto-front.

Failures print one JSON line ``{"error": <kind>, "field": ..., "message": ...}``
to stderr and exit with status 2 (bad configuration or arguments) or 1
(anything raised while running).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import harness
from .envs import FishwoodConfig, env_factory, fishwood_pareto_front
from .errors import ConfigError, TrainingDivergence
from .metrics import summarize


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(record):
    """Print one JSON line; NaN becomes null."""
    clean = {k: (None if isinstance(v, float) and v != v else v) for k, v in record.items()}
    print(json.dumps(clean))


def _fail(kind, message, field=None, code=1):
    line = {"error": kind, "message": message}
    if field is not None:
        line["field"] = field
    print(json.dumps(line), file=sys.stderr)
    return code


def _parse_pref_list(text):
    """``"0.3,0.7; 0.6,0.4"`` or a path to a file with one vector per line."""
    path = Path(text)
    if path.is_file():
        text = ";".join(line for line in path.read_text(encoding="utf-8").splitlines() if line.strip() and not line.startswith("#"))
    rows = [r for r in text.split(";") if r.strip()]
    try:
        prefs = np.array([[float(v) for v in r.replace(",", " ").split()] for r in rows])
    except ValueError:
        raise ConfigError("--prefs", f"cannot read preferences from {text!r}") from None
    if prefs.size == 0:
        raise ConfigError("--prefs", "preference list is empty")
    if prefs.shape[1] == 1:
        prefs = np.column_stack([prefs[:, 0], 1 - prefs[:, 0]])
    return prefs


def _cmd_train(args):
    cfg = harness.load_config(args.config)
    if args.algo:
        cfg = harness.ExperimentConfig(**{**cfg.__dict__, "algorithm": args.algo})
    if args.greedy:
        cfg.greedy = True
    seeds = [args.seed] if args.seed is not None else list(cfg.seeds)
    for seed in seeds:
        art = harness.run_experiment(cfg, seed=seed, out_dir=args.out)
        m = art.metrics
        _emit({"run": str(art.path), "seed": seed, "hypervolume": m["hypervolume"], "tau": m["tau"], "mpd": m["mpd"]})
    return 0


def _cmd_eval_unseen(args):
    if args.config:
        cfg = harness.load_config(args.config)
        env_fn = cfg.env_fn()
        ref = cfg.reference
    else:
        env_fn = env_factory(args.env)
        ref = np.zeros(env_fn().n_objectives)
    policy = harness.load_policy(args.policy)
    seed = args.seed
    if seed is None:
        # a run directory evaluates with its own seed, matching solutions.csv
        run_info = Path(args.policy) / "run.json"
        seed = json.loads(run_info.read_text(encoding="utf-8"))["seed"] if run_info.is_file() else 0
    if args.prefs:
        groups = [_parse_pref_list(args.prefs)]
    else:
        if policy.n_objectives != 2:
            raise ConfigError("--prefs", "random unseen groups are only generated for two objectives")
        groups = [np.column_stack([w, 1 - w]) for w in harness.unseen_weight_groups(args.groups, args.group_size, seed)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, prefs in enumerate(groups):
        sols = harness.eval_unseen(policy, env_fn, prefs, args.episodes, seed=harness.eval_seed(seed), greedy=args.greedy)
        sols.to_csv(out / f"unseen_{k}.csv")
        m = summarize(sols, ref, seed=harness.HV_SEED)
        m["min_total"] = float(sols.means.sum(axis=1).min())
        rows.append({"group": k, **m})
        _emit({"group": k, "tau": m["tau"], "tau_p": m["tau_p"], "min_total": m["min_total"]})
    with open(out / "unseen_metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return 0


def _cmd_compare(args):
    table = harness.compare_runs(args.runs, args.out)
    _emit({"comparison": str(table)})
    return 0


def _cmd_pareto_front(args):
    if args.config:
        cfg = harness.load_config(args.config)
        if cfg.env != "fishwood":
            raise ConfigError("experiment.env", "the analytic front is only defined for fishwood")
        fw = FishwoodConfig(**cfg.env_kwargs)
    else:
        fw = FishwoodConfig(args.woodprob, args.fishprob, args.horizon)
    front = fishwood_pareto_front(fw)
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "pareto_front.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["wood_steps", "wood", "fish"])
        for k, (x, y) in enumerate(front):
            w.writerow([k, repr(float(x)), repr(float(y))])
    _emit({"front": str(out), "points": len(front)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="moc", description="Multi-objective controllable PPO experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train and evaluate one experiment config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, help="run only this seed (default: the config's seeds)")
    t.add_argument("--out", help="output root (default: the config's out)")
    t.add_argument("--algo", choices=sorted(harness.ALGORITHMS), help="override the config's algorithm")
    t.add_argument("--greedy", action="store_true", help="evaluate the argmax action instead of sampling")
    t.set_defaults(func=_cmd_train)

    u = sub.add_parser("eval-unseen", help="evaluate a trained policy on new preferences")
    u.add_argument("--policy", required=True, help="policy.npz or a run directory")
    u.add_argument("--prefs", help="'w1,w2; ...', bare first-objective weights, or a file; default: seeded random groups")
    u.add_argument("--config", help="experiment config for the environment and reference point")
    u.add_argument("--env", default="fishwood", choices=sorted(harness.ENV_KEYS))
    u.add_argument("--groups", type=int, default=4)
    u.add_argument("--group-size", type=int, default=5)
    u.add_argument("--episodes", type=int, default=20)
    u.add_argument("--seed", type=int)
    u.add_argument("--out", required=True)
    u.add_argument("--greedy", action="store_true")
    u.set_defaults(func=_cmd_eval_unseen)

    c = sub.add_parser("compare", help="tabulate metrics of several run directories")
    c.add_argument("runs", nargs="+")
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_compare)

    f = sub.add_parser("pareto-front", help="write the analytic fishwood front")
    f.add_argument("--config")
    f.add_argument("--woodprob", type=float, default=0.5)
    f.add_argument("--fishprob", type=float, default=0.5)
    f.add_argument("--horizon", type=int, default=200)
    f.add_argument("--out", required=True, help="a .csv path or a directory")
    f.set_defaults(func=_cmd_pareto_front)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), code=2)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("ConfigError", exc.message, field=exc.field, code=2)
    except TrainingDivergence as exc:
        return _fail("TrainingDivergence", str(exc))
    except (ValueError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
