import json

import numpy as np
import pytest

from moc import harness
from moc.cli import main
from moc.errors import ConfigError
from moc.metrics import SolutionSet, summarize

TINY = """
[experiment]
env = fishwood
algorithm = {algo}
seeds = 0, 1
eval_episodes = 3

[env]
horizon = 20

[ppo]
hidden = 16, 16
total_steps = 1600
episodes_per_batch = 4
minibatch_size = 64

[preferences]
train_weights = 0.2, 0.5, 0.8
"""


def tiny(algo="moc"):
    return harness.parse_config(TINY.format(algo=algo))


def test_parse_config_fields():
    cfg = tiny()
    assert cfg.env == "fishwood" and cfg.env_kwargs == {"horizon": 20}
    assert cfg.ppo.hidden == (16, 16)
    assert cfg.ppo.total_steps == 1600
    np.testing.assert_allclose(cfg.train_prefs, [[0.2, 0.8], [0.5, 0.5], [0.8, 0.2]])
    np.testing.assert_array_equal(cfg.eval_prefs, cfg.train_prefs)
    assert cfg.seeds == (0, 1)
    np.testing.assert_array_equal(cfg.reference, [0.0, 0.0])


def test_default_preferences_are_the_nine_point_grid():
    cfg = harness.parse_config("[experiment]\nenv = fishwood\n")
    np.testing.assert_allclose(cfg.train_prefs[:, 0], np.arange(1, 10) / 10)
    assert cfg.eval_episodes == 20


@pytest.mark.parametrize(
    "text, field",
    [
        ("[ppo]\nlr = fast\n", "ppo.lr"),
        ("[ppo]\nlearning_rate = 0.1\n", "ppo.learning_rate"),
        ("[ppo]\ngamma = 1.5\n", "ppo"),
        ("[experiment]\nenv = cartpole\n", "experiment.env"),
        ("[experiment]\nalgorithm = dqn\n", "experiment.algorithm"),
        ("[experiment]\neval_episodes = 0\n", "experiment.eval_episodes"),
        ("[env]\nwoodprob = 2\n", "env"),
        ("[env]\ndepth = 3\n", "env.depth"),
        ("[preferences]\ntrain = 0.2, 0.2\n", "preferences.train"),
        ("[preferences]\ntrain = 0.2, 0.3, 0.5\n", "preferences.train"),
        ("[preferences]\neval = \n", "preferences.eval"),
        ("[preferences]\ntrain_weights = 1.5\n", "preferences.train_weights"),
        ("[extras]\nx = 1\n", "extras"),
        ("[experiment]\nreference = 0, 0, 0\n", "experiment.reference"),
        ("[experiment]\nalgorithm = linear-ppo\n[preferences]\neval_weights = 0.3\n", "preferences.eval"),
    ],
)
def test_config_errors_carry_field_path(text, field):
    with pytest.raises(ConfigError) as info:
        harness.parse_config(text)
    assert info.value.field == field


def test_fruit_tree_needs_explicit_preferences():
    with pytest.raises(ConfigError):
        harness.parse_config("[experiment]\nenv = fruit-tree\n")
    cfg = harness.parse_config("[experiment]\nenv = fruit-tree\n[preferences]\ntrain = " + ", ".join(["0.1"] * 5) + ", 0.5\n")
    assert cfg.n_objectives == 6


def test_snapshot_round_trip():
    cfg = tiny()
    again = harness.parse_config(harness.config_snapshot(cfg))
    assert harness.config_snapshot(again) == harness.config_snapshot(cfg)
    assert again.ppo == cfg.ppo


def test_run_experiment_writes_artifacts(tmp_path):
    art = harness.run_experiment(tiny(), seed=0, out_dir=tmp_path)
    for name in ("config.snapshot", "train.csv", "solutions.csv", "metrics.csv", "front.csv", "policy.npz", "run.json"):
        assert (art.path / name).is_file()
    info = json.loads((art.path / "run.json").read_text())
    assert info["seed"] == 0 and info["wall_clock"] > 0
    assert info["env_steps"] == 1600
    sols = SolutionSet.from_csv(art.path / "solutions.csv")
    assert len(sols) == 3 and np.all(sols.episodes == 3)
    np.testing.assert_equal(harness.RunArtifact.load(art.path).metrics, art.metrics)


def test_metrics_recompute_from_stored_solutions(tmp_path):
    art = harness.run_experiment(tiny(), seed=1, out_dir=tmp_path)
    sols = SolutionSet.from_csv(art.path / "solutions.csv")
    again = harness.compute_metrics(sols, np.zeros(2), seed=1, algorithm="moc", env="fishwood")
    stored = harness.read_metrics(art.path / "metrics.csv")
    np.testing.assert_equal(again, stored)


def test_same_seed_gives_byte_identical_solutions(tmp_path):
    a = harness.run_experiment(tiny(), seed=5, out_dir=tmp_path / "a")
    b = harness.run_experiment(tiny(), seed=5, out_dir=tmp_path / "b")
    for name in ("solutions.csv", "metrics.csv", "train.csv", "config.snapshot"):
        assert (a.path / name).read_bytes() == (b.path / name).read_bytes()


def test_linear_ppo_trains_one_model_per_weight(tmp_path):
    art = harness.run_experiment(tiny("linear-ppo"), seed=0, out_dir=tmp_path)
    assert sorted(p.name for p in art.path.glob("policy_*.npz")) == ["policy_0.npz", "policy_1.npz", "policy_2.npz"]
    info = json.loads((art.path / "run.json").read_text())
    assert info["env_steps"] == 3 * 1600
    shared = harness.parse_config(TINY.format(algo="linear-ppo").replace("eval_episodes = 3", "eval_episodes = 3\nlinear_budget = shared"))
    art2 = harness.run_experiment(shared, seed=0, out_dir=tmp_path)
    assert json.loads((art2.path / "run.json").read_text())["env_steps"] <= 1600


def test_run_seeds_in_threads_matches_serial(tmp_path):
    cfg = tiny()
    serial = harness.run_seeds(cfg, tmp_path / "s")
    threaded = harness.run_seeds(cfg, tmp_path / "t", workers=2)
    for a, b in zip(serial, threaded):
        assert (a.path / "solutions.csv").read_bytes() == (b.path / "solutions.csv").read_bytes()


def test_eval_unseen(tmp_path):
    cfg = tiny()
    art = harness.run_experiment(cfg, seed=2, out_dir=tmp_path)
    policy = harness.load_policy(art.path)
    same = harness.eval_unseen(policy, cfg.env_fn(), cfg.train_prefs, 3, seed=harness.eval_seed(2))
    stored = SolutionSet.from_csv(art.path / "solutions.csv")
    np.testing.assert_array_equal(same.means, stored.means)
    with pytest.raises(ValueError):
        harness.eval_unseen(policy, cfg.env_fn(), [], 3)
    linear = harness.run_experiment(tiny("linear-ppo"), seed=2, out_dir=tmp_path)
    with pytest.raises(ValueError):
        harness.eval_unseen(harness.load_policy(linear.path / "policy_0.npz"), cfg.env_fn(), cfg.train_prefs)


def test_unseen_groups_are_seeded_percentages():
    groups = harness.unseen_weight_groups(4, 5, seed=3)
    assert len(groups) == 4 and all(len(g) == 5 for g in groups)
    flat = np.concatenate(groups)
    assert np.all((flat >= 0.01) & (flat <= 0.99))
    np.testing.assert_allclose(flat * 100, np.round(flat * 100))
    np.testing.assert_array_equal(np.concatenate(harness.unseen_weight_groups(4, 5, seed=3)), flat)


def test_compare_runs(tmp_path):
    a = harness.run_experiment(tiny(), seed=0, out_dir=tmp_path / "runs")
    table = harness.compare_runs([a.path], tmp_path / "cmp")
    lines = table.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("run,algorithm,env,seed,n_points,hypervolume")
    plot = (tmp_path / "cmp" / f"plot_{a.path.name}.csv").read_text().splitlines()
    assert plot[0] == "preference,x,y,std_x,std_y"
    assert len(plot) == 4


def test_compare_rejects_mismatched_environments(tmp_path):
    a = harness.run_experiment(tiny(), seed=0, out_dir=tmp_path)
    other = harness.parse_config(TINY.format(algo="moc").replace("horizon = 20", "horizon = 10"))
    b = harness.run_experiment(other, seed=0, out_dir=tmp_path)
    with pytest.raises(ValueError):
        harness.compare_runs([a.path, b.path], tmp_path / "cmp")


# command line


def write_tiny(tmp_path, algo="moc"):
    path = tmp_path / "exp.ini"
    path.write_text(TINY.format(algo=algo))
    return path


def test_cli_train_and_compare(tmp_path, capsys):
    cfg = write_tiny(tmp_path)
    assert main(["train", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "runs")]) == 0
    assert main(["train", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "runs"), "--algo", "linear-ppo"]) == 0
    out = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(out) == 2 and all(o["seed"] == 4 for o in out)
    runs = sorted(str(p) for p in (tmp_path / "runs").iterdir())
    assert main(["compare", *runs, "--out", str(tmp_path / "cmp")]) == 0
    assert len((tmp_path / "cmp" / "comparison.csv").read_text().splitlines()) == 3


def test_cli_eval_unseen_defaults_to_run_seed(tmp_path, capsys):
    cfg = write_tiny(tmp_path)
    main(["train", "--config", str(cfg), "--seed", "6", "--out", str(tmp_path / "runs")])
    run = next((tmp_path / "runs").iterdir())
    capsys.readouterr()
    code = main(["eval-unseen", "--policy", str(run), "--config", str(cfg), "--prefs", "0.2; 0.5; 0.8",
                 "--episodes", "3", "--out", str(tmp_path / "u")])
    assert code == 0
    got = SolutionSet.from_csv(tmp_path / "u" / "unseen_0.csv")
    np.testing.assert_array_equal(got.means, SolutionSet.from_csv(run / "solutions.csv").means)
    assert main(["eval-unseen", "--policy", str(run), "--config", str(cfg), "--episodes", "2", "--out", str(tmp_path / "g")]) == 0
    assert len(list((tmp_path / "g").glob("unseen_[0-9]*.csv"))) == 4


def test_cli_pareto_front(tmp_path, capsys):
    assert main(["pareto-front", "--out", str(tmp_path / "front.csv"), "--horizon", "10"]) == 0
    lines = (tmp_path / "front.csv").read_text().splitlines()
    assert lines[0] == "wood_steps,wood,fish"
    assert len(lines) == 12
    assert lines[-1] == "10,5.0,0.0"


@pytest.mark.parametrize(
    "argv, kind",
    [
        (["train", "--config", "/nonexistent.ini"], "ConfigError"),
        (["frobnicate"], "UsageError"),
        (["train"], "UsageError"),
    ],
)
def test_cli_errors_are_machine_readable(argv, kind, capsys):
    assert main(argv) == 2
    line = json.loads(capsys.readouterr().err.strip())
    assert line["error"] == kind


def test_cli_bad_field_reports_path(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[ppo]\nclip_eps = wide\n")
    assert main(["train", "--config", str(bad)]) == 2
    line = json.loads(capsys.readouterr().err.strip())
    assert line == {"error": "ConfigError", "message": "cannot read 'wide' as float", "field": "ppo.clip_eps"}


def test_summary_matches_direct_metric_calls(tmp_path):
    art = harness.run_experiment(tiny(), seed=0, out_dir=tmp_path)
    sols = SolutionSet.from_csv(art.path / "solutions.csv")
    direct = summarize(sols, np.zeros(2))
    assert art.metrics["hypervolume"] == direct["hypervolume"]
