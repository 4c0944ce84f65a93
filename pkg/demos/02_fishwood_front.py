"""
One policy, nine trade-offs on fishwood
=======================================

Fishwood pays one unit of wood or fish per successful step, so every policy
lands near the line wood + fish = 100. What distinguishes a controllable
policy is *where* on that line it lands for each preference. This script
trains a single preference-conditioned policy with MOC and checks how its
returns track the wood weight.

Pass a step budget as the first argument; the default is a quick 40k-step run.
The acceptance configuration uses 200k steps.
"""

import sys

import numpy as np

from moc.envs import Fishwood, FishwoodConfig, fishwood_pareto_front
from moc.metrics import hypervolume_2d, kendall_tau, mean_pairwise_distance, projection_score
from moc.objectives import two_objective_prefs
from moc.training import PpoConfig, evaluate, moc_train

steps = int(float(sys.argv[1])) if len(sys.argv) > 1 else 40_000

# the analytic front: spend k of the 200 steps in the woods
front = fishwood_pareto_front(FishwoodConfig())
print("front endpoints:", front[0], front[-1], " hypervolume of the ideal 9-point set: 4500")

prefs = two_objective_prefs(np.arange(1, 10) / 10)
cfg = PpoConfig(epochs=10, total_steps=steps)
result = moc_train(Fishwood, prefs, cfg, seed=0)
print(f"trained for {result.env_steps} steps; last violation rate {result.log[-1]['violation_rate']:.2f}")

# mean return over 20 evaluation episodes per preference
sols = evaluate(result.policy, Fishwood, prefs, episodes=20, seed=1)
for p, m, s in zip(sols.prefs, sols.means, sols.stds):
    print(f"wood weight {p[0]:.1f}:  wood {m[0]:5.1f} +- {s[0]:4.1f}   fish {m[1]:5.1f}   total {m.sum():5.1f}")

# controllability: the angle of each point should order like the preferences
tau, pval = kendall_tau(sols.prefs[:, 0], projection_score(sols.means))
print(f"kendall tau {tau:.2f} (p = {pval:.1e})")
print(f"hypervolume {hypervolume_2d(sols.means, [0, 0]):.0f}   mean pairwise distance {mean_pairwise_distance(sols.means):.1f}")
