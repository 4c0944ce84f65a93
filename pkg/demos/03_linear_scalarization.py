"""
Why a linear scalarisation does not follow the preference
=========================================================

Training PPO on w * wood + (1 - w) * fish rewards a policy for going all in on
whichever objective has the larger weight: on fishwood the two objectives
trade one for one, so the scalarised optimum is an endpoint of the front for
every w other than 0.5. The nine separately trained models therefore pile up
at the two ends instead of spreading out like the preferences.
"""

import sys

import numpy as np

from moc.envs import Fishwood
from moc.metrics import hypervolume_2d, mean_pairwise_distance
from moc.objectives import two_objective_prefs
from moc.training import PpoConfig, evaluate, linear_ppo_train

steps = int(float(sys.argv[1])) if len(sys.argv) > 1 else 20_000
cfg = PpoConfig(epochs=10, total_steps=steps)

rows = []
for k, w in enumerate(two_objective_prefs(np.arange(1, 10) / 10)):
    res = linear_ppo_train(Fishwood, w, cfg, seed=k)
    sol = evaluate(res.policy, Fishwood, w[None, :], episodes=20, seed=1)
    rows.append(sol)
    print(f"w = {w[0]:.1f}: wood {sol.means[0, 0]:5.1f}  fish {sol.means[0, 1]:5.1f}")

sols = rows[0]
for r in rows[1:]:
    sols = sols.concat(r)
print(f"hypervolume {hypervolume_2d(sols.means, [0, 0]):.0f}   mean pairwise distance {mean_pairwise_distance(sols.means):.1f}")
