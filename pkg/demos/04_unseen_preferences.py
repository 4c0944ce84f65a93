"""
Preferences the policy never saw
================================

The policy network takes the preference as an input, so it can be asked for
trade-offs between the nine training weights. Here a briefly trained policy is
evaluated on four seeded groups of five weights drawn as n / 100.
"""

import sys

import numpy as np

from moc.envs import Fishwood
from moc.harness import eval_unseen, unseen_weight_groups
from moc.metrics import controllability
from moc.objectives import two_objective_prefs
from moc.training import PpoConfig, moc_train

steps = int(float(sys.argv[1])) if len(sys.argv) > 1 else 40_000
result = moc_train(Fishwood, two_objective_prefs(np.arange(1, 10) / 10), PpoConfig(epochs=10, total_steps=steps), seed=0)

for k, weights in enumerate(unseen_weight_groups(4, 5, seed=0)):
    prefs = np.column_stack([weights, 1 - weights])
    sols = eval_unseen(result.policy, Fishwood, prefs, episodes=20, seed=7)
    tau, _ = controllability(sols)
    pairs = ", ".join(f"{w:.2f}->{m[0]:.0f}" for w, m in zip(weights, sols.means))
    print(f"group {k}: tau {tau:.2f}   wood weight -> wood return: {pairs}")
