"""
Balancing two directions with the min-norm solver
=================================================

MOC combines a preference-weighted return term with an alignment penalty.
Each episode contributes one vector per term, and the two are mixed by the
convex weight c that makes the combined vector as short as possible.
"""

import numpy as np

from moc.objectives import clip_indicator, min_norm_2, moc_vectors

# orthogonal unit vectors meet halfway
print(min_norm_2([1.0, 0.0], [0.0, 1.0]))

# opposing vectors of different length cancel exactly at c = 0.25
w = min_norm_2([3.0, 0.0], [-1.0, 0.0])
print(w, "combined:", w.c1 * np.array([3.0, 0.0]) + w.c2 * np.array([-1.0, 0.0]))

# when one vector already points further along the other, the solver keeps only the shorter one
print(min_norm_2([1.0, 1.0], [2.0, 2.0]))

# the per-step vectors come from advantages passed through the PPO clip:
# a positive advantage is dropped once the ratio exceeds 1 + eps
print([clip_indicator(1.5, z, 0.2) for z in (0.9, 1.1, 1.3)])

# one short episode: two objectives, preference (0.7, 0.3), normalised return (1.6, 0.2)
adv = np.array([[1.0, -0.5], [0.2, 0.8], [-0.3, 0.4]])
ratios = np.array([1.0, 1.25, 0.9])
v, vbar = moc_vectors(adv, ratios, np.array([0.7, 0.3]), np.array([1.6, 0.2]), True, 0.2)
print("v    =", v)
print("vbar =", vbar)

# the update direction is c1 v - c2 vbar, so vbar enters with a minus sign
w = min_norm_2(v, -vbar)
print("weights:", w)

# a brute-force scan over c agrees with the closed form
grid = np.linspace(0, 1, 10001)
norms = [np.linalg.norm(c * v - (1 - c) * vbar) for c in grid]
print("grid minimiser: %.4f   closed form: %.4f" % (grid[int(np.argmin(norms))], w.c1))
