"""
Discounted sums along rays
==========================

Attach Pareto marks to every particle and follow the largest sum of
exp(-V) times the mark along a ray.  Heavy marks (tail index below t*) make
the running maximum explode; light marks leave a finite limit.
"""

import numpy as np

from brwlab import model as models
from brwlab.engine import GrowthControls, additive_martingale, grow
from brwlab.ray_stats import discounted_trace, path_functionals, sup_local_time

b = models.model_b()
t = models.find_tstar(b)

# the additive martingale has mean one at every generation
vals = np.array([additive_martingale(grow(b, GrowthControls(8), s), t) for s in range(10_000)])
err = vals.std(axis=0, ddof=1) / np.sqrt(len(vals))
for g in (2, 4, 8):
    print(f"generation {g}: mean {vals[:, g].mean():.3f} +- {err[g]:.3f}")

# heavy against light marks, one tree at a time and never stored
laws = [models.ParetoTail(t / 2), models.ParetoTail(2 * t)]
controls = GrowthControls(20, max_population=2_000_000)
peaks, sums = [], []
for seed in range(10):
    tr = discounted_trace(b, laws, 20, seed, controls)
    peaks.append(tr.peak[0])
    sums.append(tr.X[1])
peaks, sums = np.median(peaks, axis=0), np.median(sums, axis=0)
for g in (5, 10, 15, 20):
    print(f"depth {g:2d}  heavy peak {peaks[g]:.3e}  light sum {sums[g]:.6f}")

# a stored tree gives the same numbers plus M, the unmarked sum
tree = grow(b, GrowthControls(12), 0)
pf = path_functionals(tree, b_list=(1, 2))
print(f"M = {pf.M_value:.6f} (+ tail estimate {pf.M_tail:.2e}), Xi = {pf.Xi}")

# local times: the most visits any ray pays to level n
a = models.model_a()
tree = grow(a, GrowthControls(16), 1)
for n in (0, 1, 2, 4):
    print(f"model_a  sup local time at {n}: {sup_local_time(tree, n, 'latticeExact')}")
