"""
The critical tilt and the spine walk
====================================

Find t* for the bundled models, look at the tilted step law the spine
follows, and check that tree expectations equal spine expectations.
"""

import math

from brwlab import functionals as F
from brwlab import model as models
from brwlab.oracles import exact_expectation_dp
from brwlab.spine import Horizon, LevelCrossing, line_first_moments, spine_expectation

# every bundled model, its tilt and its regime
for name, make in models.BUNDLED.items():
    m = make()
    try:
        t = models.find_tstar(m)
    except models.NoRoot:
        print(f"{name:12s} no positive root")
        continue
    print(f"{name:12s} t* = {t:.12f}  regime {models.classify_hypotheses(m).regime}")

# the spine of model_a is a symmetric simple walk, that of model_b drifts upward
a, b = models.model_a(), models.model_b()
law_a, law_b = models.spine_law(a), models.spine_law(b)
for name, law in (("model_a", law_a), ("model_b", law_b)):
    print(f"{name} spine steps", {int(k): round(float(p), 6) for k, p in zip(law.steps, law.probs)})

# counting particles on the tree equals reweighting the spine by exp(t* S_k)
f = F.VisitCount(0)
for k in range(7):
    tree = float(exact_expectation_dp(b, k, f))
    spine = spine_expectation(law_b, f, k)
    print(f"k={k}  tree {tree:.12f}  spine {spine:.12f}")

# optional lines: first particle above level 1 on each ray, and the k-th generation
r = line_first_moments(LevelCrossing(1), law_a)
print(f"LevelCrossing(1): expected count {r.expected_count:.10f} vs 2 + sqrt 3 = {2 + math.sqrt(3):.10f}")
for k in (1, 5, 10):
    r = line_first_moments(Horizon(k), law_a)
    print(f"Horizon({k}): count {r.expected_count:.6g}, weight {r.expected_weight:.12f}")
