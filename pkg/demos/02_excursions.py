"""
Excursions of the spine walk
============================

Return probabilities, deep excursions, two-sided exits and the renewal
functional, each beside its closed form.
"""

import math

from brwlab import model as models
from brwlab.oracles import gamblers_ruin
from brwlab.renewal import deep_excursion, excursion_q, overshoot_window, renewal_bound_functional, \
    ruin_constant, two_sided_exit

law_a = models.spine_law(models.model_a())
law_b = models.spine_law(models.model_b())
up = law_b.prob(1)

# a transient spine returns to 0 with probability 2(1 - up)
e = excursion_q(law_b, K_list=(1, 2, 5, 10))
print(f"model_b q = {e.q:.12f}, closed form {2 * (1 - up):.12f}")
for K, v in e.q_K.items():
    print(f"  returns without dipping below -{K}: {v:.6f}")
mc = excursion_q(law_b, method="monteCarlo", samples=200_000, seed=1)
print(f"  simulated q = {mc.q:.5f} +- {mc.q_stderr:.5f}")

# a centered spine always returns; dipping below -n first has probability 1/(2n)
stats = deep_excursion(law_a, range(1, 11))
for n, q in stats.qn_table.items():
    print(f"  n={n:2d}  q(n) = {q:.6f}  n q(n) = {n * q:.6f}  window {overshoot_window(law_a, n).windowed_prob:.6f}")
print(f"theta from ladder heights {stats.theta_ladder:.15f}, from the fit {stats.theta_fit:.12f}")

# two-sided exits agree with gambler's ruin
for a, b in ((5, 5), (9, 1), (3, 12)):
    print(f"exit below -{a} before {b}: {two_sided_exit(law_b, a, b, 0):.10f} vs {gamblers_ruin(up, a, b, 0):.10f}")
c, where = ruin_constant(law_a, max_ab=20)
print(f"smallest ratio to the linear profile: {c:.5f} at (a, b, x) = {where}")

# expected discounted visits of the killed spine stay bounded
r = renewal_bound_functional(law_b, range(0, 21, 5))
for x, v in r.values.items():
    print(f"  x={x:2d}  {v:.10f}")
unit = renewal_bound_functional(models.StepLaw.from_pmf({1: 1.0}), [0]).values[0]
print(f"unit step: {unit:.12f} vs 1/(1 - 1/e) = {1 / (1 - math.exp(-1)):.12f}")
