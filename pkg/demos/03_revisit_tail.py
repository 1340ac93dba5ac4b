"""
How often a ray revisits its starting level
===========================================

N* is the largest number of visits to 0 along a single ray.  Its tail is
computed by a bracketed fixed point: an exponential decay at rate log q
for the drifting model and a sqrt k decay for the centered one.
"""

import math

from brwlab import model as models
from brwlab.oracles import TailDpConfig, nstar_tail_dp, simulate_revisit, tail_slope
from brwlab.renewal import excursion_q

b = models.model_b()
res = nstar_tail_dp(b, TailDpConfig(L=40, U=80, k_max=60))
for k in (1, 5, 10, 20, 40, 60):
    lo, hi = res.bracket(k)
    print(f"model_b  P(N* > {k:2d}) in [{lo:.6e}, {hi:.6e}]")
s = tail_slope(res, 20, 60)
print(f"slope {s.slope:.6f} vs log q = {math.log(excursion_q(models.spine_law(b)).q):.6f}")

# the first bracket against simulated trees
p, se, bias = simulate_revisit(b, 100_000, seed=3)
print(f"simulated P(N* > 1) = {p:.5f} +- {se:.5f} (truncation bias below {bias:.1e})")

# the centered model: log P(N* > k) is close to linear in sqrt k
a = models.model_a()
res = nstar_tail_dp(a, TailDpConfig(L=60, U=400, k_max=400))
s = tail_slope(res, 100, 400, "sqrt")
target = -math.sqrt(2 * 0.5 * models.find_tstar(a))
print(f"model_a  sqrt-slope in [{s.slope_lower:.5f}, {s.slope_upper:.5f}], limit {target:.5f}")
