"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed as they are produced and collected again in the
pytest terminal summary (see ``conftest.py``).
"""

import math
import time

import numpy as np
import pytest

from brwlab import functionals as F
from brwlab import model as models
from brwlab.engine import GrowthControls, additive_martingale, grow
from brwlab.oracles import TailDpConfig, exact_expectation_dp, gamblers_ruin, martingale_moments_bruteforce, \
    nstar_tail_dp, tail_slope
from brwlab.ray_stats import discounted_trace
from brwlab.renewal import (
    curve_passage_law,
    deep_excursion,
    exit_table,
    excursion_q,
    overshoot_window,
    renewal_bound_functional,
    ruin_constant,
)
from brwlab.spine import CurveFirstPassage, Horizon, LevelCrossing, line_first_moments, line_second_moment, \
    spine_expectation

from conftest import RESULTS, TSTAR_A, TSTAR_B, UP_B


def record(n, ok, detail, started):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - started:.1f} s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_tstar_closed_forms(model_a, model_b, det):
    t0 = time.perf_counter()
    errs = {
        "A": abs(models.find_tstar(model_a) - TSTAR_A),
        "det": abs(models.find_tstar(det) - math.log(2)),
        "B": abs(models.find_tstar(model_b) - TSTAR_B),
    }
    record(1, max(errs.values()) <= 1e-10, f"max |t* - closed form| = {max(errs.values()):.2e}", t0)


def test_criterion_02_many_to_one(model_a, model_b, det):
    t0 = time.perf_counter()
    worst = 0.0
    for m in (model_a, model_b, det):
        law = models.spine_law(m)
        for f in (F.IncrementPattern((1, -1, 1)), F.MinAtLeast(-1), F.VisitCount(0)):
            for k in range(7):
                worst = max(worst, abs(float(exact_expectation_dp(m, k, f)) - spine_expectation(law, f, k)))
    record(2, worst <= 1e-9, f"max |tree - spine| = {worst:.2e} over k <= 6", t0)


def test_criterion_03_line_first_moments(law_a):
    t0 = time.perf_counter()
    lc = line_first_moments(LevelCrossing(1), law_a)
    lc_err = abs(lc.expected_count - (2 + math.sqrt(3)))
    h_err = 0.0
    for k in range(11):
        r = line_first_moments(Horizon(k), law_a)
        h_err = max(h_err, abs(r.expected_count / 2.0**k - 1), abs(r.expected_weight - 1))
    # Horizon counts come from an irrational step law, so "exact" means to rounding
    ok = lc.certified and lc_err <= 1e-3 and h_err <= 1e-12
    record(3, ok, f"LevelCrossing(1) error {lc_err:.2e}, Horizon max rel error {h_err:.2e}", t0)


def test_criterion_04_second_moment(model_a):
    t0 = time.perf_counter()
    value, _ = line_second_moment(Horizon(3), model_a)
    brute = martingale_moments_bruteforce(model_a, 3)[1]
    zero, _ = line_second_moment(Horizon(0), model_a)
    ok = abs(value - brute) <= 1e-10 and zero == 1.0
    record(4, ok, f"Horizon(3) {value:.12f} vs brute force {brute:.12f}, Horizon(0) = {zero}", t0)


def test_criterion_05_renewal_constants(law_a, law_b):
    t0 = time.perf_counter()
    exact_q = 2 * (1 - UP_B)
    dp = excursion_q(law_b).q
    mc = excursion_q(law_b, method="monteCarlo", samples=10**6, seed=2024)
    stats = deep_excursion(law_a, range(1, 201))
    qn_err = max(abs(q - 1 / (2 * n)) for n, q in stats.qn_table.items())
    win_err = max(abs(overshoot_window(law_a, n).windowed_prob - stats.qn_table[n]) for n in range(1, 201))
    ok = (abs(dp - exact_q) <= 1e-10 and abs(mc.q - exact_q) <= 4 * mc.q_stderr and qn_err <= 1e-12
          and abs(stats.theta_ladder - 0.5) <= 1e-15 and win_err <= 1e-12)
    record(5, ok, f"q DP error {abs(dp - exact_q):.1e}, MC {mc.q:.6f} +- {mc.q_stderr:.1e}, "
                  f"q(n) error {qn_err:.1e}, theta {stats.theta_ladder!r}, window error {win_err:.1e}", t0)


def test_criterion_06_transient_tail_slope(model_b, law_b):
    t0 = time.perf_counter()
    res = nstar_tail_dp(model_b, TailDpConfig(L=40, U=80, k_max=60))
    s = tail_slope(res, 20, 60)
    target = math.log(excursion_q(law_b).q)
    rel = abs(s.slope - target) / abs(target)
    width = s.certified_width / abs(s.slope)
    record(6, rel <= 0.05 and width < 0.1,
           f"slope {s.slope:.6f} vs log q {target:.6f} (rel {rel:.2%}), bracket width {width:.2e}", t0)


def test_criterion_07_boundary_tail_sqrt_slope(model_a):
    t0 = time.perf_counter()
    res = nstar_tail_dp(model_a, TailDpConfig(L=60, U=400, k_max=400, method="newton"))
    s = tail_slope(res, 100, 400, "sqrt")
    target = -math.sqrt(2 * 0.5 * TSTAR_A)
    ends = (s.slope_lower, s.slope_upper)
    ok = all(abs(v - target) <= 0.1 * abs(target) for v in ends)
    record(7, ok, f"sqrt-slope bracket [{min(ends):.5f}, {max(ends):.5f}] vs {target:.5f}", t0)


def test_criterion_08_two_sided_exit(law_a):
    t0 = time.perf_counter()
    c, where = ruin_constant(law_a, max_ab=40)
    worst = 0.0
    for a in range(1, 41):
        for b in range(1, 41):
            for x, p in exit_table(law_a, a, b).items():
                worst = max(worst, abs(p - gamblers_ruin(0.5, a, b, x)))
    record(8, c > 0 and worst <= 1e-12, f"c = {c:.5f} at (a, b, x) = {where}, max exit error {worst:.1e}", t0)


def test_criterion_09_renewal_functional(law_b):
    t0 = time.perf_counter()
    r = renewal_bound_functional(law_b, range(21))
    one = renewal_bound_functional(models.StepLaw.from_pmf({1: 1.0}), [0]).values[0]
    err = abs(one - 1 / (1 - math.exp(-1)))
    ok = r.bounded and r.monotone and err <= 1e-12
    record(9, ok, f"max over x <= 20 = {max(r.values.values()):.6f}, monotone {r.monotone}, "
                  f"unit-step error {err:.1e}", t0)


def test_criterion_10_pareto_dichotomy(model_b):
    t0 = time.perf_counter()
    t = TSTAR_B
    heavy, light = models.ParetoTail(t / 2), models.ParetoTail(2 * t)
    peaks10, peaks20, peaks25, change = [], [], [], []
    for seed in range(50):
        tr = discounted_trace(model_b, [heavy, light], 25, seed)
        peaks10.append(tr.peak[0, 10])
        peaks20.append(tr.peak[0, 20])
        peaks25.append(tr.peak[0, 25])
        change.append(abs(tr.X[1, 25] - tr.X[1, 20]) / tr.X[1, 20])
    growth = np.median(peaks25) / np.median(peaks10)
    late = np.median(peaks25) / np.median(peaks20)
    drift = float(np.median(change))
    record(10, growth >= 10 and drift < 0.05,
           f"heavy peak growth x{growth:.3g} (x{late:.3g} from depth 20), light median relative change {drift:.2e}", t0)


@pytest.mark.parametrize("name", ["model_a", "model_b"])
def test_criterion_11_martingale_mean(name, request):
    t0 = time.perf_counter()
    m = request.getfixturevalue(name)
    tstar = models.find_tstar(m)
    vals = np.array([additive_martingale(grow(m, GrowthControls(8), s), tstar) for s in range(10_000)])
    mean = vals.mean(axis=0)
    err = vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
    z = np.abs(mean[1:] - 1) / err[1:]
    record(11, bool(np.all(z <= 4)) and mean[0] == 1.0, f"{name}: max |mean - 1| / stderr = {z.max():.2f}", t0)


def test_criterion_12_curve_lines(law_a):
    t0 = time.perf_counter()
    curve = CurveFirstPassage(6, 1.0, 2.0)
    resid = curve.identity_residual(TSTAR_A, points=100)
    res = curve_passage_law(law_a, curve, k_max=3, samples=10**6, seed=12)
    z = max(abs(prod - mc) / se for prod, mc, se in res.values())
    record(12, resid <= 1e-8 and z <= 4, f"integral residual {resid:.1e}, max product-vs-MC z {z:.2f}", t0)
