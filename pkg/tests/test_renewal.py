import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brwlab.errors import ModelError
from brwlab.model import StepLaw, spine_law
from brwlab.oracles import gamblers_ruin
from brwlab.renewal import (
    curve_passage_law,
    deep_excursion,
    excursion_q,
    exit_table,
    overshoot_epsilon,
    overshoot_window,
    renewal_bound_functional,
    ruin_constant,
    theta_ladder,
    two_sided_exit,
)
from brwlab.spine import CurveFirstPassage

from conftest import UP_B


def green_nn(p, x, y):
    """Expected visits to y from x for a nearest-neighbour walk killed on reaching -1."""
    if x >= y:
        reach = 1.0 if p <= 0.5 else ((1 - p) / p) ** (x - y)
    else:
        reach = 1 - gamblers_ruin(p, x + 1, y - x, 0)
    above = 1.0 if p <= 0.5 else (1 - p) / p
    below = 0.0 if y == 0 else 1 - gamblers_ruin(p, y, 1, 0)
    return reach / (1 - p * above - (1 - p) * below)


def renewal_oracle(p, x, height=400):
    return math.fsum(green_nn(p, x, y) * math.exp(-y) for y in range(height))


# -- return probabilities ------------------------------------------------------------


def test_q_model_b(law_b):
    e = excursion_q(law_b)
    assert e.q == pytest.approx(2 * (1 - UP_B), abs=1e-10)
    assert e.q == pytest.approx(0.379033, abs=1e-6)


def test_q_model_a_recurrent(law_a):
    e = excursion_q(law_a)
    assert e.q == 1.0 and e.recurrent


def test_q_det_never_returns(det):
    assert excursion_q(spine_law(det)).q == 0.0


def test_q_K_increases_to_q(law_b, law_a):
    Ks = (1, 2, 3, 5, 8, 13, 40)
    for law in (law_a, law_b):
        e = excursion_q(law, K_list=Ks)
        vals = [e.q_K[k] for k in Ks]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert all(0 < v < 1 for v in vals) or law is law_b
    e = excursion_q(law_b, K_list=(60,))
    assert e.q_K[60] == pytest.approx(e.q, abs=1e-12)


def test_q_K_model_a_gamblers_ruin(law_a):
    # up first returns at once; down first must climb 1 before falling K more
    e = excursion_q(law_a, K_list=(1, 3, 10))
    for K in (1, 3, 10):
        assert e.q_K[K] == pytest.approx(0.5 + 0.5 * (1 - gamblers_ruin(0.5, K, 1, 0)), abs=1e-12)


@pytest.mark.parametrize("name", ["law_b", "det"])
def test_q_dp_agrees_with_monte_carlo(name, request):
    law = request.getfixturevalue(name)
    law = spine_law(law) if name == "det" else law
    dp = excursion_q(law, K_list=(2, 5))
    mc = excursion_q(law, K_list=(2, 5), method="monteCarlo", samples=200_000, seed=3)
    assert abs(mc.q - dp.q) <= 4 * max(mc.q_stderr, 1e-12)
    for K in (2, 5):
        assert abs(mc.q_K[K] - dp.q_K[K]) <= 4 * max(mc.q_K_stderr[K], 1e-12)


# -- deep excursions -------------------------------------------------------------------


def test_q_of_five(law_a):
    assert deep_excursion(law_a, [5]).qn_table[5] == pytest.approx(0.1, abs=1e-12)


def test_n_q_n_is_half(law_a):
    stats = deep_excursion(law_a, range(1, 60))
    for n, q in stats.qn_table.items():
        assert n * q == pytest.approx(0.5, abs=1e-12)
    assert stats.theta_ladder == pytest.approx(0.5, abs=1e-15)
    assert stats.theta_fit == pytest.approx(0.5, abs=1e-10)


def test_theta_needs_centered_walk(law_b):
    with pytest.raises(ModelError):
        deep_excursion(law_b, [1, 2])
    with pytest.raises(ModelError):
        theta_ladder(law_b)


def test_theta_lazy_walk():
    # the walk goes negative before returning only by a first step to -1
    law = StepLaw.from_pmf({-1: 0.25, 0: 0.5, 1: 0.25})
    assert theta_ladder(law) == pytest.approx(0.25, abs=1e-14)


# -- two-sided exit ----------------------------------------------------------------------


def test_exit_symmetric(law_a):
    assert two_sided_exit(law_a, 5, 5, 0) == pytest.approx(0.5, abs=1e-12)
    assert two_sided_exit(law_a, 9, 1, 0) == pytest.approx(0.1, abs=1e-12)


def test_exit_model_b_closed_form(law_b):
    assert two_sided_exit(law_b, 10, 10, 0) == pytest.approx(gamblers_ruin(UP_B, 10, 10, 0), abs=1e-12)


@given(a=st.integers(1, 30), b=st.integers(1, 30), data=st.data())
def test_exit_table_matches_gamblers_ruin(a, b, data, law_a, law_b):
    x = data.draw(st.integers(-a + 1, b - 1))
    for law in (law_a, law_b):
        up = law.prob(1)
        assert exit_table(law, a, b)[x] == pytest.approx(gamblers_ruin(up, a, b, x), abs=1e-12)


def test_exit_rejects_outside_start(law_a):
    with pytest.raises(ModelError):
        two_sided_exit(law_a, 3, 3, 3)


def test_ruin_constant_positive(law_a):
    c, where = ruin_constant(law_a, max_ab=15)
    assert c > 0
    a, b, x = where
    assert -a < x < b


# -- renewal functional -------------------------------------------------------------------


def test_renewal_deterministic_step():
    r = renewal_bound_functional(StepLaw.from_pmf({1: 1.0}), [0])
    assert r.values[0] == pytest.approx(1 / (1 - math.exp(-1)), abs=1e-12)


def test_renewal_model_b_bounded_and_monotone(law_b):
    r = renewal_bound_functional(law_b, range(21))
    assert r.bounded and r.monotone and r.converged
    for x in (0, 3, 20):
        assert r.values[x] == pytest.approx(renewal_oracle(UP_B, x), rel=1e-10)


def test_renewal_model_a_green_function(law_a):
    # the walk killed below 0 visits every height y an expected 2 min(x, y) + 2 times
    r = renewal_bound_functional(law_a, [0, 2])
    for x in (0, 2):
        exact = math.fsum(2 * min(x + 1, y + 1) * math.exp(-y) for y in range(400))
        assert r.values[x] == pytest.approx(exact, rel=1e-10)
        assert r.values[x] == pytest.approx(renewal_oracle(0.5, x), rel=1e-10)


def test_renewal_horizon_table_nondecreasing(law_b):
    r = renewal_bound_functional(law_b, [0, 5])
    hs = sorted(r.horizon_table)
    for x in (0, 5):
        vals = [r.horizon_table[h][x] for h in hs]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


def test_renewal_needs_movement():
    with pytest.raises(ModelError):
        renewal_bound_functional(StepLaw.from_pmf({0: 1.0}), [0])


# -- overshoot window --------------------------------------------------------------------


def test_overshoot_n4(law_a):
    w = overshoot_window(law_a, 4)
    assert w.epsilon_n == pytest.approx(0.25, abs=1e-15)
    assert w.K_n == pytest.approx(2.0, abs=1e-15)
    assert w.windowed_prob == pytest.approx(1 / 8, abs=1e-12)


def test_overshoot_n1_both_terms(law_a):
    # E[S^2 1{2S <= -1}] = 1/2 and E[S^2 min(|S|, 1)] = 1
    w = overshoot_window(law_a, 1)
    assert w.epsilon_n == pytest.approx(1.5, abs=1e-15)
    assert w.K_n == pytest.approx(math.sqrt(1.5), abs=1e-15)


@given(n=st.integers(1, 200))
def test_windowed_probability_equals_q_n(n, law_a):
    assert overshoot_window(law_a, n).windowed_prob == pytest.approx(1 / (2 * n), abs=1e-12)


@given(n=st.integers(5, 100))
def test_first_epsilon_term_vanishes_for_bounded_steps(n):
    law = StepLaw.from_pmf({-2: 0.25, 0: 0.25, 2: 0.5})
    steps = np.array([-2, 0, 2])
    probs = np.array([0.25, 0.25, 0.5])
    second = float(probs @ (steps**2 * np.minimum(np.abs(steps), n) / n))
    assert overshoot_epsilon(law, n) == pytest.approx(second, abs=1e-15)


# -- curve passage ------------------------------------------------------------------------


def test_curve_passage_first_term_is_q(law_a):
    curve = CurveFirstPassage(6, 1.0, 2.0)
    res = curve_passage_law(law_a, curve, k_max=1, samples=10_000, seed=1)
    h = math.ceil(float(curve.f(1)))
    assert res[1][0] == pytest.approx(1 / (2 * h), abs=1e-12)


def test_curve_passage_probabilities_sum_below_one(law_a):
    curve = CurveFirstPassage(3, 1.0, 1.0)
    res = curve_passage_law(law_a, curve, k_max=curve.horizon, samples=10_000, seed=1)
    total = sum(v[0] for v in res.values())
    assert 0 < total <= 1 + 1e-12
