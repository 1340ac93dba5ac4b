import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brwlab import functionals as F
from brwlab.errors import ModelError, UnsupportedError
from brwlab.model import find_tstar, spine_law
from brwlab.oracles import exact_expectation_dp, martingale_moments_bruteforce
from brwlab.spine import (
    CurveFirstPassage,
    Horizon,
    LevelCrossing,
    LineState,
    LocalTimeThreshold,
    continuation_prob,
    line_first_moments,
    line_from_json,
    line_second_moment,
    line_to_json,
    psi_eval,
    sample_spine,
    spine_expectation,
    state_of,
    stop_distribution,
)

from conftest import TSTAR_A, UP_B


@dataclass(frozen=True)
class FirstCrossing:
    """Indicator that the path reaches ``level`` for the first time at its last step."""

    level: int

    def start(self, x0):
        return (x0 >= self.level, False)

    def update(self, state, x):
        before, _ = state
        return (before or x >= self.level, (not before) and x >= self.level)

    def value(self, state, x):
        return 1 if state[1] else 0


@dataclass(frozen=True)
class Discount:
    """exp(-t V) at the last step."""

    t: float

    def start(self, x0):
        return None

    def update(self, state, x):
        return None

    def value(self, state, x):
        return math.exp(-self.t * x)


# -- spine sampling ---------------------------------------------------------------


def test_sample_spine_det(det):
    path = sample_spine(spine_law(det), 50, 0)
    assert np.array_equal(path.positions, np.arange(51))


def test_sample_spine_model_a_moments(law_a):
    inc = sample_spine(law_a, 10**6, 1).increments
    assert abs(inc.mean()) <= 4 * inc.std() / 1000
    assert inc.var() == pytest.approx(1.0, rel=0.01)


def test_sample_spine_model_b_mean(law_b):
    inc = sample_spine(law_b, 10**6, 2).increments
    mean = 2 * UP_B - 1
    assert abs(inc.mean() - mean) <= 4 * inc.std() / 1000
    assert mean == pytest.approx(0.620967, abs=1e-6)


def test_local_time_counts_zero_visits(law_a):
    path = sample_spine(law_a, 200, 3)
    lt = path.local_time()
    assert lt[0] == 1
    assert np.array_equal(lt, np.cumsum(path.positions == 0))


def test_sample_spine_rejects_negative_horizon(law_a):
    with pytest.raises(ModelError):
        sample_spine(law_a, -1, 0)


# -- first moments -------------------------------------------------------------------


def test_level_crossing_model_a(model_a, law_a):
    r = line_first_moments(LevelCrossing(1), law_a)
    assert r.expected_count == pytest.approx(2 + math.sqrt(3), abs=1e-3)
    assert r.expected_weight == pytest.approx(1.0, abs=1e-9)


def test_level_crossing_matches_tree_enumeration(model_a):
    # tree side through depth 10, plus e^{t*} P(symmetric walk stays below 1 for 10 steps)
    partial = sum(exact_expectation_dp(model_a, k, FirstCrossing(1)) for k in range(1, 11))
    tail = math.exp(TSTAR_A) * math.comb(10, 5) / 2**10
    assert partial + tail == pytest.approx(2 + math.sqrt(3), abs=1e-10)


@pytest.mark.parametrize("k", range(0, 11))
def test_horizon_moments_model_a(law_a, k):
    r = line_first_moments(Horizon(k), law_a)
    assert r.expected_count == pytest.approx(2.0**k, rel=1e-12)
    assert r.expected_weight == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", ["law_a", "law_b"])
def test_horizon_zero_is_the_root(name, request):
    r = line_first_moments(Horizon(0), request.getfixturevalue(name))
    assert r.expected_count == 1.0 and r.expected_weight == 1.0


@pytest.mark.parametrize("line", [Horizon(4), LevelCrossing(2), LocalTimeThreshold(0, 2, 3)])
def test_weight_and_count_from_stop_distribution(law_b, line):
    r = line_first_moments(line, law_b)
    dist = stop_distribution(line, law_b)
    assert sum(dist.values()) == pytest.approx(r.expected_weight, abs=1e-10)
    count = sum(math.exp(law_b.tstar_used * x) * p for x, p in dist.items())
    assert count == pytest.approx(r.expected_count, rel=1e-10)


def test_horizon_weight_is_tree_discounted_sum(model_b, law_b):
    for k in range(5):
        tree = exact_expectation_dp(model_b, k, Discount(law_b.tstar_used), exact=False)
        assert tree == pytest.approx(line_first_moments(Horizon(k), law_b).expected_weight, abs=1e-12)


def test_monte_carlo_first_moments_agree(law_b):
    line = LocalTimeThreshold(0, 2)
    dp = line_first_moments(line, law_b)
    mc = line_first_moments(line, law_b, method="monteCarlo", samples=200_000, patience=400, seed=4)
    assert abs(mc.expected_weight - dp.expected_weight) <= 4 * mc.stderr_weight
    assert abs(mc.expected_count - dp.expected_count) <= 4 * mc.stderr_count


# -- continuation probabilities ---------------------------------------------------------


def test_continuation_after_horizon_passed(law_a):
    state = state_of(Horizon(2), [0, 1, 0, 1])
    assert state.status == "passed"
    assert continuation_prob(Horizon(2), law_a, state) == 0.0


def test_continuation_drift_up_hits_level(law_b):
    p = continuation_prob(LocalTimeThreshold(0, 1), law_b, LineState(-3, 2, 0))
    assert p == pytest.approx(1.0, abs=1e-9)


def test_continuation_with_barrier_from_one(law_a):
    line = LocalTimeThreshold(0, 2, 0)
    state = state_of(line, [0, 1])
    assert (state.position, state.aux) == (1, 1)
    assert continuation_prob(line, law_a, state) == pytest.approx(1.0, abs=1e-9)


def test_continuation_rejects_unknown_line(law_a):
    with pytest.raises(UnsupportedError):
        continuation_prob(object(), law_a, LineState(0, 0, 0))


# -- psi and second moments ---------------------------------------------------------------


def test_psi_zero_when_line_passed(model_a):
    assert psi_eval(Horizon(1), model_a, LineState(0, 3, 0, "passed")) == 0.0


def test_psi_det(det):
    assert psi_eval(Horizon(3), det, LineState(0, 0, 0)) == pytest.approx(0.5, abs=1e-14)


def test_psi_model_a_by_brood_enumeration(model_a):
    t = find_tstar(model_a)
    brute = 0.0
    for prob, brood in model_a.brood_outcomes():
        w = [math.exp(-t * d) for d in brood]
        brute += prob * sum(w[i] * w[j] for i in range(len(w)) for j in range(len(w)) if i != j)
    assert psi_eval(Horizon(3), model_a, LineState(0, 0, 0)) == pytest.approx(brute, abs=1e-12)


def test_second_moment_horizon_zero(model_a, model_b):
    assert line_second_moment(Horizon(0), model_a)[0] == 1.0
    assert line_second_moment(Horizon(0), model_b)[0] == 1.0


@pytest.mark.parametrize("k", [1, 3, 6])
def test_second_moment_det_horizon(det, k):
    assert line_second_moment(Horizon(k), det)[0] == pytest.approx(1.0, abs=1e-12)


def test_second_moment_model_a_horizon_three(model_a):
    value, info = line_second_moment(Horizon(3), model_a)
    assert info["certified"]
    assert value == pytest.approx(martingale_moments_bruteforce(model_a, 3)[1], abs=1e-10)


@pytest.mark.parametrize("line", [Horizon(2), Horizon(5), LevelCrossing(1), LevelCrossing(3),
                                  LocalTimeThreshold(0, 2), LocalTimeThreshold(0, 3, 2)])
@pytest.mark.parametrize("name", ["model_a", "model_b"])
def test_second_moment_dominates_square_of_mean(line, name, request):
    m = request.getfixturevalue(name)
    second, _ = line_second_moment(line, m)
    first = line_first_moments(line, spine_law(m)).expected_weight
    assert second >= first**2 - 1e-12


# -- many-to-one ----------------------------------------------------------------------


@given(steps=st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=6),
       floor=st.integers(-3, 0), name=st.sampled_from(["model_a", "model_b", "det"]))
def test_many_to_one_random_functionals(steps, floor, name):
    from brwlab import model as models

    m = models.BUNDLED[name]()
    law = spine_law(m)
    k = len(steps)
    for f in (F.IncrementPattern(tuple(steps)), F.MinAtLeast(floor), F.VisitCount(0)):
        tree = float(exact_expectation_dp(m, k, f))
        spine = spine_expectation(law, f, k)
        assert spine == pytest.approx(tree, abs=1e-9 * max(1.0, abs(tree)))


# -- curve lines -------------------------------------------------------------------------


@given(n=st.integers(1, 40), alpha=st.floats(0.2, 3.0), d=st.floats(0.2, 5.0))
def test_curve_identity_residual(n, alpha, d):
    assert CurveFirstPassage(n, alpha, d).identity_residual(TSTAR_A) <= 1e-8


def test_curve_validation():
    with pytest.raises(ModelError):
        CurveFirstPassage(0, 1.0, 1.0)


# -- line encoding ------------------------------------------------------------------------


@pytest.mark.parametrize("line", [Horizon(3), LevelCrossing(2), LocalTimeThreshold(0, 2, 1.0),
                                  CurveFirstPassage(6, 1.0, 2.0)])
def test_line_json_round_trip(line):
    assert line_from_json(line_to_json(line)) == line


def test_line_json_unknown_variant():
    with pytest.raises(ModelError):
        line_from_json({"variant": "Nope"})
