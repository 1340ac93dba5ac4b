"""Excursion and renewal constants of an integer-valued random walk.

Notation: sigma_1 is the first return time to 0, q = P(sigma_1 < inf),
q_K the same probability restricted to excursions staying above -K, and
q(n) the probability that the excursion from 0 reaches -n or below.  For a
centered walk n q(n) tends to theta, computed here both from the ladder
formula and from a fit of exact q(n) values.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ModelError, PrecisionError
from .rng import MONTE_CARLO, stream
from .spine import DRIFT_TOL, LocalTimeThreshold, line_first_moments, lundberg_rates

THETA_AGREEMENT = 0.01


def _steps(law):
    law.require_lattice()
    return law.steps, law.probs


def _is_centered(law):
    return abs(float(law.probs @ law.steps)) <= DRIFT_TOL


def _require_centered(law):
    if not _is_centered(law):
        raise ModelError("theta and q(n) need a centered (boundary-case) spine walk")


def _solve_interval(law, lo, hi, outside, holes=()):
    """h(x) = sum_s p_s [h(x+s) if x+s running else outside(x+s)] on running states lo..hi minus holes.

    Returns a dict-like array ``h`` indexed by ``x - lo`` (holes hold 0) and
    the running mask.
    """
    steps, probs = _steps(law)
    xs = np.arange(lo, hi + 1)
    run = np.ones(len(xs), dtype=bool)
    for h in holes:
        if lo <= h <= hi:
            run[h - lo] = False
    idx = -np.ones(len(xs), dtype=np.int64)
    idx[run] = np.arange(run.sum())
    xr = xs[run]
    n = len(xr)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.ones(n)]
    b = np.zeros(n)
    for s, p in zip(steps, probs):
        y = xr + s
        inside = (y >= lo) & (y <= hi)
        j = np.full(n, -1)
        j[inside] = idx[y[inside] - lo]
        m = j >= 0
        rows.append(np.nonzero(m)[0])
        cols.append(j[m])
        vals.append(np.full(m.sum(), -p))
        if (~m).any():
            b[~m] += p * outside(y[~m])
    M = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    sol = np.atleast_1d(spsolve(M, b))
    h = np.zeros(len(xs))
    h[run] = sol
    return h, run


# ---------------------------------------------------------------------------
# return probabilities


@dataclass
class ExcursionStats:
    q: float
    q_K: dict = field(default_factory=dict)
    theta_ladder: float = math.nan
    qn_table: dict = field(default_factory=dict)
    theta_fit: float = math.nan
    method: str = "exactDP"
    q_stderr: float = 0.0
    q_K_stderr: dict = field(default_factory=dict)
    truncation_bound: float = 0.0
    recurrent: bool = False
    unresolved_fraction: float = 0.0


def excursion_q(law, K_list=(), method="exactDP", samples=1_000_000, patience=2_000, seed=0, tol=1e-12):
    """q = P(sigma_1 < inf) and q_K = P(sigma_1 < inf, min >= -K)."""
    if method == "exactDP":
        law.require_lattice()
        recurrent = _is_centered(law)
        if recurrent:
            q, bound = 1.0, 0.0
        else:
            res = line_first_moments(LocalTimeThreshold(0, 2), law, tol=tol)
            q, bound = res.expected_weight, res.truncation_bound
        qK = {}
        for K in K_list:
            res = line_first_moments(LocalTimeThreshold(0, 2, barrier=K), law, tol=tol)
            qK[K] = res.expected_weight
            bound = max(bound, res.truncation_bound)
        return ExcursionStats(q=q, q_K=qK, truncation_bound=bound, recurrent=recurrent)
    if method == "monteCarlo":
        return _mc_excursion_q(law, K_list, samples, patience, seed)
    raise ModelError(f"unknown method {method!r}")


def _mc_excursion_q(law, K_list, samples, patience, seed):
    """Walks from 0 until they return, escape for good, or run out of patience.

    A walk with positive drift sitting at height x comes back down to 0 with
    probability at most exp(-lambda x) (Lundberg); walks above the height
    where this bound drops under 1e-15 are declared escaped.
    """
    rng = stream(seed, MONTE_CARLO, 0)
    down, up = lundberg_rates(law)
    cut_hi = 35.0 / down if down > 0 else math.inf
    cut_lo = -35.0 / up if up > 0 else -math.inf
    x = np.zeros(samples)
    run_min = np.zeros(samples)
    active = np.ones(samples, dtype=bool)
    returned = np.zeros(samples, dtype=bool)
    for _ in range(patience):
        ids = np.nonzero(active)[0]
        if ids.size == 0:
            break
        x[ids] += law.sample(rng, ids.size)
        run_min[ids] = np.minimum(run_min[ids], x[ids])
        back = x[ids] == 0
        returned[ids[back]] = True
        gone = back | (x[ids] > cut_hi) | (x[ids] < cut_lo)
        active[ids[gone]] = False
    r = returned.astype(float)
    stats = ExcursionStats(q=float(r.mean()), method="monteCarlo",
                           q_stderr=float(r.std(ddof=1) / math.sqrt(samples)),
                           unresolved_fraction=float(active.mean()), recurrent=_is_centered(law))
    for K in K_list:
        rk = (returned & (run_min >= -K)).astype(float)
        stats.q_K[K] = float(rk.mean())
        stats.q_K_stderr[K] = float(rk.std(ddof=1) / math.sqrt(samples))
    return stats


# ---------------------------------------------------------------------------
# deep excursions


def _q_deep(law, n, tol=1e-13):
    """q(n) = P(min over the first excursion <= -n), bracketed if positive states are truncated."""
    if n <= 0:
        return 1.0, 1.0
    steps, probs = _steps(law)
    if steps.min() >= -1:
        # from above 0 the walk hits 0 before going negative: positive states are worth 0
        h, _ = _solve_interval(law, -n + 1, -1, lambda y: (y <= -n).astype(float))
        val = 0.0
        for s, p in zip(steps, probs):
            if s <= -n:
                val += p
            elif s < 0:
                val += p * h[s + n - 1]
        return val, val
    width = 64
    while True:
        lo_v = upper_v = None
        for out_hi in (0.0, 1.0):
            g = lambda y, o=out_hi: np.where(y <= -n, 1.0, np.where(y > 0, o, 0.0))
            h, _ = _solve_interval(law, -n + 1, width, g, holes=(0,))
            v = sum(p * (1.0 if s <= -n else (h[s + n - 1] if s != 0 else 0.0)) for s, p in zip(steps, probs))
            if out_hi == 0.0:
                lo_v = v
            else:
                upper_v = v
        if upper_v - lo_v <= tol:
            return lo_v, upper_v
        if width > 1_000_000:
            raise PrecisionError(f"q({n}) bracket {upper_v - lo_v:.3e} above tolerance", bound=upper_v - lo_v)
        width *= 2


def theta_ladder(law):
    """theta = E[|S_v| 1{v < sigma_1}] with v the first time the walk is negative."""
    _require_centered(law)
    steps, probs = _steps(law)
    value = float(sum(p * -s for s, p in zip(steps, probs) if s < 0))
    if steps.max() >= 1 and steps.min() < -1:
        # positive excursions can jump over 0; solve on a window of positive states
        g = lambda y: np.where(y < 0, -y.astype(float), 0.0)
        width = 64
        prev = None
        while True:
            h, _ = _solve_interval(law, 1, width, lambda y: np.where(y > width, 0.0, g(y)))
            cur = value + sum(p * h[s - 1] for s, p in zip(steps, probs) if 1 <= s <= width)
            if prev is not None and abs(cur - prev) <= 1e-13:
                return cur
            prev = cur
            width *= 2
    return value


def deep_excursion(law, n_list):
    """Exact q(n) for each n, theta from the ladder formula and from a fit of n q(n).

    The two values of theta must agree within 1 %; otherwise PrecisionError.
    """
    _require_centered(law)
    table = {}
    for n in n_list:
        lo, up = _q_deep(law, int(n))
        table[int(n)] = 0.5 * (lo + up)
    th = theta_ladder(law)
    ns = np.array(sorted(table), dtype=float)
    fit_ns = ns[len(ns) // 2:] if len(ns) >= 4 else ns
    y = np.array([n * table[int(n)] for n in fit_ns])
    if len(fit_ns) >= 2:
        # n q(n) = theta + c / n + ...
        A = np.column_stack([np.ones_like(fit_ns), 1.0 / fit_ns])
        th_fit = float(np.linalg.lstsq(A, y, rcond=None)[0][0])
    else:
        th_fit = float(y[0])
    if abs(th_fit - th) > THETA_AGREEMENT * th:
        raise PrecisionError(f"theta from the ladder formula ({th:.6g}) and from n q(n) ({th_fit:.6g}) disagree")
    return ExcursionStats(q=1.0, theta_ladder=th, qn_table=table, theta_fit=th_fit, recurrent=True)


def q_of(table, y):
    """q at a real height: q(y) = q(ceil y) for y > 0 and q(0) = 1."""
    if y <= 0:
        return 1.0
    return table[math.ceil(y - 1e-12)]


# ---------------------------------------------------------------------------
# overshoot window


@dataclass(frozen=True)
class OvershootWindow:
    n: int
    epsilon_n: float
    K_n: float
    windowed_prob: float


def overshoot_epsilon(law, n):
    """eps_n = E[S^2 1{2S <= -n}] + E[S^2 min(|S|, n) / n]."""
    steps, probs = _steps(law)
    s = steps.astype(float)
    first = float(probs @ (s**2 * (2 * s <= -n)))
    second = float(probs @ (s**2 * np.minimum(np.abs(s), n) / n))
    return first + second


def overshoot_window(law, n):
    """eps_n, K_n = max(1, n sqrt(eps_n)) and P(T'_{-n} < sigma_1, |S_T' + n| <= K_n)."""
    _require_centered(law)
    steps, probs = _steps(law)
    if not np.isfinite(float(probs @ steps.astype(float) ** 2)):
        raise ModelError("the step law needs a finite second moment")
    eps = overshoot_epsilon(law, n)
    K = max(1.0, n * math.sqrt(eps))
    inwin = lambda y: ((y <= -n) & (np.abs(y + n) <= K)).astype(float)
    if steps.min() < -1 and steps.max() > 1:
        raise ModelError("windowed probability needs a walk that is skip-free in one direction")
    lo = -n + 1
    h = _solve_interval(law, lo, -1, inwin)[0] if n > 1 else np.zeros(0)
    val = 0.0
    for s, p in zip(steps, probs):
        if s <= -n:
            val += p * float(inwin(np.array([s]))[0])
        elif s < 0:
            val += p * h[s - lo]
    if steps.min() < -1:
        # excursions above 0 may jump below it; add their contribution on a positive window
        val += _positive_side(law, n, inwin)
    return OvershootWindow(n, eps, K, val)


def _positive_side(law, n, g_neg, width=4096):
    steps, probs = _steps(law)
    lo = -n + 1
    hn = _solve_interval(law, lo, -1, g_neg)[0] if n > 1 else np.zeros(0)

    def outside(y):
        out = np.zeros(len(y))
        neg = (y < 0) & (y > -n)
        out[neg] = hn[y[neg] - lo]
        out[y <= -n] = g_neg(y[y <= -n])
        return out

    h, _ = _solve_interval(law, 1, width, outside)
    return float(sum(p * h[s - 1] for s, p in zip(steps, probs) if 1 <= s <= width))


# ---------------------------------------------------------------------------
# two-sided exit


def two_sided_exit(law, a, b, x):
    """P_x(walk enters (-inf, -a] before [b, inf)), first entrance after time 0."""
    if not -a < x < b:
        raise ModelError("x must lie strictly between -a and b")
    lo, hi = math.floor(-a) + 1, math.ceil(b) - 1
    h, _ = _solve_interval(law, lo, hi, lambda y: (y <= -a).astype(float))
    return float(h[int(x) - lo])


def exit_table(law, a, b):
    """P_x(T_{(-inf,-a]} < T_{[b,inf)}) for every integer x in (-a, b)."""
    lo, hi = -a + 1, b - 1
    h, _ = _solve_interval(law, lo, hi, lambda y: (y <= -a).astype(float))
    return dict(zip(range(lo, hi + 1), h))


def ruin_constant(law, max_ab=40):
    """Smallest ratio P_x(exit low first) / ((b - x + 1) / (b + a + 1)) over integer a, b <= max_ab."""
    best = math.inf
    where = None
    for a in range(1, max_ab + 1):
        for b in range(1, max_ab + 1):
            for x, p in exit_table(law, a, b).items():
                r = p * (b + a + 1) / (b - x + 1)
                if r < best:
                    best, where = r, (a, b, x)
    return best, where


# ---------------------------------------------------------------------------
# renewal functional


@dataclass
class RenewalFunctional:
    values: dict
    lower: dict
    upper: dict
    horizon_table: dict
    monotone: bool
    converged: bool
    bounded: bool
    window: int
    extrapolated: dict = field(default_factory=dict)


def renewal_bound_functional(law, x_grid, rate=1.0, horizons=(1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024),
                             tol=1e-12):
    """F(x) = E[sum_k 1{min_{i<=k} S_i + x >= 0} exp(-rate (S_k + x))].

    The value is found by a linear solve on heights ``0..W`` above the floor
    (W doubles until the bracket closes), and independently by iterating the
    finite-horizon sums, which must be nondecreasing in the horizon.
    """
    steps, probs = _steps(law)
    if np.all(steps == 0):
        raise ModelError("the walk must move with positive probability")
    s = steps.astype(float)
    xg = np.asarray(x_grid, dtype=int)
    m = float(probs @ np.exp(-rate * s))
    G = 1.0 / (1.0 - m) if m < 1 else math.inf
    width = max(64, int(xg.max()) + 32)
    prev = None
    while True:
        W = width
        # value beyond W, killed at height < 0; reward exp(-rate y) at each visit
        h_lo, h_up = _renewal_solve(law, W, rate, G)
        lo_v = {int(x): float(h_lo[x]) for x in xg}
        up_v = {int(x): float(h_up[x]) for x in xg}
        gap = max(up_v[x] - lo_v[x] for x in lo_v)
        cur = np.array([lo_v[int(x)] for x in xg])
        settled = prev is not None and np.max(np.abs(cur - prev)) <= tol
        if gap <= tol or (not math.isfinite(gap) and settled) or width > 200_000:
            break
        prev = cur
        width *= 2
    table, monotone = _renewal_horizons(law, xg, rate, horizons)
    last = np.array([table[horizons[-1]][int(x)] for x in xg])
    before = np.array([table[horizons[-2]][int(x)] for x in xg])
    converged = bool(np.max(np.abs(last - before)) <= 1e-8 * max(1.0, np.max(np.abs(last))))
    values = {int(x): 0.5 * (lo_v[int(x)] + up_v[int(x)]) if math.isfinite(up_v[int(x)]) else lo_v[int(x)]
              for x in xg}
    bounded = bool(all(math.isfinite(v) for v in values.values()))
    # recurrent walks converge like T^{-1/2}: F = 2 F_{4T} - F_T removes the leading term
    extrap = {}
    if len(horizons) >= 3 and horizons[-1] == 4 * horizons[-3]:
        extrap = {int(x): 2 * table[horizons[-1]][int(x)] - table[horizons[-3]][int(x)] for x in xg}
    return RenewalFunctional(values, lo_v, up_v, table, monotone, converged, bounded, width, extrap)


def _renewal_solve(law, W, rate, G):
    steps, probs = _steps(law)
    reward = lambda y: np.exp(-rate * y.astype(float))
    reenter = float(probs @ steps) <= DRIFT_TOL and steps.min() == -1
    # running states 0..W, reward collected at each visit
    xs = np.arange(0, W + 1)
    n = len(xs)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.ones(n)]
    b_lo = reward(xs).astype(float)
    b_up = b_lo.copy()
    for s, p in zip(steps, probs):
        y = xs + s
        inside = (y >= 0) & (y <= W)
        rows.append(np.nonzero(inside)[0])
        cols.append(y[inside])
        vals.append(np.full(inside.sum(), -p))
        above = y > W
        if above.any():
            if reenter:
                rows.append(np.nonzero(above)[0])
                cols.append(np.full(above.sum(), W))
                vals.append(np.full(above.sum(), -p))
            b_up[above] += p * (np.exp(-rate * y[above]) * G if math.isfinite(G) else math.inf)
    M = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    h_lo = spsolve(M, b_lo)
    if math.isfinite(G):
        h_up = spsolve(M, b_up)
    else:
        h_up = np.full(n, math.inf)
    return h_lo, h_up


def _renewal_horizons(law, xg, rate, horizons):
    """Finite-horizon sums F_T(x) = E[sum_{k<=T} ...] by exact forward iteration."""
    steps, probs = _steps(law)
    T = max(horizons)
    top = int(xg.max()) + T * max(int(steps.max()), 0) + 1
    xs = np.arange(0, top + 1)
    n = len(xs)
    rows, cols, vals = [], [], []
    for s, p in zip(steps, probs):
        y = xs + s
        ok = (y >= 0) & (y <= top)
        rows.append(np.nonzero(ok)[0])
        cols.append(y[ok])
        vals.append(np.full(ok.sum(), p))
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    r = np.exp(-rate * xs.astype(float))
    acc = r.copy()
    term = r.copy()
    table = {}
    monotone = True
    last = None
    for k in range(1, T + 1):
        term = P @ term
        acc = acc + term
        if k in horizons:
            cur = {int(x): float(acc[x]) for x in xg}
            if last is not None and any(cur[x] < last[x] - 1e-15 for x in cur):
                monotone = False
            table[k] = cur
            last = cur
    return table, monotone


# ---------------------------------------------------------------------------
# curve first passage


def curve_passage_law(law, curve, k_max=3, samples=1_000_000, seed=0, max_steps=100_000):
    """P(l_tau = k) for k = 1..k_max by the excursion product formula and by simulation.

    Returns ``{k: (product, mc, stderr)}``.  The simulation collapses each
    excursion above 0 into a single step back to 0, which is exact for a
    centered walk whose downward steps are -1: such an excursion returns to 0
    without touching the negative half-line and cannot trigger the stop.
    """
    _require_centered(law)
    steps, probs = _steps(law)
    heights = sorted({math.ceil(float(curve.f(j)) - 1e-12) for j in range(1, k_max + 1)} - {0})
    table = {h: 0.5 * sum(_q_deep(law, h)) for h in heights}
    product = {}
    alive = 1.0
    for k in range(1, k_max + 1):
        qk = q_of(table, float(curve.f(k)))
        product[k] = alive * qk
        alive *= 1 - qk
    mc = _mc_curve(law, curve, k_max, samples, seed, max_steps)
    return {k: (product[k], mc[k][0], mc[k][1]) for k in range(1, k_max + 1)}


def _mc_curve(law, curve, k_max, samples, seed, max_steps):
    steps = law.steps
    shortcut = steps.min() == -1
    rng = stream(seed, MONTE_CARLO, 1)
    x = np.zeros(samples, dtype=np.int64)
    ell = np.ones(samples, dtype=np.int64)
    result = np.zeros(samples, dtype=np.int64)  # 0 = undecided, k = stopped with l_tau = k, -1 = beyond k_max
    active = np.ones(samples, dtype=bool)
    thresholds = np.array([float(curve.f(j)) for j in range(0, k_max + 2)])
    # stop at time 0 if the curve is already 0
    stop0 = 0 <= -thresholds[1]
    if stop0:
        result[:] = 1
        active[:] = False
    for _ in range(max_steps):
        ids = np.nonzero(active)[0]
        if ids.size == 0:
            break
        x[ids] += law.sample(rng, ids.size)
        if shortcut:
            pos = ids[x[ids] > 0]
            x[pos] = 0
        zero = ids[x[ids] == 0]
        ell[zero] += 1
        over = ids[ell[ids] > k_max]
        result[over] = -1
        active[over] = False
        ids = ids[active[ids]]
        hit = ids[x[ids] <= -thresholds[ell[ids]]]
        result[hit] = ell[hit]
        active[hit] = False
    if active.any():
        raise PrecisionError(f"{int(active.sum())} simulated walks undecided after {max_steps} steps")
    out = {}
    for k in range(1, k_max + 1):
        ind = (result == k).astype(float)
        out[k] = (float(ind.mean()), float(ind.std(ddof=1) / math.sqrt(samples)))
    return out


def overshoot_scale(law, curve, local_time):
    """lambda_n = K at height floor(f(local_time)); a diagnostic for the windowed curve line."""
    h = math.floor(float(curve.f(local_time)))
    return overshoot_window(law, max(h, 1)).K_n
