"""Spine random walk, optional lines and their moments.

The many-to-one change of measure turns sums over a whole tree into
expectations over a single random walk whose steps follow the tilted intensity
(the ``StepLaw``).  An optional line is the set of particles stopped by a rule
on their ancestral path; each rule here is Markov in a small summary state
(position plus one auxiliary integer), which makes its moments computable by
an absorbing-chain linear solve on a finite window of positions.

Window truncation is never silent.  Leaving the window on a side where the
walk comes back for sure and lands exactly on the boundary (recurrent or
inward-drifting and skip-free towards the window) is handled exactly; on a
side where it drifts away, the return probability is bounded by a Lundberg
exponent and the answer is bracketed.  The window doubles until the bracket
is below the requested tolerance.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .errors import ModelError, PrecisionError, UnsupportedError
from .model import find_tstar, tilt_to_spine
from .rng import SPINE, stream

RUNNING, STOPPED, DEAD = 0, 1, 2
DRIFT_TOL = 1e-9
MAX_STATES = 4_000_000


# ---------------------------------------------------------------------------
# optional lines


@dataclass(frozen=True)
class Horizon:
    """tau = k."""

    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ModelError("horizon must be non-negative")

    @property
    def aux_size(self):
        return self.k + 1

    def start(self):
        return 0, (STOPPED if self.k == 0 else RUNNING)

    def advance(self, x, aux):
        aux = aux + 1
        return aux, np.where(aux >= self.k, STOPPED, RUNNING)

    def exact_window(self, law):
        return (min(0, self.k * int(law.steps.min())), max(0, self.k * int(law.steps.max())))

    special = (0,)
    band = (-math.inf, math.inf)


@dataclass(frozen=True)
class LevelCrossing:
    """tau = first k with S_k >= level (all earlier positions are below it)."""

    level: int

    @property
    def aux_size(self):
        return 1

    def start(self):
        return 0, (STOPPED if 0 >= self.level else RUNNING)

    def advance(self, x, aux):
        return aux, np.where(x >= self.level, STOPPED, RUNNING)

    def exact_window(self, law):
        return None

    @property
    def special(self):
        return (0, self.level)

    @property
    def band(self):
        return (self.level, math.inf)


@dataclass(frozen=True)
class LocalTimeThreshold:
    """tau = first k with #{j <= k : S_j = level} >= threshold.

    With a barrier ``c`` the walk is killed (tau = inf) as soon as it goes
    below ``-c``.
    """

    level: int
    threshold: int
    barrier: Optional[float] = None

    def __post_init__(self):
        if self.threshold < 1:
            raise ModelError("threshold must be at least 1")

    @property
    def aux_size(self):
        return self.threshold

    def start(self):
        v = int(self.level == 0)
        return v, (STOPPED if v >= self.threshold else RUNNING)

    def advance(self, x, aux):
        aux = aux + (x == self.level)
        status = np.where(aux >= self.threshold, STOPPED, RUNNING)
        if self.barrier is not None:
            status = np.where(x < -self.barrier, DEAD, status)
        return np.minimum(aux, self.threshold - 1), status

    def exact_window(self, law):
        return None

    @property
    def special(self):
        out = (0, self.level)
        if self.barrier is not None:
            out += (math.floor(-self.barrier),)
        return out

    @property
    def band(self):
        return (self.level, self.level)


@dataclass(frozen=True)
class CurveFirstPassage:
    """tau = first i with S_i <= -f(l_i), l_i the number of visits to 0 up to i.

    ``f(t) = n * alpha * sqrt((1 - t / (d n^2))_+)``.
    """

    n: int
    alpha: float
    d: float

    def __post_init__(self):
        if self.n < 1 or not self.alpha > 0 or not self.d > 0:
            raise ModelError("curve needs n >= 1 and positive alpha, d")

    @property
    def horizon(self):
        """Local time at which the curve reaches 0."""
        return math.ceil(self.d * self.n**2)

    def f(self, t):
        t = np.asarray(t, dtype=float)
        return self.n * self.alpha * np.sqrt(np.maximum(1 - t / (self.d * self.n**2), 0.0))

    @property
    def aux_size(self):
        return self.horizon

    def start(self):
        # aux stores l - 1; S_0 = 0 is the first visit
        return 0, (STOPPED if 0 <= -self.f(1) else RUNNING)

    def advance(self, x, aux):
        aux = aux + (x == 0)
        status = np.where(x <= -self.f(aux + 1), STOPPED, RUNNING)
        return np.minimum(aux, self.horizon - 1), status

    def exact_window(self, law):
        return None

    @property
    def special(self):
        return (0, -math.ceil(self.n * self.alpha))

    band = (-math.inf, 0)

    def identity_residual(self, tstar, points=100):
        """Max over a grid of |t* f(t) + theta' int_0^t ds / f(s) - alpha t* n|.

        Uses theta' = alpha^2 t* / (2 d).  The integral is evaluated by
        quadrature after substituting u = sqrt(1 - s / (d n^2)), which removes
        the endpoint singularity.
        """
        n, a, d = self.n, self.alpha, self.d
        D = d * n**2
        theta_p = a * a * tstar / (2 * d)
        worst = 0.0
        for t in np.linspace(0.0, D, points):
            u_end = math.sqrt(max(1 - t / D, 0.0))
            integral, _ = quad(lambda u: 2 * D / (n * a), u_end, 1.0, epsabs=1e-12, epsrel=1e-12)
            lhs = tstar * float(self.f(t)) + theta_p * integral
            worst = max(worst, abs(lhs - a * tstar * n))
        return worst


LineSpec = (Horizon, LevelCrossing, LocalTimeThreshold, CurveFirstPassage)


def line_to_json(line):
    return {"variant": type(line).__name__, **line.__dict__}


def line_from_json(obj):
    kinds = {c.__name__: c for c in LineSpec}
    obj = dict(obj)
    kind = kinds.get(obj.pop("variant", None))
    if kind is None:
        raise ModelError("unknown line variant")
    return kind(**obj)


@dataclass(frozen=True)
class LineState:
    """Summary of a path prefix for a line: last position, its index, auxiliary counter, status.

    ``status`` is ``running`` (tau later than ``time``), ``stopped`` (tau equals
    ``time``), ``passed`` (tau earlier) or ``dead``.
    """

    position: int
    time: int
    aux: int
    status: str = "running"


def state_of(line, positions):
    """Fold a prefix ``(0, s_1, ..., s_T)`` into its LineState."""
    if positions[0] != 0:
        raise ModelError("paths start at 0")
    aux, st = line.start()
    status = {RUNNING: "running", STOPPED: "stopped", DEAD: "dead"}[int(st)]
    for t, x in enumerate(positions[1:], start=1):
        if status in ("stopped", "passed"):
            status = "passed"
            continue
        if status == "dead":
            continue
        aux, st = line.advance(np.asarray(x), np.asarray(aux))
        aux = int(aux)
        status = {RUNNING: "running", STOPPED: "stopped", DEAD: "dead"}[int(st)]
    return LineState(int(positions[-1]), len(positions) - 1, int(aux), status)


# ---------------------------------------------------------------------------
# spine sampling


@dataclass(frozen=True)
class SpinePath:
    positions: np.ndarray

    @property
    def increments(self):
        return np.diff(self.positions)

    def local_time(self, level=0):
        """#{j <= k : S_j = level} for every k."""
        return np.cumsum(self.positions == level)


def sample_spine(law, horizon, seed):
    if horizon < 0:
        raise ModelError("horizon must be non-negative")
    steps = law.sample(stream(seed, SPINE, 0), horizon)
    return SpinePath(np.concatenate([[0], np.cumsum(steps)]))


# ---------------------------------------------------------------------------
# walk constants


def lundberg_rates(law):
    """(down, up): exponents with E[exp(-down S)] = 1 (positive drift) and E[exp(up S)] = 1 (negative drift).

    A zero entry means no exponential decay on that side.
    """
    steps, probs = law.steps.astype(float), law.probs
    mean = float(probs @ steps)

    def root(sign):
        g = lambda lam: math.log(float(probs @ np.exp(sign * lam * steps)))
        hi = 1.0
        while g(hi) <= 0:
            hi *= 2
            if hi > 1e4:
                return 0.0
        return brentq(g, 1e-12, hi, xtol=1e-14)

    down = root(-1.0) if mean > DRIFT_TOL and steps.min() < 0 else 0.0
    up = root(1.0) if mean < -DRIFT_TOL and steps.max() > 0 else 0.0
    if mean > DRIFT_TOL and steps.min() >= 0:
        down = math.inf
    if mean < -DRIFT_TOL and steps.max() <= 0:
        up = math.inf
    return down, up


def _exp_decay(rate, dist):
    if rate == math.inf:
        return np.where(dist > 0, 0.0, 1.0)
    return np.exp(-rate * np.maximum(dist, 0.0))


# ---------------------------------------------------------------------------
# absorbing-chain solver


@dataclass
class Chain:
    """Sparse absorbing chain for ``line`` on positions ``lo..hi``."""

    line: object
    law: object
    lo: int
    hi: int
    exact: bool
    lu: object = None
    # per-state arrays, state index = (x - lo) * aux_size + aux
    xs: np.ndarray = None
    auxs: np.ndarray = None
    stop_terms: list = field(default_factory=list)  # (state idx, prob, x')
    escape_terms: list = field(default_factory=list)  # (state idx, prob, decay factor)

    def index(self, x, aux):
        return (np.asarray(x) - self.lo) * self.line.aux_size + np.asarray(aux)

    @property
    def size(self):
        return (self.hi - self.lo + 1) * self.line.aux_size


def _build_chain(line, law, lo, hi, exact):
    A = line.aux_size
    nx = hi - lo + 1
    n = nx * A
    if n > MAX_STATES:
        raise PrecisionError(f"state budget exceeded ({n} states)")
    xs = np.repeat(np.arange(lo, hi + 1), A)
    auxs = np.tile(np.arange(A), nx)
    steps, probs = law.steps, law.probs
    down, up = lundberg_rates(law)
    mean = float(probs @ steps)
    # exact re-entry: the walk returns for sure and lands on the boundary
    reenter_hi = mean <= DRIFT_TOL and steps.min() == -1
    reenter_lo = mean >= -DRIFT_TOL and steps.max() == 1
    bottom, top = line.band
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.ones(n)]
    stop, esc = [], []
    all_idx = np.arange(n)
    for s, p in zip(steps, probs):
        y = xs + s
        a2, st = line.advance(y, auxs)
        run = st == RUNNING
        inside = (y >= lo) & (y <= hi)
        m = run & inside
        rows.append(all_idx[m])
        cols.append((y[m] - lo) * A + a2[m])
        vals.append(np.full(m.sum(), -p))
        m_st = st == STOPPED
        stop.append((all_idx[m_st], np.full(m_st.sum(), p), y[m_st]))
        out_hi = run & (y > hi)
        out_lo = run & (y < lo)
        if out_hi.any():
            if reenter_hi:
                rows.append(all_idx[out_hi])
                cols.append((hi - lo) * A + a2[out_hi])
                vals.append(np.full(out_hi.sum(), -p))
            else:
                fac = _exp_decay(down, y[out_hi] - top) if math.isfinite(top) else np.ones(out_hi.sum())
                esc.append((all_idx[out_hi], p * fac))
        if out_lo.any():
            if reenter_lo:
                rows.append(all_idx[out_lo])
                cols.append(a2[out_lo])
                vals.append(np.full(out_lo.sum(), -p))
            else:
                fac = _exp_decay(up, bottom - y[out_lo]) if math.isfinite(bottom) else np.ones(out_lo.sum())
                esc.append((all_idx[out_lo], p * fac))
    # states that are not running (never entered) keep an identity row
    M = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    try:
        lu = splu(M)
    except RuntimeError as exc:
        raise PrecisionError(f"absorbing chain is singular on window [{lo}, {hi}]: {exc}") from exc
    chain = Chain(line, law, lo, hi, exact, lu, xs, auxs)
    chain.stop_terms = stop
    chain.escape_terms = esc
    return chain


def _rhs(chain, g):
    """Vector of one-step terminal contributions sum_s p g(x+s) 1{stop}."""
    b = np.zeros(chain.size)
    for idx, p, y in chain.stop_terms:
        np.add.at(b, idx, p * g(y))
    return b


def _escape_vec(chain):
    e = np.zeros(chain.size)
    for idx, w in chain.escape_terms:
        np.add.at(e, idx, w)
    return e


def _windows(line, law, initial=32):
    ew = line.exact_window(law)
    if ew is not None:
        yield ew[0], ew[1], True
        return
    lo_sp, hi_sp = min(line.special), max(line.special)
    width = initial
    while True:
        lo = lo_sp - width
        hi = hi_sp + width
        if isinstance(line, LocalTimeThreshold) and line.barrier is not None:
            lo = max(lo, math.floor(-line.barrier))
        if isinstance(line, CurveFirstPassage):
            lo = max(lo, -math.ceil(line.n * line.alpha))
        yield lo, hi, False
        width *= 2


def _stop_sup(line, law, g):
    """Upper bound of g over the positions where the line can stop."""
    smax, smin = int(law.steps.max()), int(law.steps.min())
    if isinstance(line, LevelCrossing):
        xs = np.array([line.level, line.level + max(smax - 1, 0)], dtype=float)
    elif isinstance(line, LocalTimeThreshold):
        xs = np.array([line.level], dtype=float)
    elif isinstance(line, CurveFirstPassage):
        xs = np.array([-math.ceil(line.n * line.alpha) + smin, 0], dtype=float)
    else:
        return math.inf
    return float(np.max(g(xs)))


@dataclass(frozen=True)
class Solution:
    """Bracketed values of E_state[g(S_tau) 1{tau < inf}] for several g."""

    chain: Chain
    lower: np.ndarray  # (states, columns)
    upper: np.ndarray
    names: tuple

    def at(self, x, aux, col=0):
        i = int(self.chain.index(x, aux))
        return float(self.lower[i, col]), float(self.upper[i, col])

    def width_at_start(self):
        aux0, _ = self.chain.line.start()
        i = int(self.chain.index(0, aux0))
        return float(np.max(self.upper[i] - self.lower[i]))


def _solve_terminal(line, law, gs, tol):
    names = tuple(gs)
    for lo, hi, exact in _windows(line, law):
        chain = _build_chain(line, law, lo, hi, exact)
        B = np.column_stack([_rhs(chain, gs[k]) for k in names])
        lower = chain.lu.solve(B)
        e = _escape_vec(chain)
        if e.any():
            ub = np.array([_stop_sup(line, law, gs[k]) for k in names])
            reach = chain.lu.solve(e)[:, None]
            # unreachable states may escape; avoid 0 * inf where no mass leaves
            with np.errstate(invalid="ignore"):
                upper = lower + np.where(reach > 0, reach * ub[None, :], 0.0)
        else:
            upper = lower.copy()
        sol = Solution(chain, lower, upper, names)
        width = sol.width_at_start()
        if width <= tol or exact:
            return sol
        if chain.size * 2 > MAX_STATES:
            raise PrecisionError(f"truncation bound {width:.3e} exceeds tolerance {tol:.1e}", bound=width)


def _terminal_functions(tstar):
    return {
        "weight": lambda y: np.ones_like(y, dtype=float),
        "count": lambda y: np.exp(tstar * np.asarray(y, dtype=float)),
    }


@lru_cache(maxsize=64)
def _cached_solution(line, law, tol):
    return _solve_terminal(line, law, _terminal_functions(law.tstar_used), tol)


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class LineMoments:
    expected_count: float
    expected_weight: float
    second_moment_weight: Optional[float] = None
    method: str = "exactDP"
    stderr_count: float = 0.0
    stderr_weight: float = 0.0
    truncation_bound: float = 0.0
    window: tuple = ()
    unresolved_fraction: float = 0.0
    certified: bool = True

    def as_dict(self):
        return dict(self.__dict__)


def line_first_moments(line, law, method="exactDP", tol=1e-10, samples=100_000, patience=10_000, seed=0):
    """E[#L] = E[e^{t* S_tau} 1{tau < inf}] and E[M_L] = P(tau < inf)."""
    if method == "exactDP":
        law.require_lattice()
        sol = _cached_solution(line, law, tol)
        aux0, st0 = line.start()
        if st0 == STOPPED:
            return LineMoments(1.0, 1.0, window=(0, 0))
        lo_w, up_w = sol.at(0, aux0, 0)
        lo_c, up_c = sol.at(0, aux0, 1)
        return LineMoments(
            expected_count=0.5 * (lo_c + up_c),
            expected_weight=0.5 * (lo_w + up_w),
            truncation_bound=max(up_c - lo_c, up_w - lo_w),
            window=(sol.chain.lo, sol.chain.hi),
        )
    if method == "monteCarlo":
        return _mc_first_moments(line, law, samples, patience, seed)
    raise ModelError(f"unknown method {method!r}")


def _mc_first_moments(line, law, samples, patience, seed):
    tstar = law.tstar_used
    aux0, st0 = line.start()
    if st0 == STOPPED:
        return LineMoments(1.0, 1.0, method="monteCarlo")
    rng = stream(seed, SPINE, 1)
    x = np.zeros(samples)
    aux = np.full(samples, aux0, dtype=np.int64)
    status = np.full(samples, RUNNING)
    for _ in range(patience):
        run = np.nonzero(status == RUNNING)[0]
        if run.size == 0:
            break
        x[run] += law.sample(rng, run.size)
        a2, st = line.advance(x[run], aux[run])
        aux[run] = a2
        status[run] = st
    stopped = status == STOPPED
    cnt = np.zeros(samples)
    cnt[stopped] = np.exp(tstar * x[stopped])
    w = stopped.astype(float)
    return LineMoments(
        expected_count=float(cnt.mean()),
        expected_weight=float(w.mean()),
        method="monteCarlo",
        stderr_count=float(cnt.std(ddof=1) / math.sqrt(samples)),
        stderr_weight=float(w.std(ddof=1) / math.sqrt(samples)),
        unresolved_fraction=float(np.mean(status == RUNNING)),
        certified=False,
    )


def stop_distribution(line, law, tol=1e-10):
    """Map x -> P(S_tau = x, tau < inf) from the initial state, over the solver window."""
    law.require_lattice()
    sol = _cached_solution(line, law, tol)
    chain = sol.chain
    aux0, st0 = line.start()
    if st0 == STOPPED:
        return {0: 1.0}
    targets = sorted({int(v) for _, _, y in chain.stop_terms for v in y})
    gs = {t: (lambda y, t=t: (np.asarray(y) == t).astype(float)) for t in targets}
    B = np.column_stack([_rhs(chain, gs[t]) for t in targets])
    H = chain.lu.solve(B)
    i = int(chain.index(0, aux0))
    return {t: float(H[i, j]) for j, t in enumerate(targets)}


def continuation_prob(line, law, state, tol=1e-10):
    """p = P(time <= tau < inf | prefix summarized by ``state``)."""
    if not isinstance(line, LineSpec):
        raise UnsupportedError(f"line {type(line).__name__} has no finite summary state")
    law.require_lattice()
    if state.status == "stopped":
        return 1.0
    if state.status in ("passed", "dead"):
        return 0.0
    sol = _cached_solution(line, law, tol)
    return _running_value(sol, state.position, state.aux)


def _running_value(sol, x, aux, col=0):
    chain = sol.chain
    if chain.lo <= x <= chain.hi:
        lo, up = sol.at(x, aux, col)
        return 0.5 * (lo + up)
    raise PrecisionError(f"state at {x} lies outside the solver window [{chain.lo}, {chain.hi}]")


def _child_probs(line, law, sol, x, aux, displacements):
    """Continuation probability of children of a running state at displacements."""
    chain = sol.chain
    y = x + np.asarray(displacements)
    a2, st = line.advance(y, np.full(len(y), aux))
    p = np.where(st == STOPPED, 1.0, 0.0)
    run = np.nonzero(st == RUNNING)[0]
    for j in run:
        yy = int(np.clip(y[j], chain.lo, chain.hi))
        p[j] = 0.5 * sum(sol.at(yy, int(a2[j]), 0))
    return p


def psi_eval(line, model, state, tstar=None, tol=1e-10):
    """E[sum over ordered distinct child pairs of e^{-t*V(u)} e^{-t*V(v)} p_u p_v] at ``state``."""
    if tstar is None:
        tstar = find_tstar(model)
    law = tilt_to_spine(model, tstar)
    if state.status != "running":
        return 0.0
    sol = _cached_solution(line, law, tol)
    return _psi(line, model, law, sol, tstar, state.position, state.aux)


def _psi(line, model, law, sol, tstar, x, aux, outcomes=None):
    from .model import LatticePmf

    disp = getattr(model.law, "displacement", None)
    if isinstance(disp, LatticePmf):
        atoms = np.asarray(disp.support)
        p = _child_probs(line, law, sol, x, aux, atoms)
        ew = float(disp.weights @ (np.exp(-tstar * atoms) * p))
        return model.factorial_moment2() * ew**2
    if outcomes is None:
        outcomes = model.brood_outcomes()
    atoms = sorted({d for _, b in outcomes for d in b})
    pmap = dict(zip(atoms, _child_probs(line, law, sol, x, aux, np.asarray(atoms))))
    total = 0.0
    for prob, b in outcomes:
        w = np.array([math.exp(-tstar * d) * pmap[d] for d in b])
        total += prob * (w.sum() ** 2 - (w**2).sum())
    return total


def line_second_moment(line, model, tol=1e-10):
    """E[M_L^2] = E[e^{-t* S_tau} 1{tau<inf}] + E[sum_{k<tau} e^{-t* S_k} psi(S_0..S_k)].

    Returns ``(value, info)``; ``info['certified']`` is false when the window
    was truncated, in which case ``info['window_change']`` reports how much
    the value moved under the last doubling of the window.
    """
    tstar = find_tstar(model)
    law = tilt_to_spine(model, tstar)
    law.require_lattice()
    aux0, st0 = line.start()
    if st0 == STOPPED:
        return 1.0, {"certified": True, "window_change": 0.0}
    outcomes = None if hasattr(model.law, "displacement") else model.brood_outcomes()
    prev = None
    for lo, hi, exact in _windows(line, law):
        chain = _build_chain(line, law, lo, hi, exact)
        w = chain.lu.solve(_rhs(chain, lambda y: np.ones_like(y, dtype=float)))[:, None]
        sol = Solution(chain, w, w, ("weight",))
        reward = np.zeros(chain.size)
        for i in range(chain.size):
            x, a = int(chain.xs[i]), int(chain.auxs[i])
            if isinstance(line, Horizon) and a >= line.k:
                continue
            reward[i] = math.exp(-tstar * x) * _psi(line, model, law, sol, tstar, x, a, outcomes)
        b = _rhs(chain, lambda y: np.exp(-tstar * np.asarray(y, dtype=float))) + reward
        h = chain.lu.solve(b)
        val = float(h[int(chain.index(0, aux0))])
        escaped = bool(_escape_vec(chain).any())
        if exact or not escaped:
            return val, {"certified": True, "window_change": 0.0, "window": (lo, hi)}
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val, {"certified": False, "window_change": abs(val - prev), "window": (lo, hi)}
        if chain.size * 2 > MAX_STATES:
            raise PrecisionError("second moment did not settle within the state budget",
                                 bound=None if prev is None else abs(val - prev))
        prev = val


# ---------------------------------------------------------------------------
# many-to-one, spine side


def spine_expectation(law, functional, k):
    """E[e^{t* S_k} f(S_0, ..., S_k)] by forward iteration over (position, state)."""
    from .functionals import forward, integrate

    law.require_lattice()
    tstar = law.tstar_used
    trans = list(zip(law.pmf.support, law.probs))
    layer = forward(functional, trans, k, weight=lambda x: math.exp(tstar * x))
    return float(integrate(functional, layer))
