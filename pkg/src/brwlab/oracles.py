"""Brute-force references used to check the rest of the package.

These routines favour transparency over speed: exhaustive enumeration of
brood outcomes, direct transfer recursions with the unnormalized intensity,
classical closed forms, and a bracketed value iteration for the tail of the
maximal number of visits to 0 along a ray.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .errors import ModelError, PrecisionError, UnsupportedError
from .functionals import forward, integrate
from .model import find_tstar, log_laplace
from .rng import MONTE_CARLO, stream

STATE_BUDGET = 2_000_000


# ---------------------------------------------------------------------------
# small-depth tree expectations


def _transitions(model, exact):
    if model.continuous or not model.lattice:
        raise UnsupportedError("exact tree expectations need a lattice model")
    if exact:
        return list(model.intensity(exact=True).items())
    atoms, masses = model.intensity()
    return [(int(a), float(m)) for a, m in zip(atoms, masses)]


def exact_expectation_dp(model, depth, functional, exact=None):
    """E[sum over |u| = depth of f(V(u_0), ..., V(u))] by the intensity transfer recursion.

    Rational arithmetic is used when every model probability is a Fraction
    (or when ``exact`` is forced true).
    """
    if depth > 10:
        raise ModelError("depth above 10 is outside the oracle's budget")
    if exact is None:
        exact = model.exact
    trans = _transitions(model, exact)
    zero = Fraction(0) if exact else 0.0
    layer = {(0, functional.start(0)): Fraction(1) if exact else 1.0}
    for _ in range(depth):
        nxt = {}
        for (x, s), m in layer.items():
            for d, w in trans:
                y = x + d
                key = (y, functional.update(s, y))
                nxt[key] = nxt.get(key, zero) + m * w
        if len(nxt) > STATE_BUDGET:
            raise PrecisionError(f"state budget exceeded ({len(nxt)} states)")
        layer = nxt
    return integrate(functional, layer, zero=zero)


def enumerate_expectation(model, depth, functional, exact=None):
    """Same expectation by recursing over every brood outcome of every particle on a path.

    Uses linearity only: the expected sum over generation ``depth`` is the
    sum, over brood outcomes of the root and each child in them, of the
    expected sum in the child's subtree.
    """
    if depth > 4:
        raise ModelError("enumeration is limited to depth 4")
    if exact is None:
        exact = model.exact
    outcomes = model.brood_outcomes(exact=exact)

    def rec(x, state, d):
        if d == depth:
            return functional.value(state, x)
        total = Fraction(0) if exact else 0.0
        for p, brood in outcomes:
            sub = Fraction(0) if exact else 0.0
            for disp in brood:
                y = x + disp
                sub = sub + rec(y, functional.update(state, y), d + 1)
            total = total + p * sub
        return total

    return rec(0, functional.start(0), 0)


def generation_law(model, depth, exact=None):
    """Joint law of generation ``depth`` as ``{sorted positions tuple: probability}``.

    Enumerates the broods of all particles of each generation jointly; only
    feasible for very small trees.
    """
    if exact is None:
        exact = model.exact
    outcomes = model.brood_outcomes(exact=exact)
    one = Fraction(1) if exact else 1.0
    law = {(0,): one}
    for _ in range(depth):
        nxt = {}
        for config, p in law.items():
            partial = {(): p}
            for x in config:
                step = {}
                for kids, w in partial.items():
                    for q, brood in outcomes:
                        key = kids + tuple(x + d for d in brood)
                        step[key] = step.get(key, 0) + w * q
                partial = step
                if len(partial) > STATE_BUDGET:
                    raise PrecisionError("joint enumeration exceeds its budget")
            for kids, w in partial.items():
                key = tuple(sorted(kids))
                nxt[key] = nxt.get(key, 0) + w
        law = nxt
    return law


def martingale_moments_bruteforce(model, depth, tstar=None):
    """(E[M_depth], E[M_depth^2]) with M = sum over generation ``depth`` of exp(-t* V)."""
    if tstar is None:
        tstar = find_tstar(model)
    m1 = m2 = 0.0
    for config, p in generation_law(model, depth, exact=False).items():
        w = math.fsum(math.exp(-tstar * x) for x in config)
        m1 += p * w
        m2 += p * w * w
    return m1, m2


# ---------------------------------------------------------------------------
# closed forms


def gamblers_ruin(up_prob, a, b, x):
    """P_x(nearest-neighbour walk reaches -a before b); ``b`` may be infinite."""
    if not -a < x < b:
        raise ModelError("x must lie strictly between -a and b")
    p = float(up_prob)
    if p == 0.5:
        if math.isinf(b):
            return 1.0
        return (b - x) / (a + b)
    r = (1 - p) / p
    if math.isinf(b):
        return r ** (x + a) if r < 1 else 1.0
    # P(reach b first) = (1 - r^{x+a}) / (1 - r^{a+b})
    return (r ** (x + a) - r ** (a + b)) / (1 - r ** (a + b))


def return_probability_nn(up_prob):
    """q for a nearest-neighbour walk with upward drift: first step down then climb back, or up then fall."""
    p = float(up_prob)
    down = (1 - p) / p if p > 0.5 else 1.0  # P(ever fall by one)
    up = 1.0 if p >= 0.5 else p / (1 - p)  # P(ever climb by one)
    return p * down + (1 - p) * up


# ---------------------------------------------------------------------------
# tail of N* = sup over rays of the number of visits to 0


@dataclass(frozen=True)
class TailDpConfig:
    """Window [-L, U] of starting levels, largest count k_max, iteration cap and tolerance.

    ``method`` is ``"newton"`` (one count layer at a time) or ``"sweep"``
    (plain value iteration over the whole grid).
    """

    L: int = 40
    U: int = 80
    k_max: int = 60
    max_iter: int = 200_000
    tol: float = 1e-13
    method: str = "newton"


@dataclass
class TailDpResult:
    k: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    iterations: dict
    policy: dict = field(default_factory=dict)

    def bracket(self, k):
        return float(self.lower[k]), float(self.upper[k])

    def width(self, k):
        return float(self.upper[k] - self.lower[k])

    def as_map(self):
        return {int(k): (float(lo), float(hi)) for k, lo, hi in zip(self.k, self.lower, self.upper)}


def descent_exponent(model, t_max=50.0):
    """Largest s found with phi(s) <= 0; exp(-s y) bounds the chance that a particle at y has a descendant at or below 0."""
    if model.negative_mass() == 0:
        return math.inf
    tstar = find_tstar(model)
    ts = np.linspace(tstar, t_max, 5000)
    vals = np.array([log_laplace(model, t) for t in ts])
    ok = np.nonzero(vals <= 1e-12)[0]
    i = ok[-1]
    if i + 1 < len(ts) and vals[i] < 0 < vals[i + 1]:
        return float(brentq(lambda t: log_laplace(model, t), ts[i], ts[i + 1], xtol=1e-14)) * (1 - 1e-12)
    return float(ts[i])


def _check_support(model):
    if model.continuous or not model.lattice:
        raise UnsupportedError("the tail recursion needs a lattice model")
    atoms, _ = model.intensity()
    if atoms.max() > 1:
        raise UnsupportedError("the tail recursion needs displacements in Z_- and {1}")


def nstar_tail_dp(model, cfg=TailDpConfig()):
    """Brackets for P(N* > k), k = 0..k_max.

    H_x(j), the probability that some ray below a particle at x visits 0 at
    least j more times, solves
    ``H_x(j) = 1 - E[prod over children (1 - H_{x+D}(j - 1{x+D = 0}))]`` with
    ``H(0) = 1``; the wanted solution is the minimal one, the limit of value
    iteration from 0.  Levels outside ``[-L, U]`` get 0 (lower bracket) or,
    for the upper bracket, 1 below the window and ``exp(-s y) H_0(j-1)``
    above it, with ``s`` from ``descent_exponent``: a particle above the
    window needs a descendant that lands on 0 before it can collect any
    visit.  P(N* > k) = H_0(k) because the root itself is the first visit.
    """
    _check_support(model)
    s_desc = descent_exponent(model)
    out, its = {}, {}
    for policy in ("lower", "upper"):
        op = _TailOperator(model, cfg, policy, s_desc)
        if cfg.method == "sweep":
            H, its[policy] = op.sweep()
        elif cfg.method == "newton":
            H, its[policy] = op.layered()
        else:
            raise ModelError(f"unknown method {cfg.method!r}")
        out[policy] = H[:, op.i0].copy()
    above = "exp(-s y) H_0(k-1)" if op.hits_zero else "exp(-s y)"
    return TailDpResult(np.arange(cfg.k_max + 1), out["lower"], out["upper"], its,
                        policy={"below": (0.0, 1.0), "above": (0.0, above), "s": s_desc})


class _TailOperator:
    """The tail recursion restricted to a window, with one boundary policy."""

    def __init__(self, model, cfg, policy, s_desc):
        self.cfg = cfg
        L, U = cfg.L, cfg.U
        self.xs = np.arange(-L, U + 1)
        self.W = len(self.xs)
        self.i0 = L
        law = model.law
        if hasattr(law, "displacement"):
            disp = law.displacement.as_dict()
            self.atoms = sorted(disp)
            self.mu = np.array([float(disp[a]) for a in self.atoms])
            counts = law.count_pmf.as_dict()
            self.ns = np.array(sorted(counts))
            self.pn = np.array([float(counts[n]) for n in self.ns])
            self.broods = None
        else:
            self.broods = [(float(p), b) for p, b in model.brood_outcomes()]
            self.atoms = sorted({d for _, b in self.broods for d in b})
        # from above the window a ray reaches 0 only through a first entry at or below 0;
        # when the down steps are -1 that entry is at 0 itself and uses up one visit
        self.hits_zero = min(self.atoms) == -1
        self.maps = []
        for a in self.atoms:
            y = self.xs + a
            inside = (y >= -L) & (y <= U) & (y != 0)
            decay = np.zeros(self.W)
            if policy == "upper":
                decay[y < -L] = 1.0
                if not math.isinf(s_desc):
                    decay[y > U] = np.exp(-s_desc * y[y > U])
            self.maps.append((inside, y[inside] + L, y == 0, y > U, decay))

    def children(self, cur, prev):
        """Child values per atom; ``cur`` and ``prev`` hold layers j and j-1 along the last axis."""
        prev0 = prev[..., self.i0 : self.i0 + 1]
        vals = []
        for inside, idx, zero, top, decay in self.maps:
            v = np.broadcast_to(decay, cur.shape).copy()
            v[..., inside] = cur[..., idx]
            v[..., zero] = prev0
            if self.hits_zero:
                v[..., top] = np.minimum(1.0, decay[top] * prev0)
            vals.append(v)
        return vals

    def apply(self, vals, grad=False):
        """T from child values; with ``grad`` also dT/dv per atom."""
        if self.broods is None:
            g = sum(m * v for m, v in zip(self.mu, vals))
            T = np.zeros_like(g)
            dg = np.zeros_like(g)
            with np.errstate(divide="ignore", invalid="ignore"):
                lg = np.log1p(-np.minimum(g, 1.0))
                for n, p in zip(self.ns, self.pn):
                    if n == 0:
                        continue
                    T += p * -np.expm1(n * lg)
                    if grad:
                        dg += p * n * np.exp((n - 1) * lg) if n > 1 else p
            if not grad:
                return T
            return T, [m * dg for m in self.mu]
        T = np.zeros_like(vals[0])
        dv = [np.zeros_like(T) for _ in self.atoms]
        comp = {a: 1.0 - v for a, v in zip(self.atoms, vals)}
        index = {a: i for i, a in enumerate(self.atoms)}
        for p, brood in self.broods:
            if not brood:
                continue
            with np.errstate(divide="ignore"):
                ls = sum(np.log1p(-np.minimum(vals[index[d]], 1.0)) for d in brood)
            T += p * -np.expm1(ls)
            if grad:
                for d in set(brood):
                    m = brood.count(d)
                    rest = np.ones_like(T)
                    for c in brood:
                        if c != d:
                            rest = rest * comp[c]
                    dv[index[d]] += p * m * comp[d] ** (m - 1) * rest
        return (T, dv) if grad else T

    def sweep(self):
        """Jacobi value iteration on the whole (count, level) grid from H = 0."""
        K = self.cfg.k_max
        H = np.zeros((K + 1, self.W))
        H[0] = 1.0
        for it in range(1, self.cfg.max_iter + 1):
            new = np.empty_like(H)
            new[0] = 1.0
            new[1:] = self.apply(self.children(H[1:], H[:-1]))
            with np.errstate(invalid="ignore", divide="ignore"):
                rel = np.where(new > 0, np.abs(new - H) / new, 0.0)
            H = new
            if float(rel.max()) < self.cfg.tol:
                return H, it
        raise PrecisionError(f"value iteration did not settle in {self.cfg.max_iter} sweeps")

    def _jacobian(self, dv):
        rows, cols, data = [], [], []
        for (inside, idx, *_), d in zip(self.maps, dv):
            r = np.nonzero(inside)[0]
            rows.append(r)
            cols.append(idx)
            data.append(d[inside])
        J = sparse.csc_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.W, self.W))
        return sparse.identity(self.W, format="csc") - J

    def layered(self):
        """Solve one count layer at a time: monotone sweeps, then Newton once uniqueness is certified.

        With T concave and nondecreasing, a positive solution of
        ``(I - J(h)) x = 1`` at a sweep iterate ``h`` (which lies below the
        minimal fixed point) shows the spectral radius of J is below 1 there,
        so no other fixed point lies above the minimal one and Newton's limit
        is the minimal fixed point.
        """
        K, tol = self.cfg.k_max, self.cfg.tol
        H = np.zeros((K + 1, self.W))
        H[0] = 1.0
        sweeps = newton = 0
        for j in range(1, K + 1):
            prev = H[j - 1]
            h = np.zeros(self.W)
            while True:
                T, dv = self.apply(self.children(h, prev), grad=True)
                lu = splu(self._jacobian(dv), permc_spec="NATURAL", diag_pivot_thresh=0.0)
                if np.all(lu.solve(np.ones(self.W)) > 0):
                    break
                for _ in range(50):
                    h = self.apply(self.children(h, prev))
                    sweeps += 1
                if sweeps > self.cfg.max_iter:
                    raise PrecisionError(f"could not certify the count-{j} layer")
            for _ in range(100):
                step = lu.solve(T - h)
                h_new = np.clip(h + step, 0.0, 1.0)
                newton += 1
                done = np.all(np.abs(h_new - h) <= tol * np.maximum(h_new, 1e-300))
                h = h_new
                if done:
                    break
                T, dv = self.apply(self.children(h, prev), grad=True)
                lu = splu(self._jacobian(dv), permc_spec="NATURAL", diag_pivot_thresh=0.0)
            else:
                raise PrecisionError(f"Newton did not settle on the count-{j} layer")
            H[j] = h
        return H, {"sweeps": sweeps, "newton": newton}


@dataclass
class TailSlope:
    slope_lower: float
    slope_upper: float
    intercept_lower: float
    intercept_upper: float
    scale: str
    k_range: tuple

    @property
    def slope(self):
        return 0.5 * (self.slope_lower + self.slope_upper)

    @property
    def certified_width(self):
        return abs(self.slope_upper - self.slope_lower)


def tail_slope(result, k_lo, k_hi, scale="linear"):
    """Least-squares slope of log P(N* > k) against k (``linear``) or sqrt k (``sqrt``)."""
    ks = np.arange(k_lo, k_hi + 1)
    x = ks.astype(float) if scale == "linear" else np.sqrt(ks)
    A = np.column_stack([np.ones_like(x), x])
    out = []
    for arr in (result.lower, result.upper):
        y = np.log(arr[ks])
        if not np.all(np.isfinite(y)):
            raise PrecisionError("tail probabilities underflow on the fit range")
        c, m = np.linalg.lstsq(A, y, rcond=None)[0]
        out.append((m, c))
    return TailSlope(out[0][0], out[1][0], out[0][1], out[1][1], scale, (k_lo, k_hi))


def certify_slope(slope, rel=0.1):
    """Raise PrecisionError when the bracket of the slope is wider than ``rel`` times its size."""
    if slope.certified_width >= rel * abs(slope.slope):
        raise PrecisionError(f"slope bracket width {slope.certified_width:.3g} is not below "
                             f"{rel:.0%} of |slope| = {abs(slope.slope):.3g}")
    return slope


# ---------------------------------------------------------------------------
# simulation cross-check for P(N* > 1)


def simulate_revisit(model, trees, seed, depth=60, ceiling=6):
    """Fraction of trees in which some non-root particle sits at 0, with its standard error.

    Trees are grown jointly; particles above ``ceiling`` are discarded and
    the expected number of discarded particles that could still have reached
    0 is bounded with ``descent_exponent``.  Returns ``(p_hat, stderr, bias_bound)``.
    """
    s_desc = descent_exponent(model)
    rng = stream(seed, MONTE_CARLO, 7)
    owner = np.arange(trees)
    pos = np.zeros(trees)
    hit = np.zeros(trees, dtype=bool)
    pruned_mass = 0.0
    for _ in range(depth):
        if owner.size == 0:
            break
        counts, disp = model.sample_broods(rng, owner.size)
        owner = np.repeat(owner, counts)
        pos = np.repeat(pos, counts) + disp
        at0 = pos == 0
        hit[owner[at0]] = True
        high = pos > ceiling
        if high.any() and math.isfinite(s_desc):
            pruned_mass += float(np.exp(-s_desc * pos[high]).sum())
        keep = ~high & ~hit[owner]
        owner, pos = owner[keep], pos[keep]
    if owner.size:
        # particles still alive at the depth cap are counted as misses; bound them too
        pruned_mass += float(np.minimum(1.0, np.exp(-s_desc * np.maximum(pos, 0))).sum())
    h = hit.astype(float)
    return float(h.mean()), float(h.std(ddof=1) / math.sqrt(trees)), pruned_mass / trees
