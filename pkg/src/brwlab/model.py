"""Offspring laws, log-Laplace transform, critical tilt and spine step law."""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import logsumexp

from .errors import ModelError, NoRootError

PMF_TOL = 1e-12
T_MAX = 50.0
T_STEP = 0.01
H2_TOL = 1e-9


def _as_prob(x):
    """Decimal strings and Fractions stay exact, everything else becomes float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, int) and not isinstance(x, bool):
        return Fraction(x)
    return float(x)


def _is_exact(values):
    return all(isinstance(v, Fraction) for v in values)


# ---------------------------------------------------------------------------
# displacement laws


@dataclass(frozen=True)
class LatticePmf:
    """Probability mass function on a finite set of integers."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        support = tuple(int(s) for s in self.support)
        probs = tuple(_as_prob(p) for p in self.probs)
        if len(support) != len(probs) or not support:
            raise ModelError("support and probs must be non-empty and of equal length")
        if any(float(b) - float(a) <= 0 for a, b in zip(support, support[1:])):
            raise ModelError("support must be distinct and sorted")
        if any(not 0 <= float(p) <= 1 for p in probs):
            raise ModelError("probabilities must lie in [0, 1]")
        total = sum(probs)
        if abs(float(total) - 1.0) > PMF_TOL:
            raise ModelError(f"pmf sums to {float(total)!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_dict(cls, d):
        items = sorted((int(k), v) for k, v in d.items())
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items))

    @property
    def exact(self):
        return _is_exact(self.probs)

    @property
    def atoms(self):
        return np.asarray(self.support, dtype=float)

    @property
    def weights(self):
        return np.asarray([float(p) for p in self.probs])

    def as_dict(self):
        return dict(zip(self.support, self.probs))

    def mean(self):
        return float(self.weights @ self.atoms)

    def variance(self):
        return float(self.weights @ self.atoms**2) - self.mean() ** 2

    def sample(self, rng, size):
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        return np.asarray(self.support, dtype=np.int64)[np.minimum(idx, len(cdf) - 1)]


@dataclass(frozen=True)
class NormalDisplacement:
    mean: float
    sd: float

    def log_mgf(self, t):
        return -t * self.mean + 0.5 * (t * self.sd) ** 2

    def dlog_mgf(self, t):
        return -self.mean + t * self.sd**2

    def tilted(self, t):
        # exp(-t x) reweighting of a Gaussian is again Gaussian
        return NormalDisplacement(self.mean - t * self.sd**2, self.sd)

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sd, size)


@dataclass(frozen=True)
class UniformDisplacement:
    low: float
    high: float

    def log_mgf(self, t):
        a, b = self.low, self.high
        if abs(t) < 1e-12:
            return -t * 0.5 * (a + b)
        # log((e^{-ta} - e^{-tb}) / (t (b - a))) without overflow
        hi = -t * a if t > 0 else -t * b
        lo = -t * b if t > 0 else -t * a
        return hi + math.log(-math.expm1(lo - hi)) - math.log(abs(t) * (b - a))

    def dlog_mgf(self, t, h=1e-6):
        return (self.log_mgf(t + h) - self.log_mgf(t - h)) / (2 * h)

    def tilted(self, t):
        return TiltedUniform(self.low, self.high, t)

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)


@dataclass(frozen=True)
class TiltedUniform:
    """Uniform law reweighted by exp(-t x), sampled by inverse CDF."""

    low: float
    high: float
    t: float

    def sample(self, rng, size):
        u = rng.random(size)
        a, b, t = self.low, self.high, self.t
        if abs(t) < 1e-12:
            return a + (b - a) * u
        # inverse of F(x) = (1 - e^{-t(x-a)}) / (1 - e^{-t(b-a)})
        return a - np.log1p(u * np.expm1(-t * (b - a))) / t


ContinuousSpec = Union[NormalDisplacement, UniformDisplacement]


# ---------------------------------------------------------------------------
# offspring models


@dataclass(frozen=True)
class IidChild:
    """Child count from ``count_pmf``, displacements i.i.d. from ``displacement``."""

    count_pmf: LatticePmf
    displacement: Union[LatticePmf, NormalDisplacement, UniformDisplacement]

    def __post_init__(self):
        if min(self.count_pmf.support) < 0:
            raise ModelError("child counts must be non-negative")


@dataclass(frozen=True)
class ExplicitBrood:
    """Finite list of ``(probability, displacement vector)`` broods."""

    broods: tuple

    def __post_init__(self):
        broods = tuple(
            (_as_prob(p), tuple(float(x) if not float(x).is_integer() else int(x) for x in disp))
            for p, disp in self.broods
        )
        if not broods:
            raise ModelError("at least one brood is required")
        probs = [p for p, _ in broods]
        if any(not 0 <= float(p) <= 1 for p in probs):
            raise ModelError("brood probabilities must lie in [0, 1]")
        if abs(float(sum(probs)) - 1.0) > PMF_TOL:
            raise ModelError(f"brood probabilities sum to {float(sum(probs))!r}, not 1")
        object.__setattr__(self, "broods", broods)


@dataclass(frozen=True)
class OffspringModel:
    """Law of the brood point process of a branching random walk.

    Supercriticality (mean child count above one) is checked at construction
    unless ``require_supercritical`` is false, which is only meant for
    degenerate test trees such as a single path.
    """

    law: Union[IidChild, ExplicitBrood]
    name: str = ""
    require_supercritical: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.require_supercritical and not self.mean_count > 1:
            raise ModelError(f"model {self.name!r} is not supercritical (mean count {self.mean_count})")

    # -- structure ---------------------------------------------------------
    @property
    def continuous(self):
        return isinstance(self.law, IidChild) and not isinstance(self.law.displacement, LatticePmf)

    @property
    def lattice(self):
        if isinstance(self.law, IidChild):
            return isinstance(self.law.displacement, LatticePmf)
        return all(isinstance(x, int) for _, disp in self.law.broods for x in disp)

    @property
    def exact(self):
        """True when every probability is a Fraction and the model is lattice."""
        if not self.lattice:
            return False
        if isinstance(self.law, IidChild):
            return self.law.count_pmf.exact and self.law.displacement.exact
        return _is_exact(p for p, _ in self.law.broods)

    def count_distribution(self):
        """Child-count pmf as a dict ``n -> probability``."""
        if isinstance(self.law, IidChild):
            return dict(self.law.count_pmf.as_dict())
        out = {}
        for p, disp in self.law.broods:
            out[len(disp)] = out.get(len(disp), 0) + p
        return out

    @property
    def mean_count(self):
        return float(sum(n * float(p) for n, p in self.count_distribution().items()))

    def factorial_moment2(self):
        """E[N(N-1)] for the child count N."""
        return float(sum(n * (n - 1) * float(p) for n, p in self.count_distribution().items()))

    def intensity(self, exact=False):
        """Atoms and masses of the mean measure of the brood (finite-atom models).

        With ``exact=True`` returns a dict ``atom -> Fraction``.
        """
        if self.continuous:
            raise ModelError("intensity atoms are not defined for continuous displacements")
        if exact and not self.exact:
            raise ModelError("model probabilities are not rational")
        acc = {}
        if isinstance(self.law, IidChild):
            m = sum(n * p for n, p in self.law.count_pmf.as_dict().items())
            for x, p in self.law.displacement.as_dict().items():
                acc[x] = acc.get(x, 0) + m * p
        else:
            for p, disp in self.law.broods:
                for x in disp:
                    acc[x] = acc.get(x, 0) + p
        acc = {x: w for x, w in acc.items() if w != 0}
        if exact:
            return dict(sorted(acc.items()))
        atoms = np.array(sorted(acc), dtype=float)
        masses = np.array([float(acc[x]) for x in sorted(acc)])
        return atoms, masses

    def brood_outcomes(self, exact=False):
        """Enumerate ``(probability, displacement tuple)`` for every brood.

        Children are ordered, so an i.i.d. brood of two children with two
        possible displacements yields four outcomes.
        """
        if self.continuous:
            raise ModelError("brood enumeration needs discrete displacements")
        conv = (lambda p: p) if exact else float
        if isinstance(self.law, ExplicitBrood):
            return [(conv(p), disp) for p, disp in self.law.broods if p != 0]
        import itertools

        disp = self.law.displacement.as_dict()
        out = []
        for n, pn in self.law.count_pmf.as_dict().items():
            if pn == 0:
                continue
            for combo in itertools.product(disp.items(), repeat=n):
                prob = pn
                for _, px in combo:
                    prob = prob * px
                out.append((conv(prob), tuple(x for x, _ in combo)))
        return out

    def pair_sum(self, g):
        """E[sum over ordered pairs u != v of children of g(V(u)) g(V(v))].

        ``g`` maps an array of displacements to an array of values.
        """
        if isinstance(self.law, IidChild) and isinstance(self.law.displacement, LatticePmf):
            d = self.law.displacement
            eg = float(d.weights @ np.asarray(g(d.atoms), dtype=float))
            return self.factorial_moment2() * eg**2
        total = 0.0
        for p, disp in self.brood_outcomes():
            w = np.asarray(g(np.asarray(disp, dtype=float)), dtype=float)
            total += p * (w.sum() ** 2 - (w**2).sum())
        return float(total)

    def negative_mass(self):
        """mu((-inf, 0))."""
        if isinstance(self.law, IidChild) and not isinstance(self.law.displacement, LatticePmf):
            d = self.law.displacement
            if isinstance(d, NormalDisplacement):
                from scipy.stats import norm

                return self.mean_count * float(norm.cdf(0.0, d.mean, d.sd))
            frac = min(max((0.0 - d.low) / (d.high - d.low), 0.0), 1.0)
            return self.mean_count * frac
        atoms, masses = self.intensity()
        return float(masses[atoms < 0].sum())

    # -- sampling ------------------------------------------------------------
    def sample_broods(self, rng, n_parents):
        """Draw broods for ``n_parents`` particles.

        Returns ``(counts, displacements)`` with the displacements of parent
        ``i`` stored contiguously after those of parents ``0..i-1``.
        """
        if isinstance(self.law, IidChild):
            counts = self.law.count_pmf.sample(rng, n_parents)
            disp = self.law.displacement.sample(rng, int(counts.sum()))
            return counts, np.asarray(disp, dtype=float)
        probs = np.array([float(p) for p, _ in self.law.broods])
        sizes = np.array([len(d) for _, d in self.law.broods], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        flat = np.array([x for _, d in self.law.broods for x in d], dtype=float)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        idx = np.minimum(np.searchsorted(cdf, rng.random(n_parents), side="right"), len(cdf) - 1)
        counts = sizes[idx]
        total = int(counts.sum())
        if total == 0:
            return counts, np.zeros(0)
        starts = np.repeat(offsets[idx], counts)
        within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        return counts, flat[starts + within]

    # -- serialization ---------------------------------------------------------
    def to_json(self):
        def enc(p):
            return str(p) if isinstance(p, Fraction) else p

        out = {"v": 1, "name": self.name}
        if isinstance(self.law, IidChild):
            out["variant"] = "iid_child"
            out["count_pmf"] = {str(k): enc(p) for k, p in self.law.count_pmf.as_dict().items()}
            d = self.law.displacement
            if isinstance(d, LatticePmf):
                out["displacement_pmf"] = {str(k): enc(p) for k, p in d.as_dict().items()}
            elif isinstance(d, NormalDisplacement):
                out["displacement"] = {"kind": "normal", "mean": d.mean, "sd": d.sd}
            else:
                out["displacement"] = {"kind": "uniform", "low": d.low, "high": d.high}
        else:
            out["variant"] = "explicit_brood"
            out["broods"] = [{"p": enc(p), "displacements": list(disp)} for p, disp in self.law.broods]
        return out

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        if obj.get("v") != 1:
            raise ModelError(f"unsupported model schema version {obj.get('v')!r}")
        variant = obj.get("variant")
        name = obj.get("name", "")
        if variant == "iid_child":
            count = LatticePmf.from_dict(obj["count_pmf"])
            if "displacement_pmf" in obj:
                disp = LatticePmf.from_dict(obj["displacement_pmf"])
            else:
                spec = obj["displacement"]
                if spec["kind"] == "normal":
                    disp = NormalDisplacement(float(spec["mean"]), float(spec["sd"]))
                elif spec["kind"] == "uniform":
                    disp = UniformDisplacement(float(spec["low"]), float(spec["high"]))
                else:
                    raise ModelError(f"unknown displacement kind {spec['kind']!r}")
            law = IidChild(count, disp)
        elif variant == "explicit_brood":
            law = ExplicitBrood(tuple((b["p"], tuple(b["displacements"])) for b in obj["broods"]))
        else:
            raise ModelError(f"unknown model variant {variant!r}")
        return cls(law, name=name, require_supercritical=obj.get("require_supercritical", True))


def load_model(path):
    with open(path) as fh:
        return OffspringModel.from_json(json.load(fh))


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.to_json(), fh, indent=2)


# ---------------------------------------------------------------------------
# marks


@dataclass(frozen=True)
class Deterministic:
    value: float = 1.0

    @property
    def zeta(self):
        return math.inf

    def sample(self, rng, size):
        rng.random(size)  # keep stream consumption uniform across laws
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class ParetoTail:
    """P(eta > x) = (x / scale)^(-zeta) for x >= scale; zeta = inf means eta = scale."""

    zeta: float
    scale: float = 1.0

    def __post_init__(self):
        if not self.zeta > 0 or not self.scale > 0:
            raise ModelError("Pareto tail needs positive zeta and scale")

    def sample(self, rng, size):
        u = 1.0 - rng.random(size)  # in (0, 1]
        if math.isinf(self.zeta):
            return np.full(size, float(self.scale))
        return self.scale * u ** (-1.0 / self.zeta)


@dataclass(frozen=True)
class LogNormal:
    mu: float = 0.0
    sigma: float = 1.0

    @property
    def zeta(self):
        return math.inf

    def sample(self, rng, size):
        from scipy.special import ndtri

        u = 1.0 - rng.random(size)
        return np.exp(self.mu + self.sigma * ndtri(u))


MarkLaw = Union[Deterministic, ParetoTail, LogNormal]


# ---------------------------------------------------------------------------
# log-Laplace transform and critical tilt


def log_laplace(model, t):
    """phi(t) = log of the integral of exp(-t x) against the brood intensity."""
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if model.continuous:
        m = model.mean_count
        return math.log(m) + model.law.displacement.log_mgf(t)
    atoms, masses = model.intensity()
    return float(logsumexp(-t * atoms, b=masses))


def dlog_laplace(model, t):
    """Derivative of ``log_laplace`` in ``t``."""
    if model.continuous:
        return model.law.displacement.dlog_mgf(t)
    atoms, masses = model.intensity()
    logw = np.log(masses) - t * atoms
    w = np.exp(logw - logw.max())
    return float(-(w @ atoms) / w.sum())


def _phi_grid(model, ts):
    if model.continuous:
        return np.array([log_laplace(model, t) for t in ts])
    atoms, masses = model.intensity()
    return logsumexp(-np.outer(ts, atoms), b=masses, axis=1)


def find_tstar(model, tol=1e-10, t_max=T_MAX, step=T_STEP):
    """Minimal positive root of the log-Laplace transform.

    A scan over ``(0, t_max]`` locates the first sign change, which is then
    refined by Brent's method.  When the transform only touches zero (the
    boundary case) the minimum is located as the root of the derivative and
    accepted if the value there is at most ``tol``.
    """
    ts = np.arange(1, int(round(t_max / step)) + 1) * step
    vals = _phi_grid(model, ts)
    below = np.nonzero(vals <= 0)[0]
    phi = lambda t: log_laplace(model, t)
    if below.size:
        i = below[0]
        if vals[i] == 0:
            return float(ts[i])
        left = ts[i - 1] if i > 0 else 0.0
        # a tangential zero between grid points shows up as a local minimum
        tan = _tangent_root(model, left, ts[i], tol)
        if tan is not None:
            return tan
        return float(brentq(phi, left, ts[i], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))
    i = int(np.argmin(vals))
    lo = ts[i - 1] if i > 0 else ts[0] / 2
    hi = ts[min(i + 1, len(ts) - 1)]
    tan = _tangent_root(model, lo, hi, tol)
    if tan is None:
        raise NoRootError(f"phi has no positive root on (0, {t_max}]; min value {vals[i]:.3e} at t={ts[i]:.2f}")
    return tan


def _tangent_root(model, lo, hi, tol):
    dphi = lambda t: dlog_laplace(model, t)
    dl, dh = dphi(lo), dphi(hi)
    if not (dl < 0 < dh):
        return None
    t = brentq(dphi, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if log_laplace(model, t) <= tol:
        return float(t)
    return None


@dataclass(frozen=True)
class HypothesisReport:
    tstar: float
    phi_residual: float
    spine_mean: float
    spine_variance: float
    gamma: float
    regime: str
    second_moment_brood: float
    gw_extinction_qT: float
    diagnostics: str = ""

    def as_dict(self):
        return dict(self.__dict__)


def extinction_probability(model, tol=1e-15, max_iter=1_000_000):
    """Minimal fixed point of the child-count generating function."""
    dist = {n: float(p) for n, p in model.count_distribution().items()}
    ns = np.array(sorted(dist))
    ps = np.array([dist[n] for n in sorted(dist)])
    s = 0.0
    for _ in range(max_iter):
        nxt = float(ps @ s**ns)
        if abs(nxt - s) <= tol:
            return nxt
        s = nxt
    return s


def critical_speed(model, tstar=None, t_max=T_MAX):
    """gamma = -inf_{t>0} phi(t)/t (the asymptotic speed of the minimum)."""
    ts = np.arange(1, int(round(t_max / T_STEP)) + 1) * T_STEP
    ratio = _phi_grid(model, ts) / ts
    i = int(np.argmin(ratio))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
    res = minimize_scalar(lambda t: log_laplace(model, t) / t, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    cands = [float(ratio[i]), float(res.fun)]
    if tstar is not None:
        cands.append(0.0)  # phi(t*) = 0 exactly
    if not model.continuous:
        atoms, _ = model.intensity()
        cands.append(-float(atoms.min()))  # limit of phi(t)/t as t -> inf
    return -min(cands)


def classify_hypotheses(model, tol=H2_TOL):
    """Fill a HypothesisReport for ``model``; failures are reported as regime 'other'."""
    qT = extinction_probability(model)
    try:
        tstar = find_tstar(model)
    except NoRootError as exc:
        return HypothesisReport(math.nan, math.nan, math.nan, math.nan, critical_speed(model), "other",
                                math.nan, qT, diagnostics=str(exc))
    residual = log_laplace(model, tstar)
    law = tilt_to_spine(model, tstar)
    mean, var = law.mean(), law.variance()
    brood2 = model.pair_sum(lambda x: np.exp(-tstar * x))
    gamma = critical_speed(model, tstar)
    notes = []
    if abs(mean) > tol:
        regime = "H1prime" if mean > 0 and model.negative_mass() > 0 else "H1"
    elif var > 0:
        ts = np.arange(1, int(round(T_MAX / T_STEP)) + 1) * T_STEP
        if np.all(_phi_grid(model, ts) >= -1e-9):
            regime = "H2"
        else:
            regime = "other"
            notes.append("phi negative somewhere on (0, T_max]")
    else:
        regime = "other"
        notes.append("degenerate spine step law")
    return HypothesisReport(tstar, residual, mean, var, gamma, regime, brood2, qT, "; ".join(notes))


# ---------------------------------------------------------------------------
# spine step law


@dataclass(frozen=True)
class StepLaw:
    """Step distribution of the spine random walk.

    Lattice laws carry an exact ``pmf``; otherwise ``sampler`` is an object with
    a ``sample(rng, size)`` method and only Monte Carlo operations apply.
    """

    pmf: Optional[LatticePmf] = None
    sampler: object = None
    tstar_used: Optional[float] = None

    @classmethod
    def from_pmf(cls, d, tstar=None):
        return cls(pmf=LatticePmf.from_dict(d), tstar_used=tstar)

    @property
    def lattice(self):
        return self.pmf is not None

    @property
    def steps(self):
        return np.asarray(self.pmf.support, dtype=np.int64)

    @property
    def probs(self):
        return self.pmf.weights

    def prob(self, k):
        return float(self.pmf.as_dict().get(k, 0.0))

    def mean(self):
        if self.lattice:
            return self.pmf.mean()
        x = self.sample(np.random.default_rng(0), 10**6)
        return float(x.mean())

    def variance(self):
        if self.lattice:
            return self.pmf.variance()
        x = self.sample(np.random.default_rng(0), 10**6)
        return float(x.var())

    def sample(self, rng, size):
        if self.lattice:
            return self.pmf.sample(rng, size)
        return self.sampler.sample(rng, size)

    def require_lattice(self):
        if not self.lattice:
            from .errors import UnsupportedError

            raise UnsupportedError("exact dynamic programming needs a lattice step law")


@dataclass(frozen=True)
class DiscreteSampler:
    atoms: tuple
    probs: tuple

    def sample(self, rng, size):
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(cdf) - 1)
        return np.asarray(self.atoms, dtype=float)[idx]


def tilt_to_spine(model, tstar, tol=1e-10):
    """Step law of the spine: the brood intensity reweighted by exp(-t* x)."""
    residual = log_laplace(model, tstar)
    if abs(residual) > tol:
        raise ModelError(f"tilt is not normalized: phi(t*) = {residual:.3e}")
    if model.continuous:
        return StepLaw(sampler=model.law.displacement.tilted(tstar), tstar_used=float(tstar))
    atoms, masses = model.intensity()
    w = np.exp(np.log(masses) - tstar * atoms - residual)
    w = w / w.sum()
    if model.lattice:
        return StepLaw(pmf=LatticePmf(tuple(int(a) for a in atoms), tuple(w)), tstar_used=float(tstar))
    return StepLaw(sampler=DiscreteSampler(tuple(atoms), tuple(w)), tstar_used=float(tstar))


def spine_law(model):
    """Convenience: ``tilt_to_spine(model, find_tstar(model))``."""
    return tilt_to_spine(model, find_tstar(model))


# ---------------------------------------------------------------------------
# bundled models


def two_point_model(p, name=""):
    """Two children, each independently at +1 with probability p and -1 otherwise."""
    return OffspringModel(IidChild(LatticePmf((2,), (1,)), LatticePmf((-1, 1), (1 - p, p))), name=name)


def model_a():
    """Boundary-case model: p = (2 + sqrt 3) / 4 makes the spine a symmetric walk."""
    p = (2 + math.sqrt(3)) / 4
    return OffspringModel(IidChild(LatticePmf((2,), (1,)), LatticePmf((-1, 1), (1 - p, p))), name="model_a")


def model_b():
    """Two children at +1 w.p. 0.96 and -1 otherwise; positive spine drift."""
    p = Fraction(24, 25)
    return OffspringModel(IidChild(LatticePmf((2,), (1,)), LatticePmf((-1, 1), (1 - p, p))), name="model_b")


def deterministic_binary():
    """Two children, both displaced by +1."""
    return OffspringModel(IidChild(LatticePmf((2,), (1,)), LatticePmf((1,), (1,))), name="det")


def quarter_extinction():
    """Zero children w.p. 1/4, two children w.p. 3/4 (extinction probability 1/3)."""
    count = LatticePmf((0, 2), (Fraction(1, 4), Fraction(3, 4)))
    return OffspringModel(IidChild(count, LatticePmf((1,), (1,))), name="gw_quarter")


def single_path(step=1):
    """One child per particle; not supercritical, used for degenerate trees."""
    return OffspringModel(IidChild(LatticePmf((1,), (1,)), LatticePmf((step,), (1,))), name="single_path",
                          require_supercritical=False)


BUNDLED = {
    "model_a": model_a,
    "model_b": model_b,
    "det": deterministic_binary,
    "gw_quarter": quarter_extinction,
}
