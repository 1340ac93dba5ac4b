"""Functionals of the rays of a realized tree.

Every statistic here is a reduction along root paths (a running sum or a
running maximum), evaluated for all nodes at once by pointer jumping: each
node repeatedly absorbs the partial result of the ancestor it points to and
then jumps to that ancestor's pointer, so the work is O(nodes * log depth)
and no recursion is involved even for very deep trees.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .engine import GrowthControls, _children, generation_minima
from .errors import ModelError, UnsupportedError
from .rng import GROW, MARKS, stream

BINNINGS = ("unitInterval", "latticeExact")


def root_path_reduce(parent, values, op=np.add):
    """For every node, ``op``-reduce ``values`` over its root path (node included)."""
    val = np.array(values, copy=True)
    nxt = np.array(parent, dtype=np.int64, copy=True)
    live = np.nonzero(nxt >= 0)[0]
    while live.size:
        up = nxt[live]
        val[live] = op(val[live], val[up])
        nxt[live] = nxt[up]
        live = live[nxt[live] >= 0]
    return val


def leaves(tree):
    return np.nonzero(tree.child_count == 0)[0]


# ---------------------------------------------------------------------------
# local times


@dataclass
class LocalTimeProfile:
    level: int
    binning: str
    per_node: np.ndarray
    leaf_ids: np.ndarray
    per_ray: np.ndarray

    @property
    def sup(self):
        return int(self.per_node.max())


def _level_indicator(tree, level, binning):
    if binning == "unitInterval":
        return np.floor(tree.position) == level
    if binning == "latticeExact":
        if not tree.lattice:
            raise UnsupportedError("exact level counts need a lattice tree")
        return tree.position == level
    raise ModelError(f"binning must be one of {BINNINGS}")


def local_time_profile(tree, level, binning="unitInterval"):
    """Number of visits to ``level`` along the root path of every node, and along every ray.

    With ``unitInterval`` a visit means ``level <= V < level + 1``; with
    ``latticeExact`` it means ``V == level``.  Rays end at the leaves.
    """
    ind = _level_indicator(tree, level, binning).astype(np.int64)
    per_node = root_path_reduce(tree.parent, ind)
    ids = leaves(tree)
    return LocalTimeProfile(level, binning, per_node, ids, per_node[ids])


def sup_local_time(tree, level, binning="unitInterval"):
    """Largest number of visits to ``level`` along a single ray."""
    return local_time_profile(tree, level, binning).sup


# ---------------------------------------------------------------------------
# discounted sums along rays


@dataclass
class PathFunctionals:
    """Suprema over rays of partial sums, with estimates of the unrealized tails.

    ``M_tail`` and ``X_tail`` are zero for extinct trees; otherwise they
    extrapolate the realized minima geometrically and are infinite (with the
    ``unbounded-estimate`` flag) when the minima do not grow.
    """

    M_value: float
    M_tail: float
    X_value: Optional[float]
    X_tail: Optional[float]
    Xi: dict
    min_over_tree: float
    minima: np.ndarray
    per_ray_D: Optional[np.ndarray] = None
    flags: list = field(default_factory=list)


def minima_tail(minima):
    """Geometric estimate of sum over unrealized generations of exp(-m_n); ``None`` if the minima are not growing."""
    m = np.asarray(minima, dtype=float)
    if np.isinf(m[-1]):
        return 0.0
    last = len(m) - 1
    mid = last // 2
    if last < 2:
        return None
    rate = (m[last] - m[mid]) / (last - mid)
    if not rate > 0:
        return None
    return float(math.exp(-m[last]) * math.exp(-rate) / -math.expm1(-rate))


def path_functionals(tree, b_list=(), want_per_ray=False):
    """M, X (when the tree carries marks) and Xi_b for each b in ``b_list``.

    M = sup over rays of sum exp(-V), X = sup over rays of sum exp(-V) eta,
    Xi_b = sup over rays of sum (1 + |V|)^(-b); all sums start at the root.
    """
    flags = []
    weight = np.exp(-tree.position)
    m_path = root_path_reduce(tree.parent, weight)
    minima = generation_minima(tree, len(tree.per_generation_counts))
    tail = minima_tail(minima)
    if tail is None:
        flags.append("unbounded-estimate")
        tail = math.inf
    X_value = X_tail = None
    per_ray = None
    if tree.mark is not None:
        d_path = root_path_reduce(tree.parent, weight * tree.mark)
        X_value = float(d_path.max())
        X_tail = tail * float(tree.mark.max()) if tail else tail
        if want_per_ray:
            per_ray = d_path[leaves(tree)]
    elif want_per_ray:
        per_ray = m_path[leaves(tree)]
    xi = {}
    for b in b_list:
        xi[b] = float(root_path_reduce(tree.parent, (1.0 + np.abs(tree.position)) ** (-float(b))).max())
    return PathFunctionals(M_value=float(m_path.max()), M_tail=tail, X_value=X_value, X_tail=X_tail, Xi=xi,
                           min_over_tree=float(tree.position.min()), minima=minima, per_ray_D=per_ray,
                           flags=flags)


# ---------------------------------------------------------------------------
# consistent path statistic


def consistent_path_stat(tree, n0):
    """min over rays of max over n0 <= l <= depth of V(xi_l) / sqrt(l log l).

    Rays are the root paths of the nodes in the deepest realized
    generation.  This is a finite-depth stand-in for a limsup and carries no
    convergence guarantee.
    """
    depth = tree.depth
    if n0 < 2 or n0 > depth:
        raise ModelError("need 2 <= n0 <= realized depth")
    g = tree.generation
    ratio = np.full(tree.size, -np.inf)
    ok = g >= n0
    ratio[ok] = tree.position[ok] / np.sqrt(g[ok] * np.log(g[ok]))
    running = root_path_reduce(tree.parent, ratio, np.maximum)
    return float(running[tree.generation_slice(depth)].min())


# ---------------------------------------------------------------------------
# generation-by-generation discounted sums without storing the tree


@dataclass
class DiscountedTrace:
    """Per-generation records of a tree grown and marked on the fly.

    Entry ``g`` of each array refers to the tree truncated at generation
    ``g``: ``peak[i, g]`` is the largest ``exp(-V) eta`` seen so far under mark
    law ``i``, ``X[i, g]`` the largest ray sum, ``M[g]`` the unmarked ray sum
    supremum, ``minima[g]`` and ``population[g]`` describe generation ``g``.
    """

    peak: np.ndarray
    X: np.ndarray
    M: np.ndarray
    minima: np.ndarray
    population: np.ndarray
    truncated: bool


def discounted_trace(model, mark_laws, depth, seed, controls=None):
    """Grow generation by generation and track discounted ray sums for several mark laws.

    Uses the same random streams as ``grow`` followed by ``attach_marks``, so
    each record equals what ``path_functionals`` reports on the stored tree,
    while only one generation is ever held in memory.  All mark laws read the
    same uniforms.
    """
    if controls is None:
        controls = GrowthControls(max_generation=depth)
    laws = list(mark_laws)
    mark_rng = stream(seed, MARKS, 0)

    # all bundled mark laws draw one uniform per node, so replay the uniforms per law
    def marks_for(n):
        state = mark_rng.bit_generator.state
        out = []
        for law in laws:
            mark_rng.bit_generator.state = state
            out.append(np.asarray(law.sample(mark_rng, n), dtype=float))
        if not laws:
            mark_rng.random(n)
        return out

    nl = len(laws)
    peak = np.zeros((nl, depth + 1))
    X = np.zeros((nl, depth + 1))
    M = np.zeros(depth + 1)
    minima = np.full(depth + 1, np.inf)
    population = np.zeros(depth + 1, dtype=np.int64)
    pos = np.zeros(1)
    eta = marks_for(1)
    w = np.exp(-pos)
    sums = [w * e for e in eta]
    msum = w.copy()
    peak[:, 0] = [s.max() for s in sums]
    X[:, 0] = peak[:, 0]
    M[0] = 1.0
    minima[0] = 0.0
    population[0] = 1
    total, truncated = 1, False
    for g in range(depth):
        if pos.size == 0 or truncated:
            peak[:, g + 1] = peak[:, g]
            X[:, g + 1] = X[:, g]
            M[g + 1] = M[g]
            continue
        owner, pos, _ = _children(model, controls, stream(seed, GROW, g), pos)
        room = controls.max_population - total
        if len(pos) > room:
            owner, pos = owner[:room], pos[:room]
            truncated = True
        total += len(pos)
        w = np.exp(-pos)
        eta = marks_for(len(pos))
        sums = [s[owner] + w * e for s, e in zip(sums, eta)]
        msum = msum[owner] + w
        for i in range(nl):
            peak[i, g + 1] = max(peak[i, g], float((w * eta[i]).max()) if pos.size else 0.0)
            X[i, g + 1] = max(X[i, g], float(sums[i].max()) if pos.size else 0.0)
        M[g + 1] = max(M[g], float(msum.max()) if pos.size else 0.0)
        population[g + 1] = len(pos)
        if pos.size:
            minima[g + 1] = pos.min()
    return DiscountedTrace(peak, X, M, minima, population, truncated)

