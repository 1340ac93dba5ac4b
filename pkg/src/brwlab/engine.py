"""Growing finite branching-random-walk trees.

Trees are stored breadth first in flat numpy arrays, so the children of a node
occupy a contiguous index range and every generation is a contiguous block.
"""

import io
import json
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ModelError
from .rng import GROW, MARKS, stream

DEFAULT_MAX_POPULATION = 50_000_000
DUMP_MAGIC = b"BRWT"
DUMP_VERSION = 1


@dataclass(frozen=True)
class GrowthControls:
    """Truncation controls for ``grow``.

    ``barrier = c`` kills every particle with position below ``-c`` together
    with its unborn subtree.  ``ceiling = h`` does the same above ``h``; it is
    used to prune subtrees that can no longer matter for a statistic.
    ``beam = w`` keeps only the ``w`` lowest children of each generation
    (ties broken by id), which leaves a subtree whose lowest rays are intact.
    """

    max_generation: int
    max_population: int = DEFAULT_MAX_POPULATION
    barrier: Optional[float] = None
    ceiling: Optional[float] = None
    beam: Optional[int] = None
    record_marks: bool = False

    def __post_init__(self):
        if self.max_generation < 0:
            raise ModelError("max_generation must be non-negative")
        if self.max_population < 1:
            raise ModelError("max_population must be at least 1")
        if self.barrier is not None and self.barrier < 0:
            raise ModelError("barrier must be non-negative")
        if self.beam is not None and self.beam < 1:
            raise ModelError("beam must be at least 1")


@dataclass(frozen=True, eq=False)
class BrwTree:
    parent: np.ndarray
    generation: np.ndarray
    position: np.ndarray
    mark: Optional[np.ndarray]
    child_start: np.ndarray
    child_count: np.ndarray
    per_generation_counts: np.ndarray
    seed: int = 0
    controls: Optional[GrowthControls] = None
    truncated: bool = False
    barrier_kills: int = 0
    lattice: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def size(self):
        return len(self.parent)

    @property
    def depth(self):
        """Deepest generation that contains at least one node."""
        nz = np.nonzero(self.per_generation_counts)[0]
        return int(nz[-1]) if nz.size else 0

    @property
    def generation_offsets(self):
        """``offsets[g]:offsets[g+1]`` is the id range of generation ``g``."""
        return np.concatenate([[0], np.cumsum(self.per_generation_counts)])

    def generation_slice(self, g):
        off = self.generation_offsets
        return slice(int(off[g]), int(off[g + 1]))

    def children(self, i):
        s = int(self.child_start[i])
        return range(s, s + int(self.child_count[i]))

    def is_leaf(self):
        return self.child_count == 0

    @classmethod
    def from_arrays(cls, parent, position, mark=None, lattice=None, seed=0):
        """Build a tree from a breadth-first parent array (root has parent -1)."""
        parent = np.asarray(parent, dtype=np.int64)
        position = np.asarray(position, dtype=float)
        n = len(parent)
        if n == 0 or parent[0] != -1 or np.any(parent[1:] < 0):
            raise ModelError("node 0 must be the only root")
        if np.any(parent[1:] >= np.arange(1, n)) or np.any(np.diff(parent[1:]) < 0):
            raise ModelError("nodes must be in breadth-first order")
        if position[0] != 0:
            raise ModelError("the root sits at 0")
        generation = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            generation[i] = generation[parent[i]] + 1
        if np.any(np.diff(generation) < 0):
            raise ModelError("nodes must be in breadth-first order")
        if lattice is None:
            lattice = bool(np.all(position == np.round(position)))
        counts = np.bincount(generation, minlength=int(generation.max()) + 1)
        return _assemble(parent, generation, position, None if mark is None else np.asarray(mark, float),
                         counts, seed=seed, controls=None, truncated=False, kills=0, lattice=lattice)

    # -- serialization ---------------------------------------------------------
    def metadata(self):
        return {
            "seed": int(self.seed),
            "controls": None if self.controls is None else asdict(self.controls),
            "truncated": bool(self.truncated),
            "barrier_kills": int(self.barrier_kills),
            "lattice": bool(self.lattice),
            "per_generation_counts": [int(c) for c in self.per_generation_counts],
            **self.meta,
        }

    def to_bytes(self):
        """Versioned little-endian dump: header, node arrays, JSON metadata."""
        buf = io.BytesIO()
        n = self.size
        has_marks = self.mark is not None
        buf.write(DUMP_MAGIC)
        buf.write(struct.pack("<IQ?", DUMP_VERSION, n, has_marks))
        buf.write(self.parent.astype("<i8").tobytes())
        buf.write(self.position.astype("<f8").tobytes())
        if has_marks:
            buf.write(self.mark.astype("<f8").tobytes())
        meta = json.dumps(self.metadata(), sort_keys=True).encode()
        buf.write(struct.pack("<Q", len(meta)))
        buf.write(meta)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != DUMP_MAGIC:
            raise ModelError("not a tree dump")
        version, n, has_marks = struct.unpack_from("<IQ?", data, 4)
        if version != DUMP_VERSION:
            raise ModelError(f"unsupported dump version {version}")
        off = 4 + struct.calcsize("<IQ?")
        parent = np.frombuffer(data, "<i8", n, off).astype(np.int64)
        off += 8 * n
        position = np.frombuffer(data, "<f8", n, off).astype(float)
        off += 8 * n
        mark = None
        if has_marks:
            mark = np.frombuffer(data, "<f8", n, off).astype(float)
            off += 8 * n
        (mlen,) = struct.unpack_from("<Q", data, off)
        meta = json.loads(data[off + 8 : off + 8 + mlen])
        controls = None if meta["controls"] is None else GrowthControls(**meta["controls"])
        generation = np.repeat(np.arange(len(meta["per_generation_counts"])), meta["per_generation_counts"])
        extra = {k: v for k, v in meta.items()
                 if k not in ("seed", "controls", "truncated", "barrier_kills", "lattice", "per_generation_counts")}
        tree = _assemble(parent, generation, position, mark, np.asarray(meta["per_generation_counts"]),
                         seed=meta["seed"], controls=controls, truncated=meta["truncated"],
                         kills=meta["barrier_kills"], lattice=meta["lattice"])
        return replace(tree, meta=extra)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _assemble(parent, generation, position, mark, counts, seed, controls, truncated, kills, lattice):
    n = len(parent)
    child_count = np.bincount(parent[1:], minlength=n).astype(np.int64)
    # children of node i start right after the children of nodes 0..i-1
    child_start = np.concatenate([[1], 1 + np.cumsum(child_count)[:-1]]).astype(np.int64)
    return BrwTree(parent=parent, generation=np.asarray(generation, dtype=np.int64), position=position,
                   mark=mark, child_start=child_start, child_count=child_count,
                   per_generation_counts=np.asarray(counts, dtype=np.int64), seed=int(seed), controls=controls,
                   truncated=bool(truncated), barrier_kills=int(kills), lattice=bool(lattice))


def _children(model, controls, rng, positions):
    """One generation step: returns (parent index into ``positions``, child positions, kills)."""
    counts, disp = model.sample_broods(rng, len(positions))
    owner = np.repeat(np.arange(len(positions)), counts)
    child_pos = positions[owner] + disp
    keep = np.ones(len(child_pos), dtype=bool)
    if controls.barrier is not None:
        keep &= child_pos >= -controls.barrier
    if controls.ceiling is not None:
        keep &= child_pos <= controls.ceiling
    if controls.beam is not None and keep.sum() > controls.beam:
        idx = np.nonzero(keep)[0]
        lowest = idx[np.argsort(child_pos[idx], kind="stable")[: controls.beam]]
        keep = np.zeros(len(child_pos), dtype=bool)
        keep[lowest] = True
    kills = int(len(keep) - keep.sum())
    return owner[keep], child_pos[keep], kills


def grow(model, controls, seed):
    """Grow a tree generation by generation.

    Generation ``g`` draws all broods of its particles, in id order, from the
    stream ``(seed, GROW, g)``, so the result depends only on
    ``(model, controls, seed)``.  When a generation would exceed
    ``max_population`` it is cut at the cap, growth stops and the tree is
    flagged truncated.
    """
    parents = [np.array([-1], dtype=np.int64)]
    positions = [np.zeros(1)]
    counts = [1]
    frontier_ids = np.zeros(1, dtype=np.int64)
    frontier_pos = np.zeros(1)
    total, kills, truncated = 1, 0, False
    for g in range(controls.max_generation):
        if len(frontier_pos) == 0:
            counts.append(0)
            continue
        owner, child_pos, k = _children(model, controls, stream(seed, GROW, g), frontier_pos)
        kills += k
        room = controls.max_population - total
        if len(child_pos) > room:
            owner, child_pos = owner[:room], child_pos[:room]
            truncated = True
        ids = frontier_ids[owner]
        parents.append(ids)
        positions.append(child_pos)
        counts.append(len(child_pos))
        frontier_ids = np.arange(total, total + len(child_pos), dtype=np.int64)
        frontier_pos = child_pos
        total += len(child_pos)
        if truncated:
            break
    parent = np.concatenate(parents)
    position = np.concatenate(positions)
    generation = np.repeat(np.arange(len(counts)), counts)
    return _assemble(parent, generation, position, None, np.asarray(counts), seed=seed, controls=controls,
                     truncated=truncated, kills=kills, lattice=model.lattice)


def attach_marks(tree, marks, seed):
    """Return a copy of ``tree`` with i.i.d. marks drawn in node-id order from ``(seed, MARKS, 0)``."""
    values = np.asarray(marks.sample(stream(seed, MARKS, 0), tree.size), dtype=float)
    return replace(tree, mark=values)


def rays(tree):
    """Depth-first stream of root-to-leaf paths as lists of node ids.

    The yielded list is reused between rays; copy it to keep it.
    """
    path = [0]
    # stack of (node, next child offset)
    stack = [0]
    cursor = [0]
    start, count = tree.child_start, tree.child_count
    while stack:
        node = stack[-1]
        c = cursor[-1]
        if count[node] == 0:
            yield path
            stack.pop()
            cursor.pop()
            path.pop()
            continue
        if c < count[node]:
            cursor[-1] = c + 1
            child = int(start[node] + c)
            stack.append(child)
            cursor.append(0)
            path.append(child)
        else:
            stack.pop()
            cursor.pop()
            path.pop()


def generation_minima(tree, generations=None):
    """Minimal position per generation, +inf for empty generations."""
    counts = tree.per_generation_counts
    if generations is None:
        generations = len(counts) if tree.controls is None else tree.controls.max_generation + 1
    out = np.full(generations, np.inf)
    off = tree.generation_offsets
    for g in range(min(generations, len(counts))):
        if counts[g]:
            out[g] = tree.position[off[g]:off[g + 1]].min()
    return out


def additive_martingale(tree, tstar):
    """M_g = sum over generation g of exp(-t* V), for each realized generation."""
    off = tree.generation_offsets
    w = np.exp(-tstar * tree.position)
    return np.array([w[off[g]:off[g + 1]].sum() for g in range(len(tree.per_generation_counts))])
