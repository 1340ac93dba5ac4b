"""Path functionals with a finite summary state.

A functional of a path ``(V_0 = 0, V_1, ..., V_k)`` is described by a start
state, a transition ``update(state, position)`` and a read-out
``value(state, position)``.  Both the tree-side and spine-side expectations
iterate these automata forward, so any functional defined here can be pushed
through either route.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Constant:
    """f = 1."""

    def start(self, x0):
        return None

    def update(self, state, x):
        return None

    def value(self, state, x):
        return 1


@dataclass(frozen=True)
class IncrementPattern:
    """Indicator that the first ``len(steps)`` increments equal ``steps``."""

    steps: tuple

    def start(self, x0):
        return (0, x0, True)

    def update(self, state, x):
        i, prev, ok = state
        ok = ok and i < len(self.steps) and x - prev == self.steps[i]
        return (i + 1, x, ok)

    def value(self, state, x):
        return 1 if state[2] and state[0] == len(self.steps) else 0


@dataclass(frozen=True)
class MinAtLeast:
    """Indicator that every position along the path is at least ``floor``."""

    floor: int

    def start(self, x0):
        return x0 >= self.floor

    def update(self, state, x):
        return state and x >= self.floor

    def value(self, state, x):
        return 1 if state else 0


@dataclass(frozen=True)
class VisitCount:
    """Number of indices j (root included) with V_j equal to ``level``."""

    level: int = 0

    def start(self, x0):
        return int(x0 == self.level)

    def update(self, state, x):
        return state + int(x == self.level)

    def value(self, state, x):
        return state


def forward(functional, transitions, depth, weight=None, zero=0.0):
    """Propagate a measure on (position, state) for ``depth`` steps.

    ``transitions`` is a list of ``(displacement, mass)``.  Returns the dict
    ``(position, state) -> mass`` after ``depth`` steps.  ``weight`` optionally
    multiplies the final masses by ``weight(position)``.
    """
    layer = {(0, functional.start(0)): 1 + zero}
    for _ in range(depth):
        nxt = {}
        for (x, s), m in layer.items():
            for d, w in transitions:
                y = x + d
                key = (y, functional.update(s, y))
                nxt[key] = nxt.get(key, zero) + m * w
        layer = nxt
    if weight is not None:
        layer = {k: m * weight(k[0]) for k, m in layer.items()}
    return layer


def integrate(functional, layer, zero=0.0):
    total = zero
    for (x, s), m in layer.items():
        total = total + m * functional.value(s, x)
    return total
