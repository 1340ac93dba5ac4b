"""Simulation and exact computation for branching random walks on the line."""

from .engine import BrwTree, GrowthControls, attach_marks, grow, rays
from .errors import BrwError, ModelError, NoRootError, PrecisionError, UnsupportedError
from .model import (
    Deterministic,
    LogNormal,
    OffspringModel,
    ParetoTail,
    classify_hypotheses,
    find_tstar,
    load_model,
    model_a,
    model_b,
    save_model,
    spine_law,
)

__version__ = "0.1.0"
