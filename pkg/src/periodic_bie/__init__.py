"""Boundary integral solver for the periodic Neumann problem in a perforated plane."""

from .cell_greens import PeriodicCell, eval_greens, eval_greens_grad, make_cell
from .geometry import AffineDiffeo, BoundaryMap, RadialDiffeo, ReferenceCurve, build_boundary
from .solver import NeumannProblem, Solution, solve

__all__ = [
    "PeriodicCell",
    "make_cell",
    "eval_greens",
    "eval_greens_grad",
    "ReferenceCurve",
    "AffineDiffeo",
    "RadialDiffeo",
    "BoundaryMap",
    "build_boundary",
    "NeumannProblem",
    "Solution",
    "solve",
]

__version__ = "0.1.0"
