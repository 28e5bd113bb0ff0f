"""Periodic Neumann problem in the perforated plane.

Given a cell ``q``, a boundary map ``phi``, a datum ``g`` on the reference
boundary and a constant ``k``, find the q-periodic harmonic ``u`` outside
the holes ``qz + q I[phi]`` with

    du/dnu = g o phi^-1(q^-1 x) - (its boundary mean)   on the hole boundary,
    int_{hole boundary} u dsigma = k.

The solution is a single layer plus a constant,

    u = v[mu] + (k - int v[mu] dsigma) / perimeter,

where ``mu`` solves ``1/2 mu + W* mu = projected datum``. The system is
assembled at the parameter nodes of the reference boundary, so the
pulled-back density ``theta(t_j)`` and ``mu(x_j)`` share node values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg

from .cell_greens import PeriodicCell
from .geometry import BoundaryMap, DiffeoMap, build_boundary, parameter_nodes, trig_interpolate
from .potentials import (
    Density,
    assemble_wstar,
    gradient_offboundary,
    one_sided_limits,
    single_layer_offboundary,
    single_layer_onboundary,
)

__all__ = [
    "DEFAULT_NODES",
    "SingularOperatorError",
    "DomainError",
    "NeumannProblem",
    "Solution",
    "constant_datum",
    "cos_datum",
    "sin_datum",
    "datum_values",
    "build_rhs",
    "solve_density",
    "solve",
    "eval_solution",
    "eval_solution_grad",
]

DEFAULT_NODES = 128
RESIDUAL_RTOL = 1e-12
RCOND_MIN = 1e-13

Datum = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


class SingularOperatorError(RuntimeError):
    """The discrete second-kind operator is numerically singular."""


class DomainError(ValueError):
    """Evaluation point lies inside a hole."""


def constant_datum(value: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: np.full_like(np.asarray(t, dtype=float), float(value))


def cos_datum(m: int, amplitude: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: amplitude * np.cos(m * np.asarray(t, dtype=float))


def sin_datum(m: int, amplitude: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: amplitude * np.sin(m * np.asarray(t, dtype=float))


def datum_values(datum: Datum, t: np.ndarray) -> np.ndarray:
    """Evaluate a datum (function of ``t`` or equispaced node values) at ``t``."""
    t = np.asarray(t, dtype=float)
    if callable(datum):
        g = np.asarray(datum(t), dtype=float)
    else:
        vals = np.asarray(datum, dtype=float)
        if len(vals) == len(t) and np.allclose(t, parameter_nodes(len(t))):
            g = vals.copy()
        else:
            g = trig_interpolate(vals, t)
    if g.shape != t.shape:
        raise ValueError(f"datum has shape {g.shape}, expected {t.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("datum is not finite at every node")
    return g


@dataclass(frozen=True)
class NeumannProblem:
    """The quadruple ``(q, phi, g, k)`` plus the discretization size.

    ``datum`` is either a function of the reference parameter ``t`` or node
    values at ``2 pi j / M``, trigonometrically interpolated when ``M``
    differs from ``n``.
    """

    cell: PeriodicCell
    diffeo: DiffeoMap
    datum: Datum
    k: float = 0.0
    n: int = DEFAULT_NODES

    def datum_at(self, t: np.ndarray) -> np.ndarray:
        return datum_values(self.datum, t)


def build_rhs(problem: NeumannProblem, bmap: BoundaryMap) -> Density:
    """Datum at the nodes minus its mean over the physical boundary."""
    g = problem.datum_at(bmap.t)
    g = g - np.dot(g, bmap.weights) / bmap.perimeter
    return Density(g, bmap.weights, "reference")


@dataclass(frozen=True)
class _DensitySolve:
    theta: Density
    residual: float
    condition: float


def _solve_system(problem: NeumannProblem, bmap: BoundaryMap) -> _DensitySolve:
    rhs = build_rhs(problem, bmap)
    a = assemble_wstar(bmap).half_plus()
    lu, piv = scipy.linalg.lu_factor(a)
    rcond, info = scipy.linalg.lapack.dgecon(lu, np.linalg.norm(a, 1), norm="1")
    if info != 0 or rcond < RCOND_MIN:
        raise SingularOperatorError(f"1/2 I + W* is numerically singular (rcond={rcond:.3e})")
    b = rhs.values
    theta = scipy.linalg.lu_solve((lu, piv), b)
    scale = max(float(np.linalg.norm(b)), np.finfo(float).tiny)
    residual = float(np.linalg.norm(a @ theta - b))
    if residual > RESIDUAL_RTOL * scale:
        theta = theta + scipy.linalg.lu_solve((lu, piv), b - a @ theta)
        residual = float(np.linalg.norm(a @ theta - b))
    return _DensitySolve(Density(theta, bmap.weights, "reference"), residual / scale, 1.0 / rcond)


def solve_density(problem: NeumannProblem, bmap: BoundaryMap) -> Density:
    """Pulled-back density ``theta`` at the reference nodes."""
    return _solve_system(problem, bmap).theta


@dataclass(frozen=True)
class Solution:
    """Solved density and additive constant; evaluates ``u`` and ``grad u``."""

    problem: NeumannProblem
    bmap: BoundaryMap
    theta: Density
    constant: float
    residual: float
    condition: float
    rhs: Density = field(repr=False)

    @property
    def mu(self) -> Density:
        return self.theta.as_physical()

    @property
    def perimeter(self) -> float:
        return self.bmap.perimeter

    def _check_domain(self, pts: np.ndarray) -> None:
        inside = self.bmap.inside_hole(pts)
        if np.any(inside):
            bad = pts[np.flatnonzero(inside)[0]]
            raise DomainError(f"point {bad.tolist()} lies inside a hole")

    def evaluate(self, x, upsample: int = 1):
        pts = np.asarray(x, dtype=float)
        self._check_domain(pts.reshape(-1, 2))
        return single_layer_offboundary(self.bmap, self.mu, pts, upsample=upsample) + self.constant

    def gradient(self, x, upsample: int = 1) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        self._check_domain(pts.reshape(-1, 2))
        return gradient_offboundary(self.bmap, self.mu, pts, upsample=upsample)

    def boundary_trace(self) -> np.ndarray:
        """``u`` at the boundary nodes (single layer is continuous there)."""
        return single_layer_onboundary(self.bmap, self.mu) + self.constant

    def boundary_integral(self) -> float:
        return float(np.dot(self.boundary_trace(), self.bmap.weights))

    def exterior_normal_derivative(self, nodes=None) -> np.ndarray:
        """``nu . grad u`` at boundary nodes, extrapolated from the exterior."""
        return one_sided_limits(self.bmap, self.mu, "exterior", nodes=nodes)[1]

    def to_dict(self) -> dict:
        return {
            "nodes": self.bmap.nodes.tolist(),
            "theta": self.theta.values.tolist(),
            "constant": self.constant,
            "residual": self.residual,
            "perimeter": self.perimeter,
            "condition_estimate": self.condition,
            "n": self.bmap.n,
            "cell": [self.bmap.cell.q11, self.bmap.cell.q22],
            "k": float(self.problem.k),
        }


def solve(problem: NeumannProblem, bmap: BoundaryMap | None = None) -> Solution:
    """Solve the periodic Neumann problem; ``bmap`` may be passed to reuse geometry."""
    if bmap is None:
        bmap = build_boundary(problem.cell, problem.diffeo, problem.n)
    res = _solve_system(problem, bmap)
    trace = single_layer_onboundary(bmap, res.theta.values)
    c = (float(problem.k) - float(np.dot(trace, bmap.weights))) / bmap.perimeter
    return Solution(problem, bmap, res.theta, c, res.residual, res.condition, build_rhs(problem, bmap))


def eval_solution(sol: Solution, x, upsample: int = 1):
    return sol.evaluate(x, upsample=upsample)


def eval_solution_grad(sol: Solution, x, upsample: int = 1) -> np.ndarray:
    return sol.gradient(x, upsample=upsample)
