"""Invariant suites over the kernel, the boundary operators and the solver.

Each check returns a :class:`CheckResult`; nothing here raises on a failed
invariant, so a driver can tabulate every outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cell_greens import PeriodicCell, eval_greens, make_cell, verify_poisson_property
from .geometry import AffineDiffeo, BoundaryMap, DiffeoMap, RadialDiffeo, ReferenceCurve, build_boundary
from .potentials import (
    apply_half_plus_wstar,
    assemble_wstar,
    near_boundary_distance,
    one_sided_limits,
)
from .solver import NeumannProblem, cos_datum, solve

__all__ = [
    "CheckResult",
    "builtin_geometries",
    "greens_identity_checks",
    "gauss_identity_deviation",
    "operator_checks",
    "problem_checks",
    "interior_probes",
    "run_all",
    "format_table",
]

IDENTITY_TOL = 1e-10
POISSON_TOL = 1e-4
POISSON_MIN_DIST = 0.2
GAUSS_TOL = 1e-8
ZERO_MEAN_TOL = 1e-10
JUMP_TOL = 1e-6
HARMONIC_TOL = 1e-4
PERIODIC_TOL = 1e-12
NEUMANN_TOL = 1e-6
INTEGRAL_TOL = 1e-8


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one invariant; ``value`` is compared against ``threshold``.

    ``relation`` is ``"<="`` for error bounds and ``"~"`` for an observed
    order that must lie within ``slack`` of ``threshold``.
    """

    suite: str
    name: str
    value: float
    threshold: float
    relation: str = "<="
    slack: float = 0.0

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        if self.relation == "~":
            return abs(self.value - self.threshold) <= self.slack
        return self.value <= self.threshold

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "value": float(self.value),
            "threshold": float(self.threshold),
            "relation": self.relation,
            "passed": self.passed,
        }


def builtin_geometries() -> dict[str, DiffeoMap]:
    """Circle, ellipse and a two-mode radial perturbation, all centered in the unit cell."""
    return {
        "circle": RadialDiffeo((0.5, 0.5), 0.25),
        "ellipse": AffineDiffeo(ReferenceCurve((0.5, 0.5), 0.2, 0.1)),
        "perturbed": RadialDiffeo((0.5, 0.5), 0.25, (0.1, 0.05), (0.0, 0.08)),
    }


def _off_lattice_points(cell: PeriodicCell, rng: np.random.Generator, count: int, min_dist: float) -> np.ndarray:
    pts = []
    while len(pts) < count:
        x = rng.uniform(0.0, 1.0, size=2) * cell.edges
        r = cell.reduce(x)
        if np.hypot(*r) >= min_dist:
            pts.append(x)
    return np.array(pts)


def greens_identity_checks(cell: PeriodicCell, rng: np.random.Generator, count: int = 100) -> list[CheckResult]:
    """Evenness, periodicity, Ewald-parameter independence and the Poisson residual."""
    label = f"greens q=({cell.q11:g},{cell.q22:g})"
    x = _off_lattice_points(cell, rng, count, 0.05 * min(cell.q11, cell.q22))
    s = eval_greens(cell, x)
    even = np.max(np.abs(eval_greens(cell, -x) - s))
    shifts = rng.integers(-3, 4, size=(count, 2)) * cell.edges
    periodic = np.max(np.abs(eval_greens(cell, x + shifts) - s))
    ewald = 0.0
    for factor in (0.5, 2.0):
        alt = make_cell(cell.q11, cell.q22, ewald_xi=factor * cell.ewald_xi)
        ewald = max(ewald, float(np.max(np.abs(eval_greens(alt, x) - s))))

    # the FD error scales like h^2 / r^4 near the lattice
    far = _off_lattice_points(cell, rng, 5, POISSON_MIN_DIST)
    res = np.array([[abs(verify_poisson_property(cell, p, h)) for h in (1e-3, 4e-3, 2e-3)] for p in far])
    order = float(np.median(np.log2(res[:, 1] / res[:, 2])))
    return [
        CheckResult(label, "evenness", float(even), IDENTITY_TOL),
        CheckResult(label, "periodicity", float(periodic), IDENTITY_TOL),
        CheckResult(label, "ewald independence", ewald, IDENTITY_TOL),
        CheckResult(label, "poisson residual h=1e-3", float(np.max(res[:, 0])), POISSON_TOL),
        CheckResult(label, "poisson FD order", order, 2.0, "~", 0.3),
    ]


def gauss_identity_deviation(bmap: BoundaryMap) -> float:
    """``max_m |sum_j nu_j . DS(x_j - x_m) w_j - (1/2 - area/|Q|)|``."""
    kernel = assemble_wstar(bmap).matrix / bmap.weights[None, :]
    flux = bmap.weights @ kernel
    target = 0.5 - bmap.area / bmap.cell.cell_measure
    return float(np.max(np.abs(flux - target)))


def _smooth_density(bmap: BoundaryMap) -> np.ndarray:
    t = bmap.t
    return np.cos(t) + 0.3 * np.sin(2.0 * t) + 0.1


def operator_checks(
    bmap: BoundaryMap,
    rng: np.random.Generator,
    label: str,
    jump_nodes: int = 16,
) -> list[CheckResult]:
    """Gauss identity, zero-mean preservation of ``1/2 I + W*`` and both jump relations."""
    suite = f"operators {label}"
    wstar = assemble_wstar(bmap)
    mu = rng.standard_normal(bmap.n)
    mu -= np.dot(mu, bmap.weights) / bmap.perimeter
    mean = abs(float(np.dot(apply_half_plus_wstar(wstar, mu), bmap.weights)))

    dens = _smooth_density(bmap)
    idx = np.linspace(0, bmap.n, jump_nodes, endpoint=False).astype(int)
    wmu = (wstar.matrix @ dens)[idx]
    _, ext = one_sided_limits(bmap, dens, "exterior", nodes=idx)
    _, inn = one_sided_limits(bmap, dens, "interior", nodes=idx)
    jump = max(
        float(np.max(np.abs(ext - (0.5 * dens[idx] + wmu)))),
        float(np.max(np.abs(inn - (-0.5 * dens[idx] + wmu)))),
    )
    return [
        CheckResult(suite, "gauss identity", gauss_identity_deviation(bmap), GAUSS_TOL),
        CheckResult(suite, "zero-mean preservation", mean, ZERO_MEAN_TOL),
        CheckResult(suite, "jump relation", jump, JUMP_TOL),
    ]


def interior_probes(
    bmap: BoundaryMap,
    rng: np.random.Generator,
    count: int,
    clearance: float = 0.0,
) -> np.ndarray:
    """Random points of the perforated cell at least the near-boundary distance from the hole."""
    need = near_boundary_distance(bmap) + clearance
    pts = []
    for _ in range(10000 * count):
        x = rng.uniform(0.0, 1.0, size=2) * bmap.cell.edges
        if not bmap.inside_hole(x)[0] and bmap.distance_to_nodes(x)[0] >= need:
            pts.append(x)
            if len(pts) == count:
                return np.array(pts)
    raise ValueError("could not place probes away from the boundary")


def problem_checks(
    problem: NeumannProblem,
    rng: np.random.Generator,
    label: str,
    probes: int = 20,
    neumann_nodes: int = 16,
    bmap: BoundaryMap | None = None,
) -> list[CheckResult]:
    """Harmonicity, periodicity, Neumann condition and boundary integral of a solve."""
    suite = f"problem {label}"
    sol = solve(problem, bmap)
    h = 1e-3
    x = interior_probes(sol.bmap, rng, probes, clearance=2.0 * h)
    offsets = np.array([[0.0, 0.0], [h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
    u = sol.evaluate(x[:, None, :] + offsets[None, :, :])
    lap = (u[:, 1] + u[:, 2] + u[:, 3] + u[:, 4] - 4.0 * u[:, 0]) / h**2
    q = sol.bmap.cell.edges
    shifted = np.concatenate([x + q * [1, 0], x + q * [0, 1], x + q * [-2, 3]])
    periodic = np.max(np.abs(sol.evaluate(shifted) - np.tile(u[:, 0], 3)))
    idx = np.linspace(0, sol.bmap.n, neumann_nodes, endpoint=False).astype(int)
    dnu = sol.exterior_normal_derivative(idx)
    neumann = np.max(np.abs(dnu - sol.rhs.values[idx]))
    integral = abs(sol.boundary_integral() - float(problem.k))
    return [
        CheckResult(suite, "residual", sol.residual, 1e-12),
        CheckResult(suite, "harmonicity", float(np.max(np.abs(lap))), HARMONIC_TOL),
        CheckResult(suite, "periodicity", float(periodic), PERIODIC_TOL),
        CheckResult(suite, "neumann condition", float(neumann), NEUMANN_TOL),
        CheckResult(suite, "boundary integral", integral, INTEGRAL_TOL),
    ]


def run_all(
    cell_edges=(1.0, 1.0),
    n: int = 128,
    seed: int = 0,
    flip_normals: bool = False,
) -> list[CheckResult]:
    """Every suite on the built-in geometries in the given cell.

    ``flip_normals`` reverses the normals of each discretized boundary, a
    sabotage that the Gauss identity must detect.
    """
    rng = np.random.default_rng(seed)
    cell = make_cell(*cell_edges)
    results = greens_identity_checks(cell, rng)
    for name, diffeo in builtin_geometries().items():
        bmap = build_boundary(cell, diffeo, n)
        if flip_normals:
            bmap = replace(bmap, normals=-bmap.normals)
        results += operator_checks(bmap, rng, name)
        problem = NeumannProblem(cell, diffeo, cos_datum(1), 1.0, n)
        results += problem_checks(problem, rng, name, bmap=bmap)
    return results


def format_table(results: list[CheckResult]) -> str:
    rows = [("suite", "check", "value", "bound", "status")]
    for r in results:
        bound = f"{r.relation} {r.threshold:.3g}" + (f" +/- {r.slack:g}" if r.relation == "~" else "")
        rows.append((r.suite, r.name, f"{r.value:.17g}", bound, "PASS" if r.passed else "FAIL"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
