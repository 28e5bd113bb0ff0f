"""Reference boundary, admissible boundary maps, and their discretization.

The reference boundary is a closed curve ``gamma(t)``, ``t in [0, 2 pi)``,
oriented counterclockwise. A boundary map ``phi`` is represented by the
composite ``t -> phi(gamma(t))``, which must lie in the open unit square.
The physical hole boundary is ``q phi(gamma(t))``.

Boundary integrals over ``q phi(dOmega)`` are parameter integrals with
weight ``|d/dt q phi(gamma(t))| * 2 pi / N``; the speed ratio to
``|gamma'|`` is the change-of-variables density between the two curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell_greens import PeriodicCell

__all__ = [
    "InvalidGeometryError",
    "ReferenceCurve",
    "DiffeoMap",
    "AffineDiffeo",
    "RadialDiffeo",
    "NodeDisplacementDiffeo",
    "AdmissibilityReport",
    "BoundaryMap",
    "check_admissible",
    "admissibility_margin",
    "build_boundary",
    "perimeter",
    "parameter_nodes",
    "points_in_polygon",
    "trig_interpolate",
]

MIN_NODES = 16
SPEED_TOL = 1e-10


class InvalidGeometryError(ValueError):
    """Raised when a boundary map is not admissible."""


def parameter_nodes(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


def _check_node_count(n: int) -> None:
    if n < MIN_NODES or n % 2:
        raise ValueError(f"node count must be even and >= {MIN_NODES}, got {n}")


def trig_interpolate(values: np.ndarray, t: np.ndarray, derivative: int = 0) -> np.ndarray:
    """Evaluate the trigonometric interpolant of equispaced samples.

    ``values`` has shape ``(M,)`` or ``(M, d)`` sampled at ``2 pi j / M``;
    the Nyquist mode is split symmetrically so the interpolant is real.
    """
    values = np.asarray(values, dtype=float)
    m = values.shape[0]
    coef = np.fft.fft(values, axis=0) / m
    freqs = np.fft.fftfreq(m, 1.0 / m)
    if m % 2 == 0:
        # split the Nyquist coefficient between +m/2 and -m/2
        nyq = coef[m // 2] / 2.0
        coef = np.concatenate([coef, nyq[None]], axis=0)
        coef[m // 2] = nyq
        freqs = np.concatenate([freqs, [m / 2.0]])
        freqs[m // 2] = -m / 2.0
    t = np.asarray(t, dtype=float)
    phase = np.exp(1j * np.outer(t, freqs))
    if derivative:
        phase = phase * (1j * freqs) ** derivative
    return (phase @ coef).real


@dataclass(frozen=True)
class ReferenceCurve:
    """Ellipse ``center + (a cos t, b sin t)``; a circle when ``a == b``."""

    center: tuple[float, float] = (0.0, 0.0)
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise InvalidGeometryError("reference curve semi-axes must be positive")

    @classmethod
    def circle(cls, center=(0.0, 0.0), radius: float = 1.0) -> "ReferenceCurve":
        return cls(tuple(map(float, center)), float(radius), float(radius))

    def evaluate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Points and first two derivatives, each of shape ``(len(t), 2)``."""
        t = np.asarray(t, dtype=float)
        c, s = np.cos(t), np.sin(t)
        cx, cy = self.center
        p = np.stack([cx + self.a * c, cy + self.b * s], axis=1)
        dp = np.stack([-self.a * s, self.b * c], axis=1)
        ddp = np.stack([-self.a * c, -self.b * s], axis=1)
        return p, dp, ddp


class DiffeoMap:
    """A boundary map ``phi`` known through ``t -> phi(gamma(t))``.

    Subclasses implement :meth:`evaluate`, returning the composite points
    and their first and second ``t``-derivatives.
    """

    kind = "abstract"
    curve: ReferenceCurve

    def evaluate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class AffineDiffeo(DiffeoMap):
    """``phi(p) = A p + b`` applied to a reference curve."""

    curve: ReferenceCurve
    matrix: tuple = ((1.0, 0.0), (0.0, 1.0))
    offset: tuple = (0.0, 0.0)
    kind = "affine"

    def evaluate(self, t):
        a = np.asarray(self.matrix, dtype=float)
        p, dp, ddp = self.curve.evaluate(t)
        return p @ a.T + np.asarray(self.offset, dtype=float), dp @ a.T, ddp @ a.T

    def describe(self):
        return {
            "kind": self.kind,
            "curve": {"center": list(self.curve.center), "a": self.curve.a, "b": self.curve.b},
            "matrix": [list(r) for r in self.matrix],
            "offset": list(self.offset),
        }


@dataclass(frozen=True)
class RadialDiffeo(DiffeoMap):
    """Radial perturbation of the unit circle about ``center``.

    ``phi(cos t, sin t) = center + r0 (1 + sum_m a_m cos mt + b_m sin mt) (cos t, sin t)``
    with ``m = 1, 2, ...`` indexing ``cos_coeffs`` and ``sin_coeffs``.
    """

    center: tuple[float, float] = (0.5, 0.5)
    r0: float = 0.25
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()
    curve: ReferenceCurve = field(default_factory=ReferenceCurve)
    kind = "radial"

    def radius(self, t: np.ndarray, derivative: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        r = np.full_like(t, 1.0 if derivative == 0 else 0.0)
        for m, am in enumerate(self.cos_coeffs, start=1):
            r += am * m**derivative * np.cos(m * t + derivative * np.pi / 2)
        for m, bm in enumerate(self.sin_coeffs, start=1):
            r += bm * m**derivative * np.sin(m * t + derivative * np.pi / 2)
        return self.r0 * r

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        r, dr, ddr = (self.radius(t, d) for d in range(3))
        c, s = np.cos(t), np.sin(t)
        e = np.stack([c, s], axis=1)
        de = np.stack([-s, c], axis=1)
        p = np.asarray(self.center, dtype=float) + r[:, None] * e
        dp = dr[:, None] * e + r[:, None] * de
        ddp = ddr[:, None] * e + 2.0 * dr[:, None] * de - r[:, None] * e
        return p, dp, ddp

    def describe(self):
        return {
            "kind": self.kind,
            "center": list(self.center),
            "r0": self.r0,
            "cos_coeffs": list(self.cos_coeffs),
            "sin_coeffs": list(self.sin_coeffs),
        }


@dataclass(frozen=True)
class NodeDisplacementDiffeo(DiffeoMap):
    """A base map plus a displacement field given at equispaced nodes.

    The displacement is extended to all ``t`` by trigonometric interpolation.
    """

    base: DiffeoMap
    displacement: np.ndarray
    kind = "free-form"

    @property
    def curve(self) -> ReferenceCurve:  # type: ignore[override]
        return self.base.curve

    def evaluate(self, t):
        p, dp, ddp = self.base.evaluate(t)
        disp = np.asarray(self.displacement, dtype=float)
        return (
            p + trig_interpolate(disp, t),
            dp + trig_interpolate(disp, t, 1),
            ddp + trig_interpolate(disp, t, 2),
        )

    def describe(self):
        return {
            "kind": self.kind,
            "base": self.base.describe(),
            "displacement": np.asarray(self.displacement).tolist(),
        }


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    condition: str | None = None
    index: int | None = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _segments_intersect(p: np.ndarray) -> tuple[int, int] | None:
    """First pair of non-adjacent intersecting edges of a closed polyline."""
    n = len(p)
    a = p
    b = np.roll(p, -1, axis=0)
    def orient(u, v, w):
        return (v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (
            w[..., 0] - u[..., 0]
        )

    ai, bi = a[:, None, :], b[:, None, :]
    aj, bj = a[None, :, :], b[None, :, :]
    o1 = orient(ai, bi, aj)
    o2 = orient(ai, bi, bj)
    o3 = orient(aj, bj, ai)
    o4 = orient(aj, bj, bi)
    cross = (o1 * o2 < 0) & (o3 * o4 < 0)
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    cross &= (gap > 1) & (gap < n - 1)
    hits = np.argwhere(np.triu(cross))
    if len(hits):
        return int(hits[0, 0]), int(hits[0, 1])
    return None


def _signed_area(p: np.ndarray, dp: np.ndarray) -> float:
    """Spectrally accurate enclosed area, ``1/2 \\oint x dy - y dx``."""
    n = len(p)
    return 0.5 * float(np.sum(p[:, 0] * dp[:, 1] - p[:, 1] * dp[:, 0])) * 2.0 * np.pi / n


def check_admissible(diffeo: DiffeoMap, n: int) -> AdmissibilityReport:
    """Check containment, node speeds, simplicity, and orientation at ``n`` nodes."""
    _check_node_count(n)
    t = parameter_nodes(n)
    p, dp, _ = diffeo.evaluate(t)
    if not np.all(np.isfinite(p)) or not np.all(np.isfinite(dp)):
        return AdmissibilityReport(False, "finite", None, "non-finite boundary values")
    outside = np.flatnonzero(np.any((p <= 0.0) | (p >= 1.0), axis=1))
    if len(outside):
        j = int(outside[0])
        return AdmissibilityReport(
            False, "containment", j, f"node {j} at {p[j].tolist()} leaves the open unit cell"
        )
    speed = np.hypot(dp[:, 0], dp[:, 1])
    slow = np.flatnonzero(speed <= SPEED_TOL)
    if len(slow):
        j = int(slow[0])
        return AdmissibilityReport(False, "speed", j, f"vanishing tangent at node {j}")
    hit = _segments_intersect(p)
    if hit is not None:
        return AdmissibilityReport(
            False, "self-intersection", hit[0], f"edges {hit[0]} and {hit[1]} intersect"
        )
    if _signed_area(p, dp) <= 0.0:
        return AdmissibilityReport(False, "orientation", None, "curve is not counterclockwise")
    return AdmissibilityReport(True)


def admissibility_margin(diffeo: DiffeoMap, n: int) -> tuple[float, float]:
    """Distance of the image to the unit-cell boundary and minimum node speed."""
    p, dp, _ = diffeo.evaluate(parameter_nodes(n))
    dist = float(np.min(np.minimum(p, 1.0 - p)))
    return dist, float(np.min(np.hypot(dp[:, 0], dp[:, 1])))


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd ray casting; ``points`` is ``(P, 2)``, ``polygon`` is ``(M, 2)``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    xa, ya = polygon[:, 0], polygon[:, 1]
    xb, yb = np.roll(xa, -1), np.roll(ya, -1)
    px, py = points[:, 0:1], points[:, 1:2]
    straddle = (ya > py) != (yb > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = xa + (py - ya) * (xb - xa) / (yb - ya)
    hits = straddle & (px < xcross)
    return np.count_nonzero(hits, axis=1) % 2 == 1


@dataclass(frozen=True)
class BoundaryMap:
    """Discretized physical hole boundary ``q phi(gamma(t_j))``.

    Attributes
    ----------
    t : (N,) parameter nodes ``2 pi j / N``
    ref_points : (N, 2) nodes of ``phi(dOmega)`` in the unit cell
    nodes : (N, 2) physical nodes ``x_j``
    tangents : (N, 2) ``d/dt x(t_j)``
    speeds : (N,) ``|d/dt x(t_j)|``
    normals : (N, 2) outward unit normals of the hole
    curvature : (N,) signed curvature, positive for a convex hole
    weights : (N,) trapezoid weights ``2 pi / N * speeds``
    """

    cell: PeriodicCell
    diffeo: DiffeoMap
    t: np.ndarray
    ref_points: np.ndarray
    nodes: np.ndarray
    tangents: np.ndarray
    speeds: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.weights))

    @property
    def area(self) -> float:
        return _signed_area(self.nodes, self.tangents)

    @property
    def ref_speeds(self) -> np.ndarray:
        """Speeds of ``phi(gamma)`` in the unit cell, before scaling by ``q``."""
        return np.hypot(*(self.tangents / self.cell.edges).T)

    def inside_hole(self, x) -> np.ndarray:
        """True where points lie in some translate ``qz + q I[phi]`` of the hole."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return points_in_polygon(self.cell.to_cell(pts), self.nodes)

    def distance_to_nodes(self, x) -> np.ndarray:
        """Distance from points to the nearest node of any lattice translate."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        d = self.cell.reduce(pts[:, None, :] - self.nodes[None, :, :])
        return np.min(np.hypot(d[..., 0], d[..., 1]), axis=1)

    def resampled(self, n: int) -> "BoundaryMap":
        return build_boundary(self.cell, self.diffeo, n, check=False)


def build_boundary(cell: PeriodicCell, diffeo: DiffeoMap, n: int, check: bool = True) -> BoundaryMap:
    """Discretize ``q phi(dOmega)`` at ``n`` equispaced parameter nodes.

    ``check=False`` skips the admissibility test; only for refinements of a
    map that already passed it.
    """
    _check_node_count(n)
    report = check_admissible(diffeo, n) if check else AdmissibilityReport(True)
    if not report:
        raise InvalidGeometryError(f"inadmissible boundary map ({report.condition}): {report.message}")
    t = parameter_nodes(n)
    p, dp, ddp = diffeo.evaluate(t)
    q = cell.edges
    x, dx, ddx = p * q, dp * q, ddp * q
    speed = np.hypot(dx[:, 0], dx[:, 1])
    unit_tangent = dx / speed[:, None]
    # tangent rotated by -90 degrees points out of a counterclockwise curve
    normals = np.stack([unit_tangent[:, 1], -unit_tangent[:, 0]], axis=1)
    curvature = (dx[:, 0] * ddx[:, 1] - dx[:, 1] * ddx[:, 0]) / speed**3
    weights = 2.0 * np.pi / n * speed
    return BoundaryMap(cell, diffeo, t, p, x, dx, speed, normals, curvature, weights)


def perimeter(bmap: BoundaryMap) -> float:
    return bmap.perimeter
