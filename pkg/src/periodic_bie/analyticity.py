"""Numerical witness of analytic parameter dependence.

Along an affine one-parameter family ``t -> (q(t), phi_t, g_t, k(t))`` the
scalar trace ``t -> u[q(t), phi_t, g_t, k(t)](x0)`` is sampled at Chebyshev
points. Analytic dependence shows up as geometric decay of its Chebyshev
coefficients; dependence on ``g`` and ``k`` alone is affine, so those
coefficients vanish beyond degree one.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft

from .cell_greens import make_cell
from .geometry import (
    DiffeoMap,
    RadialDiffeo,
    admissibility_margin,
    build_boundary,
    check_admissible,
)
from .potentials import near_boundary_distance
from .solver import Datum, NeumannProblem, datum_values, solve

__all__ = [
    "FamilyInvalidError",
    "InsufficientDataError",
    "ParameterFamily",
    "DecayReport",
    "DerivativeReport",
    "NOISE_FLOOR",
    "chebyshev_points",
    "sample_trace",
    "sample_traces",
    "chebyshev_coefficients",
    "chebyshev_derivative",
    "fit_decay",
    "fd_derivative_check",
]

NOISE_FLOOR = 1e-13
MIN_FIT_POINTS = 6
FIT_START = 2
RATE_THRESHOLD = 1.05
R2_THRESHOLD = 0.99
MARGIN_FRACTION = 0.2


class FamilyInvalidError(ValueError):
    """A sample of the family is not an admissible problem."""

    def __init__(self, t: float, message: str):
        super().__init__(f"family invalid at t={t!r}: {message}")
        self.t = t


class InsufficientDataError(ValueError):
    """Too few coefficients above the noise floor to fit a decay rate."""


@dataclass(frozen=True)
class ParameterFamily:
    """Affine family of Neumann problems on ``[t_min, t_max]``.

    Every ingredient moves linearly in ``t``: cell edges ``q0 + t dq``,
    radial shape parameters ``r0 + t dr0`` and ``a_m + t da_m`` (only when
    ``diffeo`` is a :class:`RadialDiffeo`), datum ``g0 + t dg`` and
    constant ``k0 + t dk``. Unused deltas stay zero.
    """

    q0: tuple[float, float]
    diffeo: DiffeoMap
    datum: Datum
    k0: float = 0.0
    dq: tuple[float, float] = (0.0, 0.0)
    dr0: float = 0.0
    dcos: tuple[float, ...] = ()
    dsin: tuple[float, ...] = ()
    ddatum: Datum | None = None
    dk: float = 0.0
    interval: tuple[float, float] = (-1.0, 1.0)
    n: int = 128
    ewald_xi: float | None = field(default=None, compare=False)

    @property
    def kind(self) -> str:
        parts = []
        if any(self.dq):
            parts.append("cell-edge")
        if self.dr0 or any(self.dcos) or any(self.dsin):
            parts.append("shape")
        if self.ddatum is not None:
            parts.append("datum")
        if self.dk:
            parts.append("constant")
        if not parts:
            return "trivial"
        return parts[0] if len(parts) == 1 else "joint"

    def __post_init__(self):
        shape_moves = self.dr0 or any(self.dcos) or any(self.dsin)
        if shape_moves and not isinstance(self.diffeo, RadialDiffeo):
            raise ValueError("shape families require a radial boundary map")
        if not self.interval[0] < self.interval[1]:
            raise ValueError("interval must satisfy t_min < t_max")

    def diffeo_at(self, t: float) -> DiffeoMap:
        d = self.diffeo
        if not isinstance(d, RadialDiffeo):
            return d

        def moved(base, delta):
            m = max(len(base), len(delta))
            b = np.pad(np.asarray(base, dtype=float), (0, m - len(base)))
            dd = np.pad(np.asarray(delta, dtype=float), (0, m - len(delta)))
            return tuple((b + t * dd).tolist())

        return replace(
            d,
            r0=d.r0 + t * self.dr0,
            cos_coeffs=moved(d.cos_coeffs, self.dcos),
            sin_coeffs=moved(d.sin_coeffs, self.dsin),
        )

    def edges_at(self, t: float) -> tuple[float, float]:
        return (self.q0[0] + t * self.dq[0], self.q0[1] + t * self.dq[1])

    def problem(self, t: float) -> NeumannProblem:
        cell = make_cell(*self.edges_at(t), ewald_xi=self.ewald_xi)
        g0, dg = self.datum, self.ddatum

        def datum(s):
            base = datum_values(g0, s)
            return base if dg is None else base + t * datum_values(dg, s)

        return NeumannProblem(cell, self.diffeo_at(t), datum, self.k0 + t * self.dk, self.n)

    def certify(self, ts) -> None:
        """Raise :class:`FamilyInvalidError` at the first inadmissible sample.

        Besides admissibility, the distance of the hole to the unit-cell
        boundary and the minimum node speed must stay above 20% of their
        ``t = 0`` values.
        """
        dist0, speed0 = admissibility_margin(self.diffeo_at(0.0), self.n)
        for t in ts:
            t = float(t)
            try:
                make_cell(*self.edges_at(t))
            except ValueError as exc:
                raise FamilyInvalidError(t, str(exc)) from None
            d = self.diffeo_at(t)
            report = check_admissible(d, self.n)
            if not report:
                raise FamilyInvalidError(t, f"{report.condition}: {report.message}")
            dist, speed = admissibility_margin(d, self.n)
            if dist < MARGIN_FRACTION * dist0 or speed < MARGIN_FRACTION * speed0:
                raise FamilyInvalidError(
                    t, f"admissibility margin {dist:.3g}/{speed:.3g} below 20% of t=0 values"
                )


def chebyshev_points(degree: int, interval=(-1.0, 1.0)) -> np.ndarray:
    """Chebyshev extreme points ``cos(pi j / d)`` mapped to ``interval``."""
    a, b = interval
    s = np.cos(np.pi * np.arange(degree + 1) / degree)
    return 0.5 * (a + b) + 0.5 * (b - a) * s


def sample_traces(
    family: ParameterFamily,
    probes,
    degree: int,
    shift=(0, 0),
    threads: int = 1,
) -> np.ndarray:
    """``u`` at each probe for every Chebyshev sample of the family.

    Returns shape ``(len(probes), degree + 1)``. Probes are physical points,
    optionally moved by the lattice vector ``q(t) shift``.
    """
    if degree < 4:
        raise ValueError("degree must be at least 4")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    ts = chebyshev_points(degree, family.interval)
    family.certify(ts)

    def one(t):
        prob = family.problem(t)
        bmap = build_boundary(prob.cell, prob.diffeo, prob.n)
        x = probes + np.asarray(shift, dtype=float) * prob.cell.edges
        if np.any(bmap.inside_hole(x)):
            raise FamilyInvalidError(float(t), "probe inside a hole")
        if np.any(bmap.distance_to_nodes(x) < near_boundary_distance(bmap)):
            raise FamilyInvalidError(float(t), "probe too close to the boundary")
        return solve(prob, bmap).evaluate(x)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, ts))
    else:
        rows = [one(t) for t in ts]
    return np.array(rows).T


def sample_trace(family: ParameterFamily, probe, degree: int, shift=(0, 0), threads: int = 1) -> np.ndarray:
    return sample_traces(family, [probe], degree, shift, threads)[0]


def chebyshev_coefficients(trace) -> np.ndarray:
    """Coefficients of the interpolant through values at Chebyshev extreme points.

    ``trace[j]`` is the value at ``cos(pi j / d)``.
    """
    f = np.asarray(trace, dtype=float)
    c = scipy.fft.dct(f, type=1) / (len(f) - 1)
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


def chebyshev_derivative(coeffs, t: float, interval=(-1.0, 1.0)) -> float:
    """Derivative at ``t`` of ``sum_k c_k T_k(s)``, ``s`` the affine image of ``t`` in [-1, 1]."""
    a, b = interval
    s = (2.0 * t - a - b) / (b - a)
    deriv = np.polynomial.chebyshev.chebder(np.asarray(coeffs, dtype=float))
    return float(np.polynomial.chebyshev.chebval(s, deriv) * 2.0 / (b - a))


@dataclass(frozen=True)
class DecayReport:
    """Geometric-decay fit of Chebyshev coefficient magnitudes."""

    probe: tuple[float, float] | None
    degree: int
    magnitudes: tuple[float, ...]
    rate: float | None
    r2: float | None
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict in ("analytic-consistent", "polynomial")

    def to_dict(self) -> dict:
        return {
            "probe": None if self.probe is None else list(self.probe),
            "degree": self.degree,
            "magnitudes": list(self.magnitudes),
            "rate": self.rate,
            "r2": self.r2,
            "verdict": self.verdict,
        }

    def to_csv_rows(self) -> list[tuple]:
        p = self.probe if self.probe is not None else (float("nan"), float("nan"))
        return [(p[0], p[1], j, m) for j, m in enumerate(self.magnitudes)]


def fit_decay(coeffs, probe=None) -> DecayReport:
    """Fit ``|c_j| ~ C rho^-j`` over the coefficients above the noise floor.

    The line is fitted for ``j >= 2``: adding an affine function of ``t``
    (what the ``g`` and ``k`` directions contribute) changes only ``c_0`` and
    ``c_1`` and so leaves the verdict unchanged.

    Verdicts: ``"polynomial"`` when fewer than six coefficients clear the
    floor and the tail sits at it; ``"analytic-consistent"`` when
    ``rho > 1.05`` and ``r^2 >= 0.99``; ``"not-analytic-consistent"``
    otherwise.
    """
    mags = np.abs(np.asarray(coeffs, dtype=float))
    degree = len(mags) - 1
    peak = float(np.max(mags)) if len(mags) else 0.0
    above = np.flatnonzero(mags > NOISE_FLOOR * peak) if peak > 0 else np.array([], dtype=int)
    if len(above) < MIN_FIT_POINTS:
        if len(above) == 0 or above[-1] < degree:
            return DecayReport(probe, degree, tuple(mags.tolist()), None, None, "polynomial")
        raise InsufficientDataError(
            f"{len(above)} coefficients above the noise floor, need {MIN_FIT_POINTS}"
        )
    fit = above[above >= FIT_START]
    j = fit.astype(float)
    y = np.log(mags[fit])
    slope, intercept = np.polyfit(j, y, 1)
    resid = y - (slope * j + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    rate = float(np.exp(-slope))
    ok = rate > RATE_THRESHOLD and r2 >= R2_THRESHOLD
    verdict = "analytic-consistent" if ok else "not-analytic-consistent"
    return DecayReport(probe, degree, tuple(mags.tolist()), rate, r2, verdict)


def reports_to_csv(reports: list[DecayReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["probe_x", "probe_y", "j", "abs_c"])
    for rep in reports:
        for px, py, j, m in rep.to_csv_rows():
            writer.writerow([format(px, ".17g"), format(py, ".17g"), j, format(m, ".17g")])
    return buf.getvalue()


@dataclass(frozen=True)
class DerivativeReport:
    t0: float
    interpolant: float
    steps: tuple[float, ...]
    finite_differences: tuple[float, ...]
    relative_errors: tuple[float, ...]
    order: float

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "interpolant": self.interpolant,
            "steps": list(self.steps),
            "finite_differences": list(self.finite_differences),
            "relative_errors": list(self.relative_errors),
            "order": self.order,
        }


def fd_derivative_check(
    family: ParameterFamily,
    probe,
    t0: float = 0.0,
    degree: int = 24,
    steps=(1e-3, 5e-4),
    coeffs=None,
) -> DerivativeReport:
    """Compare the Chebyshev-interpolant derivative with central differences.

    ``coeffs`` may carry precomputed coefficients of the trace at ``probe``.
    The observed order comes from the error ratio between the two steps.
    """
    a, b = family.interval
    if not a < t0 < b:
        raise ValueError("t0 must lie inside the family interval")
    if coeffs is None:
        coeffs = chebyshev_coefficients(sample_trace(family, probe, degree))
    exact = chebyshev_derivative(coeffs, t0, family.interval)
    probe = np.asarray(probe, dtype=float)
    fds = []
    for h in steps:
        family.certify([t0 - h, t0 + h])
        up = solve(family.problem(t0 + h)).evaluate(probe)
        down = solve(family.problem(t0 - h)).evaluate(probe)
        fds.append((up - down) / (2.0 * h))
    scale = max(abs(exact), np.finfo(float).tiny)
    errs = [abs(fd - exact) / scale for fd in fds]
    if len(steps) >= 2 and errs[0] > 0 and errs[1] > 0:
        order = float(np.log(errs[0] / errs[1]) / np.log(steps[0] / steps[1]))
    else:
        order = float("nan")
    return DerivativeReport(float(t0), exact, tuple(steps), tuple(fds), tuple(errs), order)
