"""Periodicity cell and the periodic Green's function of the 2-D Laplacian.

The kernel ``S`` is the q-periodic function with

    Delta S = sum_z delta_{qz} - 1/|Q|,

normalized by its Fourier series (no zero mode, hence zero mean over the cell):

    S(x) = - sum_{z != 0} exp(2 pi i k_z . x) / (|Q| 4 pi^2 |k_z|^2),   k_z = q^{-1} z.

Pointwise values are obtained by Ewald splitting with a Gaussian of width
``1/xi``:

    S(x) = - 1/(4 pi) sum_z E1(xi^2 |x - qz|^2)
           - 1/|Q| sum_{k != 0} exp(-pi^2 |k|^2 / xi^2) cos(2 pi k.x) / (4 pi^2 |k|^2)
           + 1/(4 xi^2 |Q|).

Near the lattice ``S(x) ~ (1/2 pi) log|x|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import exp1

__all__ = [
    "InvalidCellError",
    "SingularityError",
    "PeriodicCell",
    "make_cell",
    "fourier_coefficient",
    "eval_greens",
    "eval_greens_grad",
    "greens_regular_part",
    "greens_regular_grad",
    "verify_poisson_property",
]

EULER_GAMMA = 0.57721566490153286061
MAX_ASPECT = 50.0
# exponent at which Gaussian tails are dropped: e^-42 ~ 6e-19
_TAIL_EXPONENT = 42.0
_CHUNK = 1 << 20


class InvalidCellError(ValueError):
    """Raised for a non-positive or overly anisotropic periodicity cell."""


class SingularityError(ValueError):
    """Raised when the kernel is evaluated on the lattice q Z^2."""


@dataclass(frozen=True)
class PeriodicCell:
    """Rectangular cell ``(0, q11) x (0, q22)`` together with Ewald state.

    Use :func:`make_cell` to construct; it validates the edges and picks
    ``ewald_xi`` and the truncation sets.
    """

    q11: float
    q22: float
    ewald_xi: float
    real_images: np.ndarray = field(repr=False, compare=False)
    fourier_modes: np.ndarray = field(repr=False, compare=False)

    @property
    def edges(self) -> np.ndarray:
        return np.array([self.q11, self.q22])

    @property
    def cell_measure(self) -> float:
        return self.q11 * self.q22

    @property
    def truncation(self) -> tuple[int, int]:
        """Number of real-space images and of Fourier modes retained."""
        return len(self.real_images), len(self.fourier_modes)

    def reduce(self, x: np.ndarray) -> np.ndarray:
        """Translate points by lattice vectors into ``[-q/2, q/2]``."""
        x = np.asarray(x, dtype=float)
        q = self.edges
        return x - q * np.round(x / q)

    def to_cell(self, x: np.ndarray) -> np.ndarray:
        """Translate points by lattice vectors into ``[0, q11) x [0, q22)``."""
        x = np.asarray(x, dtype=float)
        q = self.edges
        return x - q * np.floor(x / q)


def make_cell(q11: float, q22: float, ewald_xi: float | None = None) -> PeriodicCell:
    """Build a periodicity cell with edge lengths ``q11`` and ``q22``.

    Both Ewald sums are truncated where their Gaussian factors drop below
    ``exp(-42)``, so the two truncation errors match for any ``ewald_xi``.
    The default ``2 sqrt(pi / |Q|)`` minimizes evaluation time: it moves
    work from the exponential-integral sum to the cheaper cosine sum.
    """
    q11 = float(q11)
    q22 = float(q22)
    if not (np.isfinite(q11) and np.isfinite(q22)) or q11 <= 0.0 or q22 <= 0.0:
        raise InvalidCellError(f"cell edges must be positive, got ({q11}, {q22})")
    aspect = q11 / q22
    if not (1.0 / MAX_ASPECT <= aspect <= MAX_ASPECT):
        raise InvalidCellError(
            f"aspect ratio {aspect:.6g} outside [1/{MAX_ASPECT:g}, {MAX_ASPECT:g}]"
        )
    measure = q11 * q22
    xi = 2.0 * float(np.sqrt(np.pi / measure)) if ewald_xi is None else float(ewald_xi)
    if not np.isfinite(xi) or xi <= 0.0:
        raise InvalidCellError(f"ewald_xi must be positive, got {ewald_xi}")

    # reduced targets satisfy |x| <= half diagonal, so |x - qz| >= |qz| - hd
    half_diag = 0.5 * np.hypot(q11, q22)
    radius = np.sqrt(_TAIL_EXPONENT) / xi + half_diag
    n1 = int(np.ceil(radius / q11))
    n2 = int(np.ceil(radius / q22))
    z1, z2 = np.meshgrid(np.arange(-n1, n1 + 1), np.arange(-n2, n2 + 1), indexing="ij")
    images = np.stack([z1.ravel() * q11, z2.ravel() * q22], axis=1)
    keep = np.hypot(images[:, 0], images[:, 1]) <= radius
    images = images[keep]
    # z = 0 first; the regular part treats it separately
    order = np.argsort(np.hypot(images[:, 0], images[:, 1]), kind="stable")
    images = images[order]

    kmax = np.sqrt(_TAIL_EXPONENT) * xi / np.pi
    m1 = int(np.ceil(kmax * q11))
    m2 = int(np.ceil(kmax * q22))
    a, b = np.meshgrid(np.arange(-m1, m1 + 1), np.arange(-m2, m2 + 1), indexing="ij")
    modes = np.stack([a.ravel() / q11, b.ravel() / q22], axis=1)
    k2 = np.sum(modes**2, axis=1)
    # cos is even in k: keep one of each +/- pair and double
    half = (a.ravel() > 0) | ((a.ravel() == 0) & (b.ravel() > 0))
    keep = half & (k2 <= kmax**2)
    modes = modes[keep]

    return PeriodicCell(q11, q22, xi, real_images=images, fourier_modes=modes)


def fourier_coefficient(cell: PeriodicCell, z) -> float:
    """Coefficient of ``exp(2 pi i (q^-1 z) . x)`` in the series for ``S``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (2,):
        raise ValueError("z must be an integer pair")
    if np.all(z == 0):
        raise ValueError("the series has no zero-frequency term")
    k = z / cell.edges
    return -1.0 / (cell.cell_measure * 4.0 * np.pi**2 * float(k @ k))


def _as_points(x) -> tuple[np.ndarray, tuple[int, ...]]:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"points must have trailing dimension 2, got shape {x.shape}")
    return x.reshape(-1, 2), x.shape[:-1]


def _chunks(npts: int, width: int):
    step = max(1, _CHUNK // max(width, 1))
    for start in range(0, npts, step):
        yield slice(start, min(npts, start + step))


def _fourier_part(cell: PeriodicCell, x: np.ndarray, grad: bool) -> np.ndarray:
    k = cell.fourier_modes
    k2 = np.sum(k**2, axis=1)
    amp = 2.0 * np.exp(-np.pi**2 * k2 / cell.ewald_xi**2) / (4.0 * np.pi**2 * k2)
    amp /= cell.cell_measure
    out = np.empty((len(x), 2) if grad else len(x))
    for sl in _chunks(len(x), len(k)):
        phase = 2.0 * np.pi * (x[sl] @ k.T)
        if grad:
            out[sl] = (np.sin(phase) * amp) @ (2.0 * np.pi * k)
        else:
            out[sl] = -(np.cos(phase) @ amp)
    return out


def _real_part(cell: PeriodicCell, x: np.ndarray, grad: bool, skip_origin: bool) -> np.ndarray:
    xi2 = cell.ewald_xi**2
    images = cell.real_images[1:] if skip_origin else cell.real_images
    out = np.empty((len(x), 2) if grad else len(x))
    for sl in _chunks(len(x), len(images)):
        d = x[sl, None, :] - images[None, :, :]
        r2 = np.sum(d**2, axis=2)
        if grad:
            # d/dx [-E1(xi^2 r^2)/(4 pi)] = exp(-xi^2 r^2) x / (2 pi r^2)
            fac = np.exp(-xi2 * r2) / (2.0 * np.pi * r2)
            out[sl] = np.einsum("pm,pmc->pc", fac, d)
        else:
            out[sl] = -np.sum(exp1(xi2 * r2), axis=1) / (4.0 * np.pi)
    return out


def _check_lattice(cell: PeriodicCell, xr: np.ndarray) -> None:
    tiny = 1e-14 * min(cell.q11, cell.q22)
    if np.any(np.hypot(xr[:, 0], xr[:, 1]) <= tiny):
        raise SingularityError("Green's function evaluated on the lattice q Z^2")


def eval_greens(cell: PeriodicCell, x) -> np.ndarray | float:
    """Periodic Green's function ``S_q(x)``; vectorized over leading axes."""
    pts, shape = _as_points(x)
    xr = cell.reduce(pts)
    _check_lattice(cell, xr)
    val = _real_part(cell, xr, False, False) + _fourier_part(cell, xr, False)
    val += 1.0 / (4.0 * cell.ewald_xi**2 * cell.cell_measure)
    return val.reshape(shape) if shape else float(val[0])


def eval_greens_grad(cell: PeriodicCell, x) -> np.ndarray:
    """Gradient ``DS_q(x)``, differentiated term by term in the Ewald split."""
    pts, shape = _as_points(x)
    xr = cell.reduce(pts)
    _check_lattice(cell, xr)
    val = _real_part(cell, xr, True, False) + _fourier_part(cell, xr, True)
    return val.reshape(shape + (2,))


def _ein(u: np.ndarray) -> np.ndarray:
    """Entire function ``Ein(u) = E1(u) + log(u) + gamma``."""
    out = np.empty_like(u)
    small = u < 0.05
    us = u[small]
    term = us.copy()
    acc = us.copy()
    for n in range(2, 12):
        term = -term * us / n
        acc += term / n
    out[small] = acc
    ub = u[~small]
    out[~small] = exp1(ub) + np.log(ub) + EULER_GAMMA
    return out


def greens_regular_part(cell: PeriodicCell, x) -> np.ndarray | float:
    """``S_q(x) - (1/2 pi) log|x|``, finite at ``x = 0``.

    Valid for ``|x|`` smaller than the shortest lattice vector, which holds
    for differences of points on one hole inside the cell.
    """
    pts, shape = _as_points(x)
    xr = cell.reduce(pts)
    shifted = np.any(np.abs(xr - pts) > 0.0, axis=1)
    out = np.empty(len(pts))
    if np.any(shifted):
        # |x| >= min(q)/2 here, no cancellation in the log subtraction
        p = pts[shifted]
        out[shifted] = eval_greens(cell, p) - np.log(np.hypot(p[:, 0], p[:, 1])) / (2.0 * np.pi)
    own = ~shifted
    if np.any(own):
        p = xr[own]
        xi2 = cell.ewald_xi**2
        u = xi2 * np.sum(p**2, axis=1)
        # -E1(u)/(4 pi) - log|x|/(2 pi) = (-Ein(u) + gamma + log xi^2)/(4 pi)
        origin = (-_ein(u) + EULER_GAMMA + np.log(xi2)) / (4.0 * np.pi)
        out[own] = (
            origin
            + _real_part(cell, p, False, True)
            + _fourier_part(cell, p, False)
            + 1.0 / (4.0 * xi2 * cell.cell_measure)
        )
    return out.reshape(shape) if shape else float(out[0])


def greens_regular_grad(cell: PeriodicCell, x) -> np.ndarray:
    """Gradient of :func:`greens_regular_part`; zero at the origin."""
    pts, shape = _as_points(x)
    xr = cell.reduce(pts)
    shifted = np.any(np.abs(xr - pts) > 0.0, axis=1)
    out = np.empty((len(pts), 2))
    if np.any(shifted):
        p = pts[shifted]
        out[shifted] = eval_greens_grad(cell, p) - p / (2.0 * np.pi * np.sum(p**2, axis=1))[:, None]
    own = ~shifted
    if np.any(own):
        p = xr[own]
        xi2 = cell.ewald_xi**2
        u = xi2 * np.sum(p**2, axis=1)
        # x (exp(-u) - 1) / (2 pi r^2), finite as u -> 0
        ratio = np.ones_like(u)
        nz = u > 0.0
        ratio[nz] = -np.expm1(-u[nz]) / u[nz]
        origin = -xi2 * ratio[:, None] * p / (2.0 * np.pi)
        out[own] = origin + _real_part(cell, p, True, True) + _fourier_part(cell, p, True)
    return out.reshape(shape + (2,))


def verify_poisson_property(cell: PeriodicCell, x, h: float = 1e-3) -> float:
    """Five-point Laplacian of ``S`` at ``x`` plus ``1/|Q|``.

    Off the lattice ``Delta S = -1/|Q|``, so the result is the O(h^2)
    finite-difference error.
    """
    x = np.asarray(x, dtype=float)
    offsets = np.array([[0.0, 0.0], [h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
    s = eval_greens(cell, x[None, :] + offsets)
    lap = (s[1] + s[2] + s[3] + s[4] - 4.0 * s[0]) / h**2
    return float(lap + 1.0 / cell.cell_measure)
