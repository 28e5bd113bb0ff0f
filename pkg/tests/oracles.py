"""Independent reference computations used by the tests.

None of these share code with the package: the kernel oracle sums the
Fourier series directly, the arc-length oracle uses adaptive quadrature,
and the Chebyshev oracle integrates in extended precision.
"""

from __future__ import annotations

import mpmath
import numpy as np
from scipy.integrate import quad


def regularized_fourier_sum(x, q, eps: float) -> float:
    """``-sum_{z != 0} exp(-eps |k|^2) cos(2 pi k.x) / (|Q| 4 pi^2 |k|^2)``, ``k = q^-1 z``.

    Terms are kept while ``eps |k|^2 <= 45``.
    """
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    kmax = np.sqrt(45.0 / eps)
    m1 = int(kmax * q[0]) + 2
    m2 = int(kmax * q[1]) + 2
    a, b = np.meshgrid(np.arange(-m1, m1 + 1), np.arange(-m2, m2 + 1), indexing="ij")
    k1 = a / q[0]
    k2 = b / q[1]
    kk = k1**2 + k2**2
    kk[m1, m2] = 1.0
    terms = np.exp(-eps * kk) / (4.0 * np.pi**2 * kk) * np.cos(2.0 * np.pi * (k1 * x[0] + k2 * x[1]))
    terms[m1, m2] = 0.0
    return -float(np.sum(terms)) / (q[0] * q[1])


def brute_force_greens(x, q, eps: float = 0.02) -> float:
    """Richardson extrapolation ``2 S_{eps/2} - S_eps`` of the regularized sum.

    The regularization is the heat semigroup applied to ``S``; since
    ``Delta S`` is constant off the lattice, the ``eps`` expansion is linear
    up to terms of size ``exp(-pi^2 d^2 / eps)`` at distance ``d`` from the lattice.
    """
    return 2.0 * regularized_fourier_sum(x, q, eps / 2.0) - regularized_fourier_sum(x, q, eps)


def ellipse_perimeter(a: float, b: float) -> float:
    """Arc length of ``(a cos t, b sin t)`` by adaptive quadrature."""
    val, _ = quad(lambda t: np.hypot(a * np.sin(t), b * np.cos(t)), 0.0, 2.0 * np.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def curve_length(dpoint, lo: float = 0.0, hi: float = 2.0 * np.pi) -> float:
    """Arc length of a parametric curve given its derivative ``t -> (x'(t), y'(t))``."""
    val, _ = quad(lambda t: float(np.hypot(*dpoint(t))), lo, hi, epsabs=1e-13, epsrel=1e-13, limit=400)
    return val


def chebyshev_coefficient(f, j: int, dps: int = 30) -> float:
    """``(2/pi) int_0^pi f(cos s) cos(j s) ds`` (halved for ``j = 0``) in extended precision."""
    with mpmath.workdps(dps):
        c = mpmath.quad(lambda s: f(mpmath.cos(s)) * mpmath.cos(j * s), [0, mpmath.pi])
        c = 2 * c / mpmath.pi
        if j == 0:
            c /= 2
        return float(c)


def polyline_is_simple(points: np.ndarray) -> bool:
    """Simplicity of the closed polyline through ``points`` via shapely."""
    from shapely.geometry import LinearRing

    return bool(LinearRing(points).is_simple)


def fd_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.eye(2) * h
    return np.array([(f(x + e[i]) - f(x - e[i])) / (2.0 * h) for i in range(2)])
