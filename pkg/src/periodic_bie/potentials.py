"""Nystrom discretization of the periodic single layer and its adjoint double layer.

For a density ``mu`` on the hole boundary,

    v[mu](x)  = int S_q(x - y) mu(y) dsigma_y,
    W*[mu](x) = int nu(x) . DS_q(x - y) mu(y) dsigma_y,    x on the boundary,

and the normal derivative of ``v`` jumps as ``-1/2 mu + W* mu`` from inside
the hole and ``+1/2 mu + W* mu`` from the perforated exterior.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cell_greens import (
    eval_greens,
    eval_greens_grad,
    greens_regular_grad,
    greens_regular_part,
)
from .geometry import BoundaryMap, trig_interpolate

__all__ = [
    "NearBoundaryWarning",
    "SingularTargetError",
    "Density",
    "WstarMatrix",
    "assemble_wstar",
    "apply_half_plus_wstar",
    "kress_log_weights",
    "single_layer_matrix",
    "single_layer_onboundary",
    "single_layer_offboundary",
    "gradient_offboundary",
    "near_boundary_distance",
    "upsample_density",
    "split_near_eval",
    "one_sided_limits",
]


MAX_FINE_NODES = 1 << 15


class NearBoundaryWarning(UserWarning):
    """Target closer to the boundary than the plain trapezoid rule resolves."""


class SingularTargetError(ValueError):
    """Target coincides with a boundary node."""


@dataclass(frozen=True)
class Density:
    """Node values of a boundary density.

    ``domain`` is ``"reference"`` for the pulled-back density on the
    reference boundary and ``"physical"`` for the density on the hole
    boundary. Both are stored at the same parameter nodes, so the pullback
    is the identity on node values.
    """

    values: np.ndarray
    weights: np.ndarray
    domain: str = "physical"

    def weighted_integral(self) -> float:
        return float(np.dot(self.values, self.weights))

    def is_zero_mean(self, rtol: float = 1e-12) -> bool:
        return abs(self.weighted_integral()) <= rtol * float(np.sum(self.weights)) * max(
            1.0, float(np.max(np.abs(self.values), initial=0.0))
        )

    def as_reference(self) -> "Density":
        return Density(self.values, self.weights, "reference")

    def as_physical(self) -> "Density":
        return Density(self.values, self.weights, "physical")


def _values(mu) -> np.ndarray:
    return np.asarray(mu.values if isinstance(mu, Density) else mu, dtype=float)


@dataclass(frozen=True)
class WstarMatrix:
    """``matrix[j, m] ~ nu_j . DS_q(x_j - x_m) w_m``; diagonal holds the curvature limit."""

    matrix: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def half_plus(self) -> np.ndarray:
        """Dense matrix of ``1/2 I + W*``."""
        return 0.5 * np.eye(self.n) + self.matrix


def assemble_wstar(bmap: BoundaryMap) -> WstarMatrix:
    """Assemble the adjoint double layer on the nodes of ``bmap``.

    Off the diagonal the kernel is sampled directly. On a smooth curve the
    free-space part tends to ``kappa / (4 pi)`` and the periodic remainder is
    even, so its gradient vanishes at the origin.
    """
    x = bmap.nodes
    n = bmap.n
    diff = x[:, None, :] - x[None, :, :]
    off = ~np.eye(n, dtype=bool)
    grad = np.zeros((n, n, 2))
    grad[off] = eval_greens_grad(bmap.cell, diff[off])
    kernel = np.einsum("jc,jmc->jm", bmap.normals, grad)
    kernel[~off] = bmap.curvature / (4.0 * np.pi)
    return WstarMatrix(kernel * bmap.weights[None, :], bmap.weights)


def apply_half_plus_wstar(wstar: WstarMatrix, mu):
    """``1/2 mu + W* mu``; returns a :class:`Density` if given one."""
    vals = _values(mu)
    if vals.shape != (wstar.n,):
        raise ValueError(f"density has shape {vals.shape}, operator expects ({wstar.n},)")
    out = 0.5 * vals + wstar.matrix @ vals
    if isinstance(mu, Density):
        return Density(out, mu.weights, mu.domain)
    return out


def kress_log_weights(n: int) -> np.ndarray:
    """Weights ``R_k`` with ``int_0^{2pi} log(4 sin^2((t_j - s)/2)) f(s) ds ~ sum_k R_{j-k} f(t_k)``.

    Exact for trigonometric polynomials of degree below ``n/2``.
    """
    half = n // 2
    tk = 2.0 * np.pi * np.arange(n) / n
    m = np.arange(1, half)
    r = -(2.0 * np.pi / half) * (np.cos(np.outer(tk, m)) @ (1.0 / m))
    r -= np.pi / half**2 * np.cos(half * tk)
    return r


def single_layer_matrix(bmap: BoundaryMap) -> np.ndarray:
    """Matrix of the on-boundary single layer ``v[mu](x_j)``.

    ``S_q(x(t) - x(s)) = 1/(4 pi) log(4 sin^2((t-s)/2)) + smooth``; the log
    factor gets the spectral product rule, the rest the trapezoid rule.
    """
    n = bmap.n
    x = bmap.nodes
    t = bmap.t
    idx = np.arange(n)
    lag = (idx[:, None] - idx[None, :]) % n
    log_part = kress_log_weights(n)[lag] / (4.0 * np.pi)

    diff = x[:, None, :] - x[None, :, :]
    off = ~np.eye(n, dtype=bool)
    dist = np.hypot(diff[..., 0], diff[..., 1])
    sin2 = 4.0 * np.sin(0.5 * (t[:, None] - t[None, :])) ** 2
    smooth = np.empty((n, n))
    smooth[off] = (np.log(dist[off]) - 0.5 * np.log(sin2[off])) / (2.0 * np.pi)
    smooth[~off] = np.log(bmap.speeds) / (2.0 * np.pi)
    regular = np.empty((n, n))
    regular[off] = greens_regular_part(bmap.cell, diff[off])
    regular[~off] = greens_regular_part(bmap.cell, np.zeros(2))
    smooth += regular
    return (log_part + (2.0 * np.pi / n) * smooth) * bmap.speeds[None, :]


def single_layer_onboundary(bmap: BoundaryMap, mu) -> np.ndarray:
    """Trace of the periodic single layer at the boundary nodes."""
    return single_layer_matrix(bmap) @ _values(mu)


def near_boundary_distance(bmap: BoundaryMap) -> float:
    """Minimum target distance for plain trapezoid evaluation."""
    return 2.0 * np.pi * bmap.perimeter / bmap.n


def _prepare_targets(bmap: BoundaryMap, x, warn: bool) -> tuple[np.ndarray, tuple]:
    pts = np.asarray(x, dtype=float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    dist = bmap.distance_to_nodes(pts)
    if np.any(dist <= 1e-14 * bmap.perimeter):
        raise SingularTargetError("target coincides with a boundary node")
    if warn and np.any(dist < near_boundary_distance(bmap)):
        warnings.warn(
            f"{int(np.sum(dist < near_boundary_distance(bmap)))} target(s) within "
            f"{near_boundary_distance(bmap):.3g} of the boundary; quadrature is under-resolved",
            NearBoundaryWarning,
            stacklevel=3,
        )
    return pts, shape


def _target_chunks(npts: int, nsrc: int):
    step = max(1, 65536 // nsrc)
    for start in range(0, npts, step):
        yield slice(start, min(npts, start + step))


def upsample_density(bmap: BoundaryMap, mu, factor: int) -> tuple[BoundaryMap, np.ndarray]:
    """Rebuild the boundary at ``factor * N`` nodes and interpolate ``mu`` onto it."""
    fine = bmap.resampled(factor * bmap.n)
    return fine, trig_interpolate(_values(mu), fine.t)


def single_layer_offboundary(bmap: BoundaryMap, mu, x, upsample: int = 1, warn: bool = True):
    """``sum_m S_q(x - x_m) mu_m w_m`` at targets ``x`` of shape ``(..., 2)``."""
    pts, shape = _prepare_targets(bmap, x, warn and upsample == 1)
    if upsample > 1:
        bmap, mu = upsample_density(bmap, mu, upsample)
    dens = _values(mu) * bmap.weights
    out = np.empty(len(pts))
    for sl in _target_chunks(len(pts), bmap.n):
        diff = pts[sl, None, :] - bmap.nodes[None, :, :]
        out[sl] = eval_greens(bmap.cell, diff) @ dens
    return out.reshape(shape) if shape else float(out[0])


def gradient_offboundary(bmap: BoundaryMap, mu, x, upsample: int = 1, warn: bool = True):
    """``sum_m DS_q(x - x_m) mu_m w_m`` at targets ``x`` of shape ``(..., 2)``."""
    pts, shape = _prepare_targets(bmap, x, warn and upsample == 1)
    if upsample > 1:
        bmap, mu = upsample_density(bmap, mu, upsample)
    dens = _values(mu) * bmap.weights
    out = np.empty((len(pts), 2))
    for sl in _target_chunks(len(pts), bmap.n):
        diff = pts[sl, None, :] - bmap.nodes[None, :, :]
        out[sl] = np.einsum("m,pmc->pc", dens, eval_greens_grad(bmap.cell, diff))
    return out.reshape(shape + (2,))


def _extrapolate_to_zero(deltas: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Value at ``delta = 0`` of the interpolating polynomial through the samples."""
    basis = np.array(
        [
            np.prod([-dk / (di - dk) for k, dk in enumerate(deltas) if k != i])
            for i, di in enumerate(deltas)
        ]
    )
    return np.tensordot(basis, samples, axes=(0, 0))


def split_near_eval(bmap: BoundaryMap, mu, x, upsample: int) -> tuple[np.ndarray, np.ndarray]:
    """Single layer and its gradient at targets close to the hole.

    The free-space part ``log|x - y| / (2 pi)`` is summed over the density
    upsampled by ``upsample``; the smooth periodic remainder uses the original
    nodes. Targets must lie near the hole itself, not a lattice translate.
    """
    pts = np.asarray(x, dtype=float).reshape(-1, 2)
    mu = _values(mu)
    fine, fine_mu = upsample_density(bmap, mu, upsample)
    fine_dens = fine_mu * fine.weights
    dens = mu * bmap.weights
    vals = np.empty(len(pts))
    grads = np.empty((len(pts), 2))
    for sl in _target_chunks(len(pts), fine.n):
        d = pts[sl, None, :] - fine.nodes[None, :, :]
        r2 = np.sum(d**2, axis=2)
        vals[sl] = (0.5 * np.log(r2) / (2.0 * np.pi)) @ fine_dens
        grads[sl] = np.einsum("m,pmc->pc", fine_dens, d / (2.0 * np.pi * r2[..., None]))
    for sl in _target_chunks(len(pts), bmap.n):
        d = pts[sl, None, :] - bmap.nodes[None, :, :]
        vals[sl] += greens_regular_part(bmap.cell, d) @ dens
        grads[sl] += np.einsum("m,pmc->pc", dens, greens_regular_grad(bmap.cell, d))
    return vals, grads


def _limit_ladder(bmap: BoundaryMap, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-node length scales, offset ratios and upsampling factor for :func:`one_sided_limits`.

    Node ``j`` is sampled at ``0.01 s_j (1, ..., 8)`` with ``s_j`` the smaller of
    the local radius of curvature and the hole's size; Lagrange weights only
    depend on offset ratios, so one extrapolation rule serves every node.
    """
    size = np.sqrt(abs(bmap.area))
    kappa = np.abs(bmap.curvature[idx])
    scale = 0.01 * np.minimum(size, 1.0 / np.maximum(kappa, 1e-300))
    ratios = np.arange(1.0, 9.0)
    # trapezoid error ~ exp(-delta M / speed); aim for exp(-40) at the smallest offset
    need = 40.0 * float(np.max(bmap.speeds[idx] / scale))
    factor = min(max(1, int(np.ceil(need / bmap.n))), MAX_FINE_NODES // bmap.n)
    return scale, ratios, factor


def one_sided_limits(
    bmap: BoundaryMap,
    mu,
    side: str = "exterior",
    nodes=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Limits of ``v[mu]`` and ``nu . grad v[mu]`` at boundary nodes from one side.

    Samples at ``x_j +/- delta nu_j`` (plus for the exterior) on a ladder of
    eight offsets, multiples of 1% of the local length scale, are evaluated with
    :func:`split_near_eval` and extrapolated polynomially to ``delta -> 0``.
    """
    if side not in ("exterior", "interior"):
        raise ValueError("side must be 'exterior' or 'interior'")
    sign = 1.0 if side == "exterior" else -1.0
    idx = np.arange(bmap.n) if nodes is None else np.asarray(nodes)
    scale, ratios, factor = _limit_ladder(bmap, idx)
    x = bmap.nodes[idx]
    nu = bmap.normals[idx]
    offsets = (sign * scale)[:, None] * nu
    targets = np.concatenate([x + r * offsets for r in ratios])
    vals, grads = split_near_eval(bmap, mu, targets, factor)
    vals = vals.reshape(len(ratios), len(idx))
    dnus = np.sum(grads.reshape(len(ratios), len(idx), 2) * nu[None], axis=2)
    return _extrapolate_to_zero(ratios, vals), _extrapolate_to_zero(ratios, dnus)
