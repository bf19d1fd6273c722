"""Edge and triangle quadrature.

Products of plane waves restricted to a straight edge are single complex
exponentials, so every assembly integral is evaluated in closed form with
:func:`edge_integral_exp`.  Gauss rules are kept for error norms, boundary
data that is not a plane wave, and cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

SINC_SERIES_CUTOFF = 1e-4


def sinc(t):
    """sin(t)/t, using a short Taylor series for ``|t| < 1e-4``."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    small = np.abs(t) < SINC_SERIES_CUTOFF
    safe = np.where(small, 1.0, t)
    direct = np.sin(safe) / safe
    series = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
    return np.where(small, series, direct)


def edge_integral_exp(a, b, k):
    """Integral of ``exp(i k.x)`` along the segment from `a` to `b`.

    Broadcasts over leading dimensions of `a`, `b` and `k` (last axis 2).

    Parameters
    ----------
    a, b : array_like, shape (..., 2)
        Edge endpoints.
    k : array_like, shape (..., 2)
        Real wave vector.

    Returns
    -------
    complex or ndarray
        ``|b - a| exp(i k.m) sinc(k.(b - a)/2)`` with ``m`` the midpoint.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = np.asarray(k, dtype=float)
    t = b - a
    length = np.hypot(t[..., 0], t[..., 1])
    if np.any(length == 0.0):
        raise ValueError("degenerate edge: endpoints coincide")
    mid = 0.5 * (a + b)
    phase = np.exp(1j * np.sum(k * mid, axis=-1))
    out = length * phase * sinc(0.5 * np.sum(k * t, axis=-1))
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    if n < 1:
        raise ValueError("need at least one Gauss point")
    x, w = roots_legendre(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True, eq=False)
class TriangleRule:
    """Quadrature rule on the reference triangle.

    Points are barycentric triples, weights are normalised to sum to one so
    that ``area * sum(w f)`` approximates the integral over any triangle.
    The rule is the collapsed-coordinate (Stroud conical) product of a
    Gauss-Jacobi and a Gauss-Legendre rule, exact for polynomials of total
    degree ``degree``.
    """

    degree: int
    barycentric: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)

    def map(self, corners):
        """Physical points for triangles ``corners`` of shape (..., 3, 2)."""
        corners = np.asarray(corners, dtype=float)
        return np.einsum("qj,...jd->...qd", self.barycentric, corners)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> TriangleRule:
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    m = degree // 2 + 1
    # collapsed coordinates: x = s, y = t (1 - s); Jacobian (1 - s)
    s, ws = roots_jacobi(m, 1.0, 0.0)
    t, wt = roots_legendre(m)
    s = 0.5 * (s + 1.0)
    ws = ws / 4.0
    t = 0.5 * (t + 1.0)
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    x = S.ravel()
    y = (T * (1.0 - S)).ravel()
    w = 2.0 * W.ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    bary.setflags(write=False)
    w.setflags(write=False)
    return TriangleRule(degree, bary, w)


def element_quadrature(mesh, degree: int):
    """Quadrature points (nt, Q, 2) and weights (nt, Q) on every triangle."""
    rule = triangle_rule(degree)
    corners = mesh.vertices[mesh.triangles]
    points = rule.map(corners)
    weights = mesh.areas[:, None] * rule.weights[None, :]
    return points, weights


def edge_quadrature(a, b, n: int):
    """Gauss points (E, n, 2) and weights (E, n) on segments ``a -> b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    x, w = gauss_legendre(n)
    points = a[:, None, :] + x[None, :, None] * (b - a)[:, None, :]
    length = np.hypot(*(b - a).T)
    return points, length[:, None] * w[None, :]


def adaptive_edge_integral(integrand, a, b, *, start: int = 4, cap: int = 64,
                           tol: float = 1e-10):
    """Integrate ``integrand`` over many edges, doubling Gauss points per edge.

    ``integrand(points, edge_index)`` receives points of shape (m, n, 2) for
    the edges ``edge_index`` still being refined and returns values of shape
    (m, n, ...).  Each edge stops once doubling changes its integral by less
    than ``tol`` relative to the integral's magnitude, or at ``cap`` points.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    active = np.arange(len(a))
    n = start
    pts, w = edge_quadrature(a, b, n)
    f = integrand(pts, active)
    current = np.einsum("en,en...->e...", w, f)
    result = np.array(current, dtype=complex)
    while len(active) and n < cap:
        n = min(2 * n, cap)
        pts, w = edge_quadrature(a[active], b[active], n)
        f = integrand(pts, active)
        refined = np.einsum("en,en...->e...", w, f)
        diff = np.abs(refined - result[active]).reshape(len(active), -1).max(axis=1)
        scale = np.abs(refined).reshape(len(active), -1).max(axis=1)
        result[active] = refined
        active = active[diff > tol * np.maximum(scale, np.finfo(float).tiny)]
    return result


def l2_norm_on_mesh(mesh, field, degree: int = 10) -> float:
    """L2 norm of an element-wise evaluable field.

    ``field(points, elements)`` takes points of shape (N, 2) and the owning
    element ids (N,) and returns complex values (N,).
    """
    if degree < 2:
        raise ValueError("quadrature degree must be at least 2")
    points, weights = element_quadrature(mesh, degree)
    nt, q = weights.shape
    elements = np.repeat(np.arange(nt), q)
    values = np.asarray(field(points.reshape(-1, 2), elements)).reshape(nt, q)
    return float(np.sqrt(np.sum(weights * np.abs(values) ** 2)))
