"""Plane-wave Trefftz spaces.

On element K the basis is ``exp(i kappa_K d_j . (x - c_K))`` for ``p``
uniformly spaced directions ``d_j`` and the element centroid ``c_K``.
Referencing the phase to the centroid keeps every basis value of unit
modulus near the element and bounds the dynamic range of matrix entries.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .quadrature import element_quadrature, triangle_rule


def directions(p: int) -> np.ndarray:
    """Unit vectors ``(cos 2 pi j/p, sin 2 pi j/p)`` for ``j = 1..p``."""
    p = int(p)
    if p < 1:
        raise ValueError("need at least one direction")
    theta = 2.0 * np.pi * np.arange(1, p + 1) / p
    return np.column_stack([np.cos(theta), np.sin(theta)])


@dataclass(frozen=True, eq=False)
class PlaneWaveSpace:
    """Uniform-``p`` plane-wave space on a mesh.

    Parameters
    ----------
    mesh : Mesh
    p : int
        Directions per element (>= 3).
    kappa : float
        Free-space wavenumber.
    index : array_like, optional
        Refractive index per element; the local wavenumber is
        ``kappa * index``.  Defaults to 1 everywhere.
    """

    mesh: object
    p: int
    kappa: float
    index: np.ndarray | None = None

    def __post_init__(self):
        if int(self.p) < 3:
            raise ValueError("plane-wave spaces need p >= 3")
        if not self.kappa > 0:
            raise ValueError("wavenumber must be positive")
        nt = self.mesh.n_triangles
        index = np.ones(nt) if self.index is None else np.array(self.index, dtype=float)
        if index.shape != (nt,) or np.any(index <= 0):
            raise ValueError("refractive index must be positive, one value per element")
        index.setflags(write=False)
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "index", index)

    @cached_property
    def directions(self) -> np.ndarray:
        return directions(self.p)

    @cached_property
    def kappa_local(self) -> np.ndarray:
        return self.kappa * self.index

    @property
    def centers(self) -> np.ndarray:
        return self.mesh.centroids

    @property
    def n_elements(self) -> int:
        return self.mesh.n_triangles

    @property
    def ndof(self) -> int:
        return self.n_elements * self.p

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.arange(self.n_elements + 1) * self.p

    def dof(self, element: int, direction: int) -> int:
        return int(self.offsets[element]) + int(direction)

    def _check(self, elements):
        elements = np.asarray(elements, dtype=np.int64)
        if elements.size and (elements.min() < 0 or elements.max() >= self.n_elements):
            raise IndexError("unknown element")
        return elements

    def basis(self, elements, points):
        """Basis values (N, p) and gradients (N, p, 2) at ``points`` (N, 2).

        ``points[i]`` is evaluated with the basis of ``elements[i]``; the
        point need not lie inside the element.
        """
        elements = self._check(elements)
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        kap = self.kappa_local[elements]
        shift = points - self.centers[elements]
        wave = kap[:, None, None] * self.directions[None, :, :]      # (N, p, 2)
        values = np.exp(1j * np.einsum("npd,nd->np", wave, shift))
        grads = 1j * wave * values[:, :, None]
        return values, grads

    def evaluate(self, coeffs, elements, points):
        """Field value (N,) and gradient (N, 2) of coefficient array ``coeffs``."""
        coeffs = np.asarray(coeffs).reshape(self.n_elements, self.p)
        values, grads = self.basis(elements, points)
        c = coeffs[np.asarray(elements, dtype=np.int64)]
        return np.einsum("np,np->n", c, values), np.einsum("np,npd->nd", c, grads)

    def field(self, coeffs):
        """Callable ``(points, elements) -> (u, grad u)`` for ``coeffs``."""
        def f(points, elements):
            return self.evaluate(coeffs, elements, points)
        return f


def eval_basis(space: PlaneWaveSpace, element: int, point):
    """Values (p,) and gradients (p, 2) of element ``element``'s basis at ``point``."""
    values, grads = space.basis(np.array([element]), np.asarray(point, dtype=float)[None, :])
    return values[0], grads[0]


def linear_reproduction_coeffs(space: PlaneWaveSpace, element: int, degree: int = 12):
    """Coefficients turning the plane waves of ``element`` into 1, x1, x2.

    Row ``i`` of the returned (3, p) matrix holds ``alpha_i`` such that
    ``sum_j alpha_ij psi_j`` approximates ``1``, ``x1 - c1`` and ``x2 - c2``
    on the element (``c`` the centroid).  The coefficients are the least
    squares (minimum norm when underdetermined) match of the moments of
    both sides against ``{1, y1, y2, y1^2, y1 y2, y2^2}`` with
    ``y = (x - c)/h_K``.

    Raises
    ------
    numpy.linalg.LinAlgError
        When the moment matrix is rank deficient beyond the inherent
        dependence of the plane waves.
    """
    from .mesh import circumscribed_diameters

    space._check([element])
    mesh = space.mesh
    rule = triangle_rule(degree)
    corners = mesh.vertices[mesh.triangles[element]]
    pts = rule.map(corners)
    w = rule.weights * mesh.areas[element]
    c = mesh.centroids[element]
    hk = circumscribed_diameters(mesh)[element]
    y = (pts - c) / hk
    monomials = np.column_stack([np.ones(len(y)), y[:, 0], y[:, 1],
                                 y[:, 0] ** 2, y[:, 0] * y[:, 1], y[:, 1] ** 2])
    values, _ = space.basis(np.full(len(pts), element), pts)
    M = np.einsum("q,qk,qj->kj", w, monomials, values)
    targets = np.column_stack([np.ones(len(y)), pts[:, 0] - c[0], pts[:, 1] - c[1]])
    B = np.einsum("q,qk,qi->ki", w, monomials, targets).astype(complex)
    # equilibrate rows so each moment equation carries equal weight
    scale = np.linalg.norm(M, axis=1)
    coeffs, _, rank, sv = np.linalg.lstsq(M / scale[:, None], B / scale[:, None], rcond=None)
    needed = min(5, space.p, 6)
    if rank < needed:
        raise np.linalg.LinAlgError(
            f"moment system rank {rank} < {needed}: direction set cannot reproduce linears")
    return coeffs.T
