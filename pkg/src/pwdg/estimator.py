"""Residual a posteriori indicators and Dörfler marking.

Both indicators are sums of edge integrals of the jumps of the discrete
field and of the boundary residuals.  The integrands are evaluated point
by point with Gauss rules rather than as quadratic forms in the
coefficients: that keeps relative accuracy when the jumps are tiny, which
is exactly the regime where the indicator matters.  Interior-edge
contributions are split evenly between the two neighbours.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import FluxParams, ProblemData
from .mesh import EdgeTag, Mesh
from .quadrature import edge_quadrature

MAX_EDGE_POINTS = 64


class IndicatorKind(enum.Enum):
    DG = "dg"
    WEIGHTED = "weighted"


@dataclass(frozen=True, eq=False)
class IndicatorReport:
    """Per-element squared indicators and their per-term split.

    ``terms`` maps ``"jump"``, ``"grad_jump"``, ``"impedance"`` and
    ``"dirichlet"`` to per-element arrays summing to ``eta_k2``.
    """

    eta_k2: np.ndarray
    kind: IndicatorKind
    s: float | None = None
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        eta = np.array(self.eta_k2, dtype=float)
        if eta.ndim != 1 or np.any(eta < 0) or not np.all(np.isfinite(eta)):
            raise ValueError("element indicators must be finite and nonnegative")
        eta.setflags(write=False)
        object.__setattr__(self, "eta_k2", eta)

    @property
    def eta(self) -> float:
        return math.sqrt(float(np.sum(self.eta_k2)))

    def __len__(self) -> int:
        return len(self.eta_k2)


def _as_field(space, solution):
    if callable(solution) and not hasattr(solution, "coeffs"):
        return solution
    other = getattr(solution, "space", None)
    if other is not None and other.mesh is not space.mesh:
        raise ValueError("solution lives on a different mesh")
    coeffs = solution.coeffs if hasattr(solution, "coeffs") else np.asarray(solution)
    if np.size(coeffs) != space.ndof:
        raise ValueError("solution does not match the space")
    return space.field(coeffs)


def _points_per_edge(mesh: Mesh, space) -> int:
    kmax = float(np.max(space.kappa_local))
    hmax = float(np.max(mesh.edge_lengths))
    return int(min(MAX_EDGE_POINTS, 8 + math.ceil(2.0 * kmax * hmax)))


def _edge_norms(mesh: Mesh, space, solution, data: ProblemData):
    """Squared L2 norms per edge of the four residual quantities."""
    if space.mesh is not mesh:
        raise ValueError("space is defined on a different mesh")
    fieldfn = _as_field(space, solution)
    n = _points_per_edge(mesh, space)
    edges = mesh.edges
    pts, w = edge_quadrature(mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]], n)
    ne = len(edges)
    normals = np.repeat(mesh.edge_normals, n, axis=0)
    elem = mesh.edge_elements
    tags = mesh.edge_tags

    def trace(side, ids):
        u, g = fieldfn(pts[ids].reshape(-1, 2), np.repeat(elem[ids, side], n))
        nrm = normals.reshape(ne, n, 2)[ids].reshape(-1, 2)
        return u.reshape(-1, n), np.sum(g * nrm, axis=1).reshape(-1, n)

    jump = np.zeros(ne)
    grad_jump = np.zeros(ne)
    imp = np.zeros(ne)
    dir_ = np.zeros(ne)

    inner = np.flatnonzero(tags == EdgeTag.INTERIOR)
    if len(inner):
        u1, dn1 = trace(0, inner)
        u2, dn2 = trace(1, inner)
        jump[inner] = np.sum(w[inner] * np.abs(u1 - u2) ** 2, axis=1)
        grad_jump[inner] = np.sum(w[inner] * np.abs(dn1 - dn2) ** 2, axis=1)

    ia = np.flatnonzero(tags == EdgeTag.IMPEDANCE)
    if len(ia):
        u, dn = trace(0, ia)
        k = space.kappa_local[elem[ia, 0]][:, None]
        res = dn - 1j * k * u
        if data.g_impedance is not None:
            sel = pts[ia].reshape(-1, 2)
            g = np.asarray(data.g_impedance(sel, normals.reshape(ne, n, 2)[ia].reshape(-1, 2)))
            res = g.reshape(-1, n) - res
        imp[ia] = np.sum(w[ia] * np.abs(res) ** 2, axis=1)

    idd = np.flatnonzero(tags == EdgeTag.DIRICHLET)
    if len(idd):
        u, _ = trace(0, idd)
        if data.g_dirichlet is not None:
            sel = pts[idd].reshape(-1, 2)
            g = np.asarray(data.g_dirichlet(sel, normals.reshape(ne, n, 2)[idd].reshape(-1, 2)))
            u = u - g.reshape(-1, n)
        dir_[idd] = np.sum(w[idd] * np.abs(u) ** 2, axis=1)
    return jump, grad_jump, imp, dir_


def _distribute(mesh: Mesh, per_edge: np.ndarray) -> np.ndarray:
    """Give boundary edges to their element, interior edges half to each side."""
    out = np.zeros(mesh.n_triangles)
    elem = mesh.edge_elements
    inner = elem[:, 1] >= 0
    np.add.at(out, elem[~inner, 0], per_edge[~inner])
    np.add.at(out, elem[inner, 0], 0.5 * per_edge[inner])
    np.add.at(out, elem[inner, 1], 0.5 * per_edge[inner])
    return out


def _report(mesh, contributions, kind, s):
    terms = {name: _distribute(mesh, c) for name, c in contributions.items()}
    total = sum(terms.values())
    return IndicatorReport(total, kind, s, terms)


def eta_dg(mesh: Mesh, space, solution, data: ProblemData,
           params: FluxParams | None = None) -> IndicatorReport:
    """Residual indicator in the DG norm.

    ``solution`` may be a solver ``Solution``, a coefficient array, or a
    callable ``(points, elements) -> (u, grad u)``.
    """
    params = FluxParams.uwvf() if params is None else params
    jump, grad_jump, imp, dir_ = _edge_norms(mesh, space, solution, data)
    alpha, beta, delta = params.on_edges(mesh.edge_lengths, mesh.h)
    k = data.kappa
    return _report(mesh, {
        "jump": k * alpha * jump,
        "grad_jump": beta / k * grad_jump,
        "impedance": delta / k * imp,
        "dirichlet": k * alpha * dir_,
    }, IndicatorKind.DG, None)


def eta_weighted(mesh: Mesh, space, solution, data: ProblemData,
                 params: FluxParams | None = None, s: float = 0.5) -> IndicatorReport:
    """Edge-length weighted indicator with weight ``h_e^(2 s)``, ``0 <= s <= 1/2``."""
    s = float(s)
    if not 0.0 <= s <= 0.5:
        raise ValueError("weight exponent s must lie in [0, 1/2]")
    params = FluxParams.uwvf() if params is None else params
    jump, grad_jump, imp, dir_ = _edge_norms(mesh, space, solution, data)
    alpha, beta, delta = params.on_edges(mesh.edge_lengths, mesh.h)
    k2 = data.kappa ** 2
    hw = mesh.edge_lengths ** (2.0 * s)
    return _report(mesh, {
        "jump": alpha * hw * jump,
        "grad_jump": beta * hw / k2 * grad_jump,
        "impedance": delta * hw / k2 * imp,
        "dirichlet": alpha * hw * dir_,
    }, IndicatorKind.WEIGHTED, s)


def doerfler_mark(report: IndicatorReport, theta: float = 0.3) -> set[int]:
    """Smallest set of elements carrying a ``theta`` share of the squared indicator.

    Elements are taken in order of decreasing ``eta_k2`` with ties broken
    by the lower element id.  A zero indicator marks nothing.
    """
    theta = float(theta)
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    eta = np.asarray(report.eta_k2 if hasattr(report, "eta_k2") else report, dtype=float)
    if eta.size == 0:
        raise ValueError("empty indicator report")
    order = np.argsort(-eta, kind="stable")
    csum = np.cumsum(eta[order])
    total = csum[-1]
    if total <= 0:
        return set()
    count = int(np.searchsorted(csum, theta * total, side="left")) + 1
    count = min(count, len(order))
    # with theta = 1 rounding may leave trailing zeros in the prefix
    chosen = order[:count]
    return {int(i) for i in chosen if eta[i] > 0}
