"""PWDG linear system: numerical fluxes, sesquilinear form and load vector.

With trial ``u`` and test ``v`` the form is, edge class by edge class,

interior edges::

    {u}[[grad v*]] - [[v*]].{grad u} - beta/(i k) [[grad u]][[grad v*]]
        + i k alpha [[u]].[[v*]]

impedance edges::

    -delta (du/dn) v* + (1 + delta) u (dv*/dn) - delta/(i k) (du/dn)(dv*/dn)
        - i k (1 - delta) u v*

Dirichlet edges::

    -(du/dn) v* + i k alpha u v*

and the load collects ``g_A`` on impedance edges and ``g_D`` on Dirichlet
edges (the Dirichlet flux is ``u_hat = g_D``,
``i k sigma_hat = grad u - i k alpha (u - g_D) nu``).  ``k`` in the penalty
and Dirichlet terms is the free-space wavenumber; impedance terms use the
wavenumber of the adjacent element.  Products of plane waves on a straight
edge are single exponentials, so every matrix entry is exact.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .basis import PlaneWaveSpace
from .mesh import EdgeTag, Mesh
from .quadrature import adaptive_edge_integral, sinc

BoundaryFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class FluxStrategy(enum.Enum):
    MESH_DEPENDENT = "mesh"
    CONSTANT = "constant"


@dataclass(frozen=True)
class FluxParams:
    """Penalty parameters alpha, beta, delta.

    ``MESH_DEPENDENT`` scales ``(a, b, d)`` by ``h / h_e`` and caps delta at
    1/2; ``CONSTANT`` uses ``(a, b, d)`` as ``(alpha, beta, delta)`` on every
    edge and needs ``delta < 1``.
    """

    strategy: FluxStrategy
    a: float
    b: float
    d: float

    def __post_init__(self):
        object.__setattr__(self, "strategy", FluxStrategy(self.strategy))
        if min(self.a, self.b, self.d) <= 0:
            raise ValueError("flux parameters must be positive")
        if self.strategy is FluxStrategy.CONSTANT and self.d >= 1:
            raise ValueError("constant delta must be < 1")

    @classmethod
    def uwvf(cls) -> "FluxParams":
        return cls(FluxStrategy.CONSTANT, 0.5, 0.5, 0.5)

    @classmethod
    def mesh_dependent(cls, a=1.0, b=1.0, d=0.5) -> "FluxParams":
        return cls(FluxStrategy.MESH_DEPENDENT, a, b, d)

    @classmethod
    def constant(cls, alpha, beta, delta) -> "FluxParams":
        return cls(FluxStrategy.CONSTANT, alpha, beta, delta)

    def on_edges(self, h_e, h):
        """Arrays (alpha, beta, delta) for edge lengths ``h_e``."""
        h_e = np.asarray(h_e, dtype=float)
        if self.strategy is FluxStrategy.CONSTANT:
            ones = np.ones_like(h_e)
            return self.a * ones, self.b * ones, self.d * ones
        ratio = h / h_e
        return self.a * ratio, self.b * ratio, np.minimum(self.d * ratio, 0.5)


def flux_params_on_edge(params: FluxParams, h_e: float, h: float):
    alpha, beta, delta = params.on_edges(np.array([h_e]), h)
    return float(alpha[0]), float(beta[0]), float(delta[0])


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Wavenumber, relative permittivity per element and boundary data.

    Boundary functions take points (N, 2) and outward normals (N, 2) and
    return complex values (N,).  Missing data means homogeneous.
    """

    kappa: float
    eps_r: np.ndarray | None = None
    g_dirichlet: BoundaryFn | None = None
    g_impedance: BoundaryFn | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("wavenumber must be positive")
        if self.eps_r is not None:
            eps = np.array(self.eps_r, dtype=float)
            if np.any(eps <= 0):
                raise ValueError("relative permittivity must be positive")
            eps.setflags(write=False)
            object.__setattr__(self, "eps_r", eps)

    def index(self, n_elements: int) -> np.ndarray:
        if self.eps_r is None:
            return np.ones(n_elements)
        if len(self.eps_r) != n_elements:
            raise ValueError("eps_r must have one value per element")
        return np.sqrt(self.eps_r)

    def space(self, mesh: Mesh, p: int) -> PlaneWaveSpace:
        return PlaneWaveSpace(mesh, p, self.kappa, self.index(mesh.n_triangles))


@dataclass(frozen=True, eq=False)
class DGSystem:
    """Assembled block-sparse matrix (BSR, p x p blocks) and load vector.

    Row ``space.dof(K, j)`` is the equation tested with basis function ``j``
    of element ``K``; columns index trial functions the same way.
    """

    matrix: sp.bsr_matrix
    load: np.ndarray
    space: PlaneWaveSpace
    params: FluxParams = field(default_factory=FluxParams.uwvf)

    @property
    def ndof(self) -> int:
        return self.space.ndof

    def block_pattern(self) -> set[tuple[int, int]]:
        """(test element, trial element) pairs carrying a stored block."""
        m = self.matrix
        rows = np.repeat(np.arange(m.indptr.size - 1), np.diff(m.indptr))
        return {(int(r), int(c)) for r, c in zip(rows, m.indices)}


# ---------------------------------------------------------------------- edge kernels
class _EdgeGeometry:
    """Per-edge quantities for a subset of edges."""

    def __init__(self, mesh: Mesh, ids: np.ndarray):
        self.ids = ids
        e = mesh.edges[ids]
        self.a = mesh.vertices[e[:, 0]]
        self.b = mesh.vertices[e[:, 1]]
        self.mid = 0.5 * (self.a + self.b)
        self.half = 0.5 * (self.b - self.a)
        self.length = mesh.edge_lengths[ids]
        self.normal = mesh.edge_normals[ids]
        self.elements = mesh.edge_elements[ids]


def _side(space: PlaneWaveSpace, geo: _EdgeGeometry, elements: np.ndarray):
    """Midpoint phases (E, p), wave vectors (E, p, 2), normal components (E, p)."""
    kap = space.kappa_local[elements]
    wave = kap[:, None, None] * space.directions[None, :, :]
    shift = geo.mid - space.centers[elements]
    phase = np.exp(1j * np.einsum("epd,ed->ep", wave, shift))
    an = np.einsum("pd,ed->ep", space.directions, geo.normal)
    return kap, wave, phase, an


def _products(geo, side_u, side_v):
    """Edge integrals of psi_u conj(psi_v): array (E, p_v, p_u)."""
    _, wu, phu, _ = side_u
    _, wv, phv, _ = side_v
    k = wu[:, None, :, :] - wv[:, :, None, :]                # (E, j, l, 2)
    arg = np.einsum("ejld,ed->ejl", k, geo.half)
    return (geo.length[:, None, None] * np.conj(phv)[:, :, None]
            * phu[:, None, :] * sinc(arg))


def _interior_blocks(space, geo, alpha, beta, kappa):
    """Blocks for (test side t, trial side s) in {0, 1}^2 as dict -> (E, p, p)."""
    sides = [_side(space, geo, geo.elements[:, 0]), _side(space, geo, geo.elements[:, 1])]
    sign = (1.0, -1.0)
    out = {}
    for t in (0, 1):
        kv, _, _, av = sides[t]
        for s in (0, 1):
            ku, _, _, au = sides[s]
            I = _products(geo, sides[s], sides[t])
            st = sign[s] * sign[t]
            coef = (-0.5j * sign[t] * kv[:, None, None] * av[:, :, None]
                    - 0.5j * sign[t] * ku[:, None, None] * au[:, None, :]
                    - (beta / (1j * kappa))[:, None, None] * st
                    * (ku * kv)[:, None, None] * av[:, :, None] * au[:, None, :]
                    + (1j * kappa * alpha * st)[:, None, None])
            out[t, s] = coef * I
    return out


def _impedance_blocks(space, geo, delta):
    side = _side(space, geo, geo.elements[:, 0])
    k, _, _, an = side
    I = _products(geo, side, side)
    d = delta[:, None, None]
    kk = k[:, None, None]
    au = an[:, None, :]
    av = an[:, :, None]
    coef = (-d * 1j * kk * au
            - (1.0 + d) * 1j * kk * av
            - d / (1j * kk) * kk * kk * au * av
            - 1j * kk * (1.0 - d))
    return coef * I


def _dirichlet_blocks(space, geo, alpha, kappa):
    side = _side(space, geo, geo.elements[:, 0])
    k, _, _, an = side
    I = _products(geo, side, side)
    coef = -1j * k[:, None, None] * an[:, None, :] + (1j * kappa * alpha)[:, None, None]
    return coef * I


def _boundary_load(space, geo, g, weight_fn, tol=1e-10):
    """Integrate ``g * weight_fn(active, conj v, conj dv/dn)`` with adaptive Gauss."""
    p = space.p

    def integrand(points, active):
        m, n, _ = points.shape
        flat = points.reshape(-1, 2)
        normals = np.repeat(geo.normal[active], n, axis=0)
        values, grads = space.basis(np.repeat(geo.elements[active, 0], n), flat)
        dn = np.einsum("npd,nd->np", grads, normals)
        vbar = np.conj(values).reshape(m, n, p)
        dnbar = np.conj(dn).reshape(m, n, p)
        gv = np.asarray(g(flat, normals), dtype=complex).reshape(m, n)
        return gv[:, :, None] * weight_fn(active, vbar, dnbar)
    return adaptive_edge_integral(integrand, geo.a, geo.b, tol=tol)


def _scatter(rows, cols, blocks, p, data_r, data_c, data_v):
    """Append dense (E, p, p) blocks at block coordinates (rows, cols)."""
    jj, ll = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    data_r.append((rows[:, None, None] * p + jj[None]).ravel())
    data_c.append((cols[:, None, None] * p + ll[None]).ravel())
    data_v.append(blocks.ravel())


def assemble(mesh: Mesh, space: PlaneWaveSpace, data: ProblemData,
             params: FluxParams | None = None) -> DGSystem:
    """Assemble the PWDG matrix and load vector on ``mesh``."""
    params = FluxParams.uwvf() if params is None else params
    if mesh.n_triangles == 0:
        raise ValueError("empty mesh")
    if space.mesh is not mesh or space.ndof != mesh.n_triangles * space.p:
        raise ValueError("space does not match mesh")
    p = space.p
    kappa = data.kappa
    h = mesh.h
    tags = mesh.edge_tags
    rows, cols, vals = [], [], []
    load = np.zeros(space.ndof, dtype=complex)

    inner = np.flatnonzero(tags == EdgeTag.INTERIOR)
    if len(inner):
        geo = _EdgeGeometry(mesh, inner)
        alpha, beta, _ = params.on_edges(geo.length, h)
        blocks = _interior_blocks(space, geo, alpha, beta, kappa)
        for (t, s), blk in blocks.items():
            _scatter(geo.elements[:, t], geo.elements[:, s], blk, p, rows, cols, vals)

    imp = np.flatnonzero(tags == EdgeTag.IMPEDANCE)
    if len(imp):
        geo = _EdgeGeometry(mesh, imp)
        _, _, delta = params.on_edges(geo.length, h)
        blk = _impedance_blocks(space, geo, delta)
        _scatter(geo.elements[:, 0], geo.elements[:, 0], blk, p, rows, cols, vals)
        if data.g_impedance is not None:
            # g v* [(1 - delta) + delta (k_v / k_e) (d_v . nu)] with k_v = k_e
            def weight(active, vbar, dnbar):
                d = delta[active][:, None, None]
                kap = space.kappa_local[geo.elements[active, 0]][:, None, None]
                return (1.0 - d) * vbar - d / (1j * kap) * dnbar
            contrib = _boundary_load(space, geo, data.g_impedance, weight)
            np.add.at(load, (geo.elements[:, 0, None] * p + np.arange(p)[None, :]), contrib)

    dirich = np.flatnonzero(tags == EdgeTag.DIRICHLET)
    if len(dirich):
        geo = _EdgeGeometry(mesh, dirich)
        alpha, _, _ = params.on_edges(geo.length, h)
        blk = _dirichlet_blocks(space, geo, alpha, kappa)
        _scatter(geo.elements[:, 0], geo.elements[:, 0], blk, p, rows, cols, vals)
        if data.g_dirichlet is not None:
            def weight(active, vbar, dnbar):
                a = alpha[active][:, None, None]
                return 1j * kappa * a * vbar - dnbar
            contrib = _boundary_load(space, geo, data.g_dirichlet, weight)
            np.add.at(load, (geo.elements[:, 0, None] * p + np.arange(p)[None, :]), contrib)

    n = space.ndof
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    matrix = A.tobsr(blocksize=(p, p))
    return DGSystem(matrix, load, space, params)
