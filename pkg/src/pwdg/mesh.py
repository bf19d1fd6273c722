"""Conforming triangle meshes, quality diagnostics and longest-edge bisection.

A :class:`Mesh` is immutable.  Topology (edges, adjacency, normals) is
derived lazily from the triangle list.  Boundary conditions and material
interfaces are stored as *marks* keyed by the sorted vertex pair of an edge,
so they survive refinement: a bisected edge passes its mark to both halves.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np


class EdgeTag(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    IMPEDANCE = 2


#: mark code for an interior edge lying on a material interface
INTERFACE = 3


class Domain(enum.Enum):
    LSHAPE = "LShape"
    UNIT_SQUARE_WITH_INTERFACE = "UnitSquareWithInterface"
    UNIT_SQUARE = "UnitSquare"

    @classmethod
    def parse(cls, token) -> "Domain":
        if isinstance(token, Domain):
            return token
        key = str(token).replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown domain {token!r}; expected one of "
                         f"{[m.value for m in cls]}")


@dataclass(frozen=True)
class Edge:
    vertices: tuple[int, int]
    length: float
    tag: EdgeTag
    elements: tuple[int, ...]
    normal: tuple[float, float]
    interface: bool = False


@dataclass(frozen=True)
class MeshQuality:
    h: float
    h_k: np.ndarray
    rho_k: np.ndarray
    sigma: float
    tau: float
    min_angle: float
    tau_a: float


def _pair(i, j) -> tuple[int, int]:
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with counterclockwise triangles.

    Attributes
    ----------
    vertices : ndarray (nv, 2)
    triangles : ndarray (nt, 3)
        Vertex indices, counterclockwise.
    regions : ndarray (nt,)
        Material region id per triangle, inherited on refinement.
    generation : ndarray (nt,)
        Number of bisections separating a triangle from the initial mesh.
    parent : ndarray (nt,)
        Index of the triangle in the previous mesh this one descends from
        (``-1`` for an initial mesh).
    marks : mapping
        Sorted vertex pair -> :class:`EdgeTag` value or :data:`INTERFACE`.
        Boundary edges without a mark are Dirichlet.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray | None = None
    generation: np.ndarray | None = None
    parent: np.ndarray | None = None
    marks: Mapping[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        nt = len(t)

        def _int_array(x, default):
            return np.full(nt, default, dtype=np.int64) if x is None else np.array(x, dtype=np.int64)

        arrays = {
            "vertices": v,
            "triangles": t,
            "regions": _int_array(self.regions, 0),
            "generation": _int_array(self.generation, 0),
            "parent": _int_array(self.parent, -1),
        }
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "marks", dict(self.marks))
        if nt == 0:
            raise ValueError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            raise ValueError("triangle references a missing vertex")
        if np.any(self.signed_areas <= 0.0):
            bad = np.flatnonzero(self.signed_areas <= 0.0)
            raise ValueError(f"triangles {bad[:5].tolist()} are not counterclockwise "
                             "or are degenerate")

    # ------------------------------------------------------------------ geometry
    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    # ------------------------------------------------------------------ topology
    @cached_property
    def _topology(self):
        tri = self.triangles
        nt = len(tri)
        half = np.stack([tri, np.roll(tri, -1, axis=1)], axis=2).reshape(-1, 2)
        key = np.sort(half, axis=1)
        edges, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        ne = len(edges)
        counts = np.bincount(inv, minlength=ne)
        if counts.max() > 2:
            raise ValueError("an edge is shared by more than two triangles")
        owner = np.repeat(np.arange(nt), 3)
        order = np.argsort(inv, kind="stable")
        starts = np.searchsorted(inv[order], np.arange(ne))
        first = order[starts]
        edge_elements = np.full((ne, 2), -1, dtype=np.int64)
        edge_elements[:, 0] = owner[first]
        two = counts == 2
        edge_elements[two, 1] = owner[order[starts[two] + 1]]
        # outward normal of the first triangle: its half-edge runs counterclockwise
        hv = half[first]
        d = self.vertices[hv[:, 1]] - self.vertices[hv[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]

        tag = np.where(two, EdgeTag.INTERIOR, EdgeTag.DIRICHLET).astype(np.int64)
        interface = np.zeros(ne, dtype=bool)
        if self.marks:
            index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
            for pair, mark in self.marks.items():
                i = index.get(pair)
                if i is None:
                    continue
                if mark == INTERFACE:
                    if two[i]:
                        interface[i] = True
                elif not two[i]:
                    tag[i] = int(mark)
        for arr in (edges, edge_elements, length, normal, tag, interface):
            arr.setflags(write=False)
        tri_edges = inv.reshape(nt, 3)
        tri_edges.setflags(write=False)
        return edges, edge_elements, tri_edges, length, normal, tag, interface

    @property
    def edges(self) -> np.ndarray:
        """Sorted vertex pairs, one row per edge, in lexicographic order."""
        return self._topology[0]

    @property
    def edge_elements(self) -> np.ndarray:
        """(ne, 2) adjacent triangles; second column is -1 on the boundary."""
        return self._topology[1]

    @property
    def tri_edges(self) -> np.ndarray:
        """(nt, 3) edge id of local edge k = (t[k], t[k+1])."""
        return self._topology[2]

    @property
    def edge_lengths(self) -> np.ndarray:
        return self._topology[3]

    @property
    def edge_normals(self) -> np.ndarray:
        """Unit normal pointing out of ``edge_elements[:, 0]``."""
        return self._topology[4]

    @property
    def edge_tags(self) -> np.ndarray:
        return self._topology[5]

    @property
    def edge_interface(self) -> np.ndarray:
        return self._topology[6]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge(self, i: int) -> Edge:
        i = int(i)
        els = tuple(int(k) for k in self.edge_elements[i] if k >= 0)
        return Edge(
            vertices=(int(self.edges[i, 0]), int(self.edges[i, 1])),
            length=float(self.edge_lengths[i]),
            tag=EdgeTag(int(self.edge_tags[i])),
            elements=els,
            normal=(float(self.edge_normals[i, 0]), float(self.edge_normals[i, 1])),
            interface=bool(self.edge_interface[i]),
        )

    def boundary_length(self) -> float:
        return float(self.edge_lengths[self.edge_elements[:, 1] < 0].sum())

    @property
    def h(self) -> float:
        return float(circumscribed_diameters(self).max())

    # ------------------------------------------------------------------ tagging
    def with_boundary(self, rule: Callable[[np.ndarray], int] | int) -> "Mesh":
        """Copy with boundary edges retagged.

        ``rule`` is either a fixed :class:`EdgeTag` or a function of the edge
        midpoint returning one.  Interface marks are kept.
        """
        marks = {k: v for k, v in self.marks.items() if v == INTERFACE}
        boundary = np.flatnonzero(self.edge_elements[:, 1] < 0)
        for i in boundary:
            a, b = self.edges[i]
            if callable(rule):
                mid = 0.5 * (self.vertices[a] + self.vertices[b])
                tag = EdgeTag(int(rule(mid)))
            else:
                tag = EdgeTag(int(rule))
            if tag == EdgeTag.INTERIOR:
                raise ValueError("boundary edge cannot be tagged interior")
            marks[(int(a), int(b))] = int(tag)
        return Mesh(self.vertices, self.triangles, self.regions, self.generation,
                    self.parent, marks)


# ---------------------------------------------------------------------- builders
_UNIT_SQUARES = {
    Domain.UNIT_SQUARE: [(0, 0)],
    Domain.UNIT_SQUARE_WITH_INTERFACE: [(-1, -1), (0, -1), (-1, 0), (0, 0)],
    Domain.LSHAPE: [(-1, -1), (-1, 0), (0, 0)],
}


def make_initial_mesh(domain, subdivisions: int = 1) -> Mesh:
    """Structured mesh made of unit squares, each split into an n x n grid.

    Every grid cell is cut along its (0,0)-(1,1) diagonal.  ``LShape`` covers
    (-1,1)^2 minus [0,1]x[-1,0]; ``UnitSquareWithInterface`` covers (-1,1)^2
    and marks the edges on y = 0 as material interface; ``UnitSquare`` is
    (0,1)^2.  All boundary edges start out Dirichlet.
    """
    domain = Domain.parse(domain)
    n = int(subdivisions)
    if n < 1:
        raise ValueError("subdivisions must be >= 1")
    index: dict[tuple[int, int], int] = {}
    coords: list[tuple[float, float]] = []

    def vid(i, j):
        key = (i, j)
        if key not in index:
            index[key] = len(coords)
            coords.append((i / n, j / n))
        return index[key]

    tris = []
    for (x0, y0) in _UNIT_SQUARES[domain]:
        for j in range(n):
            for i in range(n):
                gi, gj = x0 * n + i, y0 * n + j
                v00, v10 = vid(gi, gj), vid(gi + 1, gj)
                v11, v01 = vid(gi + 1, gj + 1), vid(gi, gj + 1)
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
    vertices = np.array(coords)
    triangles = np.array(tris)
    regions = None
    marks: dict[tuple[int, int], int] = {}
    if domain is Domain.UNIT_SQUARE_WITH_INTERFACE:
        cy = vertices[triangles].mean(axis=1)[:, 1]
        regions = (cy < 0).astype(np.int64)
        for i in range(-n, n):
            marks[_pair(index[(i, 0)], index[(i + 1, 0)])] = INTERFACE
    return Mesh(vertices, triangles, regions=regions, marks=marks)


# ---------------------------------------------------------------------- quality
def circumscribed_diameters(mesh: Mesh) -> np.ndarray:
    """Diameter of the smallest circle containing each triangle."""
    p = mesh.vertices[mesh.triangles]
    sq = np.stack([np.sum((p[:, (k + 1) % 3] - p[:, k]) ** 2, axis=1) for k in range(3)], axis=1)
    sq.sort(axis=1)
    a2, b2, c2 = sq[:, 0], sq[:, 1], sq[:, 2]
    longest = np.sqrt(c2)
    circum = np.sqrt(a2 * b2 * c2) / (2.0 * mesh.areas)
    # right or obtuse: the longest edge is a diameter of the enclosing circle
    return np.where(a2 + b2 <= c2 * (1 + 1e-12), longest, circum)


def inscribed_diameters(mesh: Mesh) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    perim = sum(np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3))
    return 4.0 * mesh.areas / perim


def min_angles(mesh: Mesh) -> np.ndarray:
    """Smallest interior angle of each triangle, in degrees."""
    p = mesh.vertices[mesh.triangles]
    out = np.full(len(p), np.inf)
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        w = p[:, (k + 2) % 3] - p[:, k]
        cos = np.sum(u * w, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        out = np.minimum(out, np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
    return out


def mesh_stats(mesh: Mesh) -> MeshQuality:
    h_k = circumscribed_diameters(mesh)
    rho_k = inscribed_diameters(mesh)
    inner = mesh.edge_elements[:, 1] >= 0
    k1, k2 = mesh.edge_elements[inner, 0], mesh.edge_elements[inner, 1]
    if len(k1):
        ratio = h_k[k1] / h_k[k2]
        tau = float(np.max(np.maximum(ratio, 1.0 / ratio)))
    else:
        tau = 1.0
    h = float(h_k.max())
    on_a = mesh.edge_elements[mesh.edge_tags == EdgeTag.IMPEDANCE, 0]
    tau_a = float(np.max(h / h_k[on_a])) if len(on_a) else float("nan")
    return MeshQuality(
        h=h,
        h_k=h_k,
        rho_k=rho_k,
        sigma=float(np.max(h_k / rho_k)),
        tau=tau,
        min_angle=float(min_angles(mesh).min()),
        tau_a=tau_a,
    )


# ---------------------------------------------------------------------- refinement
def refine_leb(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """Recursive longest-edge bisection.

    Each marked triangle is bisected through the midpoint of its longest
    edge.  Any triangle left with a hanging node is bisected the same way,
    repeatedly, until the mesh is conforming.  Triangles that are never
    touched keep their vertex triple; the output lists the descendants of
    input triangle 0 first, then of triangle 1, and so on, so ``parent`` is
    nondecreasing.
    """
    nt0 = mesh.n_triangles
    marked = sorted({int(i) for i in marked})
    if marked and (marked[0] < 0 or marked[-1] >= nt0):
        bad = [i for i in marked if i < 0 or i >= nt0]
        raise IndexError(f"unknown triangle ids {bad[:5]}")
    if not marked:
        return mesh

    coords = [tuple(v) for v in mesh.vertices.tolist()]
    tris: list[tuple[int, int, int]] = [tuple(t) for t in mesh.triangles.tolist()]
    alive = [True] * nt0
    root = list(range(nt0))
    depth = [0] * nt0
    edge_tris: dict[tuple[int, int], set[int]] = {}
    for t, (a, b, c) in enumerate(tris):
        for e in (_pair(a, b), _pair(b, c), _pair(c, a)):
            edge_tris.setdefault(e, set()).add(t)
    midpoint: dict[tuple[int, int], int] = {}
    marks = dict(mesh.marks)

    def sqlen(i, j):
        (x0, y0), (x1, y1) = coords[i], coords[j]
        return (x1 - x0) ** 2 + (y1 - y0) ** 2

    def longest(t):
        a, b, c = tris[t]
        local = [(sqlen(a, b), 0), (sqlen(b, c), 1), (sqlen(c, a), 2)]
        top = max(L for L, _ in local)
        cands = [k for L, k in local if L >= top * (1.0 - 1e-12)]
        verts = (a, b, c)
        # ties: lowest edge, i.e. lexicographically smallest vertex pair
        return min(cands, key=lambda k: _pair(verts[k], verts[(k + 1) % 3]))

    def bisect(t):
        k = longest(t)
        v = tris[t]
        a, b, c = v[k], v[(k + 1) % 3], v[(k + 2) % 3]
        e = _pair(a, b)
        m = midpoint.get(e)
        if m is None:
            m = len(coords)
            (x0, y0), (x1, y1) = coords[a], coords[b]
            coords.append((0.5 * (x0 + x1), 0.5 * (y0 + y1)))
            midpoint[e] = m
            mark = marks.pop(e, None)
            if mark is not None:
                marks[_pair(a, m)] = mark
                marks[_pair(m, b)] = mark
        alive[t] = False
        for f in (e, _pair(b, c), _pair(c, a)):
            edge_tris[f].discard(t)
        children = []
        for tri in ((a, m, c), (m, b, c)):
            s = len(tris)
            tris.append(tri)
            alive.append(True)
            root.append(root[t])
            depth.append(depth[t] + 1)
            for f in (_pair(tri[0], tri[1]), _pair(tri[1], tri[2]), _pair(tri[2], tri[0])):
                edge_tris.setdefault(f, set()).add(s)
            children.append(s)
        # the neighbour across e now has a hanging node
        for nb in sorted(edge_tris.get(e, ())):
            queue.append(nb)
        # children inherit edges (c, a) and (b, c) which may already be split
        if _pair(c, a) in midpoint:
            queue.append(children[0])
        if _pair(b, c) in midpoint:
            queue.append(children[1])

    queue: deque[int] = deque(marked)
    while queue:
        t = queue.popleft()
        if alive[t]:
            bisect(t)

    keep = [t for t in range(len(tris)) if alive[t]]
    keep.sort(key=lambda t: (root[t], t))
    triangles = np.array([tris[t] for t in keep], dtype=np.int64)
    parent = np.array([root[t] for t in keep], dtype=np.int64)
    generation = mesh.generation[parent] + np.array([depth[t] for t in keep])
    regions = mesh.regions[parent]
    out = Mesh(np.array(coords), triangles, regions=regions, generation=generation,
               parent=parent, marks={})
    live = {(int(a), int(b)) for a, b in out.edges}
    kept = {k: v for k, v in marks.items() if k in live}
    return Mesh(out.vertices, out.triangles, out.regions, out.generation, out.parent, kept)


def uniform_refine(mesh: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        mesh = refine_leb(mesh, range(mesh.n_triangles))
    return mesh


# ---------------------------------------------------------------------- text I/O
def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def dump_mesh(mesh: Mesh, path) -> None:
    """Write the ``pwdg-mesh v1`` ASCII format.

    Triangle tags are region ids.  Edge tags are 0 interior, 1 Dirichlet,
    2 impedance, 3 material interface.
    """
    lines = ["pwdg-mesh v1", f"V {mesh.n_vertices}"]
    lines += [f"{format_float(x)} {format_float(y)}" for x, y in mesh.vertices]
    lines.append(f"T {mesh.n_triangles}")
    lines += [f"{i} {j} {k} {r}" for (i, j, k), r in zip(mesh.triangles.tolist(), mesh.regions.tolist())]
    tags = np.where(mesh.edge_interface, INTERFACE, mesh.edge_tags)
    lines.append(f"E {mesh.n_edges}")
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.edges.tolist(), tags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    tokens = Path(path).read_text().split("\n")
    if tokens[0].strip() != "pwdg-mesh v1":
        raise ValueError(f"{path}: not a pwdg-mesh v1 file")
    pos = 1

    def section(name, width, conv):
        nonlocal pos
        head = tokens[pos].split()
        if head[0] != name:
            raise ValueError(f"{path}: expected section {name}, got {head[0]!r}")
        count = int(head[1])
        rows = [[conv(x) for x in tokens[pos + 1 + r].split()] for r in range(count)]
        pos += count + 1
        return np.array(rows).reshape(count, width)

    verts = section("V", 2, float)
    tris = section("T", 4, int)
    edges = section("E", 3, int)
    marks = {_pair(i, j): t for i, j, t in edges.tolist() if t != EdgeTag.INTERIOR}
    return Mesh(verts, tris[:, :3], regions=tris[:, 3], marks=marks)


def is_conforming(mesh: Mesh, perimeter: float) -> bool:
    """True when the boundary edges add up to the domain perimeter.

    A hanging node turns the split edge and both of its halves into
    single-owner edges, so any hanging node inflates the boundary length.
    """
    return math.isclose(mesh.boundary_length(), perimeter, rel_tol=1e-12)
